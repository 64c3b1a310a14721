#pragma once

#include <stdexcept>
#include <string>

namespace kornforge {

// Failure categories surfaced by the library. Infeasible pipeline outcomes are
// not errors; they are reported through result types so callers can fall back.
enum class ErrorKind {
    Geometry,      // malformed lattice geometry (off-lattice segment, bad rectangle)
    Parameter,     // invalid numeric parameter (p out of range, bad theta)
    Domain,        // empty or degenerate domain (zero-area mask)
    Precondition,  // an operation contract was violated by the caller
    Coverage,      // a cover/partition failed to contain what it must
    Resolution,    // the grid is too coarse to represent the request
    Spec,          // scenario/config file is malformed or inconsistent
    Atlas,         // chart construction failed (cusps, non-Lipschitz corner)
    Construction,  // internal construction invariant failed
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

const char* to_string(ErrorKind kind) noexcept;

}  // namespace kornforge
