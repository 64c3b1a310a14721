#pragma once

#include "kornforge/blending.hpp"
#include "kornforge/modification.hpp"
#include "kornforge/rigid.hpp"

namespace kornforge {

struct LocalKornConfig {
    double theta = 0.25;
    // Shrink factor in mu_bar = max{mu - c_shrink * H1(jumps), 0}. Zero picks
    // the smallest factor that keeps the scale-selection gate open whenever
    // the target square is positive: 4 + 24 / theta (the cover's diameter sum
    // never exceeds the jump length for lattice cracks, and the gate needs
    // mu_tilde - mu_bar >= (24 / theta) * sum d plus the 3 * sum d shrink).
    double c_shrink = 0.0;
    double lambda = 0.5;  // slack parameter echoed into the cover diagnostics
    int fit_margin = 2;   // annulus width for the jump modification refits
};

// One full local run: modify the jumps away, classify and heal the remaining
// oscillation, and measure how well a single rigid motion matches the original
// field outside the exceptional set.
struct LocalKornReport {
    RigidMotion rigid;       // a(x) = A x + b with A the skew matrix of omega
    RegionMask exceptional;  // E; the whole square when fallback is set
    double shrunk_mu = 0.0;  // mu_bar, half-side of the measured square
    double modified_mu = 0.0;  // half-side left after the jump modification
    double c_shrink = 0.0;     // shrink factor actually used
    double p_internal = 0.0;   // chaining exponent handed to the healing stage
    double residual_u_q = 0.0;    // ||u - a||_{L^q} outside E
    double residual_grad_p = 0.0; // ||grad u - A||_{L^p} outside E, uncut cells
    double elastic = 0.0;         // ||e(u)||_{L^2} over the whole square
    double jump_length = 0.0;     // H1 measure of the jumping edges
    double const_u = 0.0;    // residual_u_q / (mu^{2/q} * elastic), 0 when 0/0
    double const_grad = 0.0; // residual_grad_p / (mu^{2/p-1} * elastic)
    double excluded_area = 0.0;    // jump-adjacent cells dropped from the
                                   // gradient norm
    double variation_proxy = 0.0;  // finite-variation proxy of the restricted
                                   // field: bulk gradient mass + jumps kept in
                                   // the domain + the cut along the boundary
                                   // of E
    bool infeasible = false;  // scale-selection gate failed
    bool fallback = false;    // E is the whole square, residuals vacuous
};

// Chaining exponent for a requested (p, q) pair: max(p, 2q / (q + 2)), pushed
// into the open interval the healing diagnostics accept.
double chaining_exponent(double p, double q);

// Runs the whole local pipeline on the field's square. Requires p in [1, 2)
// and q in [1, inf); the residuals are always measured on the original field.
LocalKornReport local_estimate(const DisplacementField& field, double p, double q,
                               const LocalKornConfig& config = {});

}  // namespace kornforge
