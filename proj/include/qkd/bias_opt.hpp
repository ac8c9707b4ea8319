#pragma once

#include <cstdint>
#include <vector>

#include "qkd/finite_key.hpp"

namespace qkd {

/// Parameters the secure key length is evaluated against while the basis
/// bias q = P(Z) varies. Error rates, inefficiencies and eps stay fixed;
/// only the basis split of the same raw count moves.
struct RateModel {
    std::int64_t raw_count = 0;
    double e_bx = 0.0;
    double e_bz = 0.0;
    double f_x = 1.1;
    double f_z = 1.12;
    double eps_per_basis = 0.003;
    bool asymptotic = false; ///< true: theta = 0 (infinite-size limit)
};

struct ExpectedCounts {
    std::int64_t n_x = 0;
    std::int64_t n_z = 0;
};

/// Expected sifted counts when both parties draw Z with probability q:
/// n_x = round(N (1-q)^2), n_z = round(N q^2).
ExpectedCounts expected_counts(std::int64_t raw_count, double q);

struct BiasCurvePoint {
    double q = 0.0;
    std::int64_t n_x = 0;
    std::int64_t n_z = 0;
    std::int64_t final_key_len = 0;
    double key_real = 0.0;    ///< unfloored key length; optimizer objective
    bool empty_basis = false; ///< a basis got zero expected bits
    bool insecure = false;    ///< no admissible theta at these counts
};

/// Secure key length at bias q under the model. An empty basis contributes
/// zero key: in finite mode the whole point yields zero (no sample remains
/// to bound the other basis's phase error); in asymptotic mode the other
/// basis still produces key.
BiasCurvePoint key_length_vs_bias(const RateModel& model, double q);

struct OptimizeResult {
    double q_opt = 0.5;
    BiasCurvePoint at_opt;
    /// True when golden-section refinement moved q_opt off the 1/1024
    /// hardware grid; the refined value is below comparator resolution.
    bool below_grid_resolution = false;
};

/// Maximize key length over q in [q_lo, q_hi] (default: the Z-majority
/// branch [0.5, 1]). Coarse grid at the hardware step 1/1024, ties broken
/// toward smaller q, then golden-section refinement on the bracketing
/// interval. The result never falls below the grid maximum. Throws
/// NoSecureBias when every grid point yields zero key.
OptimizeResult optimize_bias(const RateModel& model, double q_lo = 0.5,
                             double q_hi = 1.0);

/// Percentage gain of biased over unbiased operation at the same raw count:
/// 100 * (NR(q) / NR(0.5) - 1), from unfloored key lengths.
/// Throws NoSecureBias when the unbiased baseline yields zero key.
double improvement(const RateModel& model, double q);

/// Key lengths over an inclusive q grid, for curve export.
std::vector<BiasCurvePoint> bias_curve(const RateModel& model, double q_lo,
                                       double q_hi, std::int64_t steps);

} // namespace qkd
