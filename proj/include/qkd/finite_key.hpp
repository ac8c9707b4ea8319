#pragma once

#include <cstdint>

namespace qkd {

/// Binary entropy H(x) = -x log2 x - (1-x) log2 (1-x), H(0) = H(1) = 0.
/// Throws DomainError outside [0,1].
double binary_entropy(double x);

/// Large-deviation exponent for estimating one basis's phase error rate
/// from the other basis's measured bit error rate, by sampling without
/// replacement:
///
///   xi(e_b, q, theta) = H(e_b + theta - q*theta)
///                       - q*H(e_b) - (1-q)*H(e_b + theta)
///
/// q is the sample fraction n_sample / (n_sample + n_estimated).
/// xi(e_b, q, 0) = 0; xi grows with theta while arguments stay in [0,1].
double xi(double e_b, double q, double theta);

/// Probability bound that the estimated basis's phase error rate exceeds
/// e_b + theta, where e_b was measured on n_sample sifted bits and the
/// bound covers the other n_estimated bits:
///
///   P < sqrt(n) / sqrt(n_sample * n_estimated * e_b (1 - e_b))
///       * 2^(-n * xi(e_b, n_sample/n, theta)),   n = n_sample + n_estimated
///
/// Capped at 1. The mirrored basis uses the same call with roles swapped.
/// Throws EmptyBasis on a zero count, DegenerateErrorRate on e_b in {0,1}.
double p_theta(std::int64_t n_sample, std::int64_t n_estimated, double e_b,
               double theta);

/// Smallest theta in [0, 0.5 - e_b] with p_theta(theta) <= eps, located by
/// bisection (tolerance 1e-7 on theta, then tightened until the achieved
/// bound sits within [0.999*eps, eps]). Returns 0 when the bound already
/// holds at theta = 0. Throws InsecureRegime when no theta qualifies.
double solve_theta(std::int64_t n_sample, std::int64_t n_estimated, double e_b,
                   double eps);

struct FiniteKeyInput {
    std::int64_t n_x = 0; ///< sifted bits in the X basis
    std::int64_t n_z = 0; ///< sifted bits in the Z basis
    double e_bx = 0.0;    ///< measured X-basis bit error rate, [0, 0.5]
    double e_bz = 0.0;    ///< measured Z-basis bit error rate, [0, 0.5]
    double f_x = 1.1;     ///< error-correction inefficiency, X
    double f_z = 1.12;    ///< error-correction inefficiency, Z
    double eps_per_basis = 0.003; ///< failure probability per basis estimate
};

struct FiniteKeyResult {
    double theta_x = 0.0; ///< deviation solved from the X-sample bound
    double theta_z = 0.0; ///< deviation solved from the Z-sample bound
    double k_ec = 0.0;    ///< error-correction cost, bits
    double k_pr = 0.0;    ///< privacy-amplification cost, bits
    std::int64_t n_sift = 0;
    std::int64_t final_key_len = 0; ///< floor(n_sift - k_ec - k_pr), >= 0
    double eps_ph = 0.0;  ///< achieved total phase-estimate failure probability
    bool clamped_ebx = false; ///< e_bx raised to 1/n inside the bound only
    bool clamped_ebz = false;
    bool insecure_x = false; ///< e_bz + theta_z reached 0.5; X bits yield nothing
    bool insecure_z = false; ///< e_bx + theta_x reached 0.5; Z bits yield nothing
};

/// Finite-size secure key length:
///
///   k_ec = n_x f_x H(e_bx) + n_z f_z H(e_bz)
///   k_pr = n_x H(e_bz + theta_z) + n_z H(e_bx + theta_x)
///   final = max(0, floor(n_x + n_z - k_ec - k_pr))
///
/// theta_x is solved from the X-measured bound (it limits the Z bits'
/// phase error) and theta_z from the mirrored call. Entropy arguments cap
/// at 0.5; a capped basis contributes zero key and is flagged. Intermediate
/// quantities stay real; floor() is applied once at the end.
FiniteKeyResult key_length(const FiniteKeyInput& in);

/// Secure bits per raw coincidence.
double key_rate(std::int64_t final_key_len, std::int64_t raw_count);

} // namespace qkd
