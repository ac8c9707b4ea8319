#include "qkd/finite_key.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qkd/errors.hpp"

namespace qkd {

namespace {

constexpr double kLog2e = 1.4426950408889634073599246810019;

void require_counts(std::int64_t n_sample, std::int64_t n_estimated) {
    if (n_sample <= 0) throw EmptyBasis("sample basis holds no sifted bits");
    if (n_estimated <= 0) throw EmptyBasis("estimated basis holds no sifted bits");
}

} // namespace

double binary_entropy(double x) {
    if (!(x >= 0.0 && x <= 1.0))
        throw DomainError("binary_entropy argument " + std::to_string(x) +
                          " outside [0,1]");
    if (x == 0.0 || x == 1.0) return 0.0;
    return -(x * std::log(x) + (1.0 - x) * std::log(1.0 - x)) * kLog2e;
}

double xi(double e_b, double q, double theta) {
    if (!(q >= 0.0 && q <= 1.0))
        throw DomainError("xi sample fraction outside [0,1]");
    return binary_entropy(e_b + theta - q * theta) - q * binary_entropy(e_b) -
           (1.0 - q) * binary_entropy(e_b + theta);
}

double p_theta(std::int64_t n_sample, std::int64_t n_estimated, double e_b,
               double theta) {
    require_counts(n_sample, n_estimated);
    if (e_b == 0.0 || e_b == 1.0)
        throw DegenerateErrorRate("fluctuation bound degenerates at e_b = " +
                                  std::to_string(e_b));
    if (!(e_b > 0.0 && e_b < 1.0))
        throw DomainError("e_b outside (0,1)");
    const double n = static_cast<double>(n_sample) + static_cast<double>(n_estimated);
    const double q = static_cast<double>(n_sample) / n;
    const double pref =
        std::sqrt(n) / std::sqrt(static_cast<double>(n_sample) *
                                 static_cast<double>(n_estimated) * e_b * (1.0 - e_b));
    const double bound = pref * std::exp2(-n * xi(e_b, q, theta));
    return std::min(bound, 1.0);
}

double solve_theta(std::int64_t n_sample, std::int64_t n_estimated, double e_b,
                   double eps) {
    require_counts(n_sample, n_estimated);
    if (!(eps > 0.0 && eps < 1.0)) throw DomainError("eps outside (0,1)");
    const double hi_end = 0.5 - e_b;
    if (hi_end < 0.0) throw DomainError("e_b above 0.5");
    if (p_theta(n_sample, n_estimated, e_b, 0.0) <= eps) return 0.0;
    if (p_theta(n_sample, n_estimated, e_b, hi_end) > eps)
        throw InsecureRegime("no theta in [0, 0.5 - e_b] meets eps");
    double lo = 0.0, hi = hi_end;
    while (hi - lo > 1e-7) {
        const double mid = 0.5 * (lo + hi);
        if (p_theta(n_sample, n_estimated, e_b, mid) > eps)
            lo = mid;
        else
            hi = mid;
    }
    // Round trip: the returned theta must achieve the bound snugly.
    for (int i = 0; i < 60 && p_theta(n_sample, n_estimated, e_b, hi) < 0.999 * eps;
         ++i) {
        const double mid = 0.5 * (lo + hi);
        if (p_theta(n_sample, n_estimated, e_b, mid) > eps)
            lo = mid;
        else
            hi = mid;
    }
    return hi;
}

FiniteKeyResult key_length(const FiniteKeyInput& in) {
    if (in.n_x <= 0) throw EmptyBasis("X basis holds no sifted bits");
    if (in.n_z <= 0) throw EmptyBasis("Z basis holds no sifted bits");
    if (!(in.e_bx >= 0.0 && in.e_bx <= 0.5) || !(in.e_bz >= 0.0 && in.e_bz <= 0.5))
        throw DomainError("error rates must lie in [0, 0.5]");
    if (!(in.f_x >= 1.0 && in.f_z >= 1.0))
        throw DomainError("error-correction inefficiencies must be >= 1");
    if (!(in.eps_per_basis > 0.0 && in.eps_per_basis < 1.0))
        throw DomainError("eps_per_basis outside (0,1)");

    FiniteKeyResult r;
    const std::int64_t n = in.n_x + in.n_z;
    const double floor_rate = 1.0 / static_cast<double>(n);

    // The clamp keeps the fluctuation bound finite at e_b = 0; entropy
    // costs below still use the measured rates.
    double ex = in.e_bx;
    if (ex < floor_rate) { ex = floor_rate; r.clamped_ebx = true; }
    double ez = in.e_bz;
    if (ez < floor_rate) { ez = floor_rate; r.clamped_ebz = true; }

    // At e_b = 0.5 the estimate "phase error <= 0.5" is vacuous: it never
    // fails (achieved probability 0) and the basis it covers yields nothing.
    double px_achieved, pz_achieved;
    if (ex >= 0.5) {
        r.theta_x = 0.0;
        px_achieved = 0.0;
        r.insecure_z = true;
    } else {
        r.theta_x = solve_theta(in.n_x, in.n_z, ex, in.eps_per_basis);
        px_achieved = p_theta(in.n_x, in.n_z, ex, r.theta_x);
    }
    if (ez >= 0.5) {
        r.theta_z = 0.0;
        pz_achieved = 0.0;
        r.insecure_x = true;
    } else {
        r.theta_z = solve_theta(in.n_z, in.n_x, ez, in.eps_per_basis);
        pz_achieved = p_theta(in.n_z, in.n_x, ez, r.theta_z);
    }

    const double arg_z = in.e_bx + r.theta_x; // phase error bound on Z bits
    const double arg_x = in.e_bz + r.theta_z; // phase error bound on X bits
    if (arg_z >= 0.5 - 1e-12) r.insecure_z = true;
    if (arg_x >= 0.5 - 1e-12) r.insecure_x = true;

    r.k_ec = static_cast<double>(in.n_x) * in.f_x * binary_entropy(in.e_bx) +
             static_cast<double>(in.n_z) * in.f_z * binary_entropy(in.e_bz);
    r.k_pr = static_cast<double>(in.n_x) * binary_entropy(std::min(arg_x, 0.5)) +
             static_cast<double>(in.n_z) * binary_entropy(std::min(arg_z, 0.5));
    r.n_sift = n;
    r.eps_ph = px_achieved + pz_achieved;

    const double net = static_cast<double>(n) - r.k_ec - r.k_pr;
    r.final_key_len = net > 0.0 ? static_cast<std::int64_t>(std::floor(net)) : 0;
    return r;
}

double key_rate(std::int64_t final_key_len, std::int64_t raw_count) {
    if (raw_count <= 0) throw DomainError("raw_count must be positive");
    if (final_key_len < 0) throw DomainError("final_key_len must be >= 0");
    return static_cast<double>(final_key_len) / static_cast<double>(raw_count);
}

} // namespace qkd
