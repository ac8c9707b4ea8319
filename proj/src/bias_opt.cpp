#include "qkd/bias_opt.hpp"

#include <algorithm>
#include <cmath>

#include "qkd/bias.hpp"
#include "qkd/errors.hpp"

namespace qkd {

namespace {

void require_model(const RateModel& m) {
    if (m.raw_count <= 0) throw DomainError("raw_count must be positive");
    if (!(m.e_bx >= 0.0 && m.e_bx <= 0.5) || !(m.e_bz >= 0.0 && m.e_bz <= 0.5))
        throw DomainError("error rates must lie in [0, 0.5]");
}

double real_key(const RateModel& m, std::int64_t n_x, std::int64_t n_z,
                BiasCurvePoint& p) {
    if (m.asymptotic) {
        // theta = 0; an empty basis simply contributes no terms.
        const double kx =
            n_x > 0 ? static_cast<double>(n_x) * (1.0 - m.f_x * binary_entropy(m.e_bx) -
                                                  binary_entropy(m.e_bz))
                    : 0.0;
        const double kz =
            n_z > 0 ? static_cast<double>(n_z) * (1.0 - m.f_z * binary_entropy(m.e_bz) -
                                                  binary_entropy(m.e_bx))
                    : 0.0;
        return std::max(0.0, kx + kz);
    }
    if (n_x == 0 || n_z == 0) {
        // Without a sample basis no phase-error bound exists.
        p.empty_basis = true;
        return 0.0;
    }
    FiniteKeyInput in;
    in.n_x = n_x;
    in.n_z = n_z;
    in.e_bx = m.e_bx;
    in.e_bz = m.e_bz;
    in.f_x = m.f_x;
    in.f_z = m.f_z;
    in.eps_per_basis = m.eps_per_basis;
    try {
        const FiniteKeyResult r = key_length(in);
        return std::max(0.0, static_cast<double>(r.n_sift) - r.k_ec - r.k_pr);
    } catch (const InsecureRegime&) {
        p.insecure = true;
        return 0.0;
    }
}

} // namespace

ExpectedCounts expected_counts(std::int64_t raw_count, double q) {
    if (raw_count <= 0) throw DomainError("raw_count must be positive");
    if (!(q >= 0.0 && q <= 1.0)) throw InvalidProbability("q outside [0,1]");
    const double n = static_cast<double>(raw_count);
    ExpectedCounts c;
    c.n_x = std::llround(n * (1.0 - q) * (1.0 - q));
    c.n_z = std::llround(n * q * q);
    return c;
}

BiasCurvePoint key_length_vs_bias(const RateModel& model, double q) {
    require_model(model);
    const ExpectedCounts c = expected_counts(model.raw_count, q);
    BiasCurvePoint p;
    p.q = q;
    p.n_x = c.n_x;
    p.n_z = c.n_z;
    if (c.n_x == 0 || c.n_z == 0) p.empty_basis = true;
    p.key_real = real_key(model, c.n_x, c.n_z, p);
    p.final_key_len = static_cast<std::int64_t>(std::floor(p.key_real));
    return p;
}

OptimizeResult optimize_bias(const RateModel& model, double q_lo, double q_hi) {
    require_model(model);
    if (!(q_lo >= 0.0 && q_hi <= 1.0 && q_lo < q_hi))
        throw DomainError("bias search domain must satisfy 0 <= q_lo < q_hi <= 1");

    const auto k_lo = static_cast<std::int64_t>(std::ceil(q_lo * kBiasRange - 1e-9));
    const auto k_hi = static_cast<std::int64_t>(std::floor(q_hi * kBiasRange + 1e-9));

    double best_q = q_lo;
    double best_v = -1.0;
    for (std::int64_t k = k_lo; k <= k_hi; ++k) {
        const double q = static_cast<double>(k) / kBiasRange;
        const BiasCurvePoint p = key_length_vs_bias(model, q);
        if (p.key_real > best_v) {
            best_v = p.key_real;
            best_q = q;
        }
    }
    if (best_v <= 0.0)
        throw NoSecureBias("every bias on the grid yields zero secure key");

    // Golden-section refinement on the bracketing interval around the grid
    // maximum. The objective is piecewise constant (counts are integers),
    // so the section settles on the best plateau.
    const double step = 1.0 / kBiasRange;
    double a = std::max(q_lo, best_q - step);
    double b = std::min(q_hi, best_q + step);
    const double gr = 0.6180339887498948482;
    double c = b - gr * (b - a);
    double d = a + gr * (b - a);
    double fc = key_length_vs_bias(model, c).key_real;
    double fd = key_length_vs_bias(model, d).key_real;
    for (int it = 0; it < 60; ++it) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = key_length_vs_bias(model, c).key_real;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = key_length_vs_bias(model, d).key_real;
        }
    }
    const double q_ref = 0.5 * (a + b);
    const double v_ref = key_length_vs_bias(model, q_ref).key_real;

    OptimizeResult r;
    if (v_ref > best_v) {
        r.q_opt = q_ref;
        r.below_grid_resolution = true;
    } else {
        r.q_opt = best_q;
    }
    r.at_opt = key_length_vs_bias(model, r.q_opt);
    return r;
}

double improvement(const RateModel& model, double q) {
    require_model(model);
    const double base = key_length_vs_bias(model, 0.5).key_real;
    if (base <= 0.0)
        throw NoSecureBias("unbiased baseline yields zero secure key");
    const double at_q = key_length_vs_bias(model, q).key_real;
    return 100.0 * (at_q / base - 1.0);
}

std::vector<BiasCurvePoint> bias_curve(const RateModel& model, double q_lo,
                                       double q_hi, std::int64_t steps) {
    if (steps < 1) throw DomainError("steps must be >= 1");
    std::vector<BiasCurvePoint> out;
    out.reserve(static_cast<std::size_t>(steps) + 1);
    for (std::int64_t i = 0; i <= steps; ++i) {
        const double q =
            q_lo + (q_hi - q_lo) * static_cast<double>(i) / static_cast<double>(steps);
        out.push_back(key_length_vs_bias(model, q));
    }
    return out;
}

} // namespace qkd
