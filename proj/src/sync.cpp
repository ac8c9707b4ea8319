#include "qkd/sync.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

#include "qkd/errors.hpp"

namespace qkd {

namespace {

int env_thread_cap() {
    const char* v = std::getenv("QKD_SIM_THREADS");
    if (!v || !*v) return 0;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (end == v || *end != '\0' || n < 1)
        throw ConfigError("QKD_SIM_THREADS must be a positive integer");
    return static_cast<int>(n);
}

int pick_threads(int requested, std::size_t work_items) {
    int n = requested > 0 ? requested
                          : static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    const int cap = env_thread_cap();
    if (cap > 0 && n > cap) n = cap;
    if (work_items < 4096) n = 1;
    if (static_cast<std::size_t>(n) > work_items && work_items > 0)
        n = static_cast<int>(work_items);
    return n;
}

std::int64_t stime(const TimeTag& t) { return static_cast<std::int64_t>(t.time_ps); }

// Accumulate dt counts for alice[lo, hi) against the whole of bob.
void accumulate(const TagStream& a, const TagStream& b, std::size_t lo,
                std::size_t hi, std::int64_t offset, std::int64_t bin,
                std::int64_t half, std::vector<std::uint64_t>& counts) {
    std::size_t jlo = 0;
    for (std::size_t i = lo; i < hi; ++i) {
        const std::int64_t ta = stime(a[i]);
        const std::int64_t dmin = ta + offset - half;
        while (jlo < b.size() && stime(b[jlo]) < dmin) ++jlo;
        for (std::size_t j = jlo; j < b.size(); ++j) {
            const std::int64_t dt = stime(b[j]) - ta - offset;
            if (dt >= half) break;
            counts[static_cast<std::size_t>((dt + half) / bin)]++;
        }
    }
}

struct Peak {
    std::size_t index;
    double significance;
};

// Argmax with ties toward the smaller bin center; significance against the
// flat-background expectation.
Peak find_peak(const CorrelationHistogram& h) {
    std::uint64_t total = 0;
    std::size_t best = 0;
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        total += h.counts[i];
        if (h.counts[i] > h.counts[best]) best = i;
    }
    if (total == 0) throw SyncFailed("correlation histogram is empty");
    const double mean =
        static_cast<double>(total) / static_cast<double>(h.counts.size());
    const double sig =
        (static_cast<double>(h.counts[best]) - mean) / std::sqrt(mean);
    return {best, sig};
}

// Sub-bin peak position: baseline-subtracted center of mass over a window
// covering the coincidence peak, recentered once. The argmax bin alone
// quantizes to the bin width, and when the peak spans many bins the
// neighboring counts tie within Poisson noise, so the raw argmax wanders
// a bin either way and can miss the true offset by more than one bin.
std::int64_t refine_peak(const CorrelationHistogram& h, std::size_t peak) {
    std::vector<std::uint64_t> sorted(h.counts);
    const std::size_t mid = sorted.size() / 2;
    std::nth_element(sorted.begin(),
                     sorted.begin() + static_cast<std::ptrdiff_t>(mid),
                     sorted.end());
    const double baseline = static_cast<double>(sorted[mid]);
    // detector jitter puts the peak FWHM near 1 ns; never below one bin
    const double half_window =
        std::max(1000.0, static_cast<double>(h.bin_width_ps));

    double center = static_cast<double>(h.bin_center(peak));
    for (int pass = 0; pass < 2; ++pass) {
        double weight = 0.0, moment = 0.0;
        for (std::size_t i = 0; i < h.counts.size(); ++i) {
            const double x = static_cast<double>(h.bin_center(i));
            if (std::abs(x - center) > half_window) continue;
            const double c = static_cast<double>(h.counts[i]) - baseline;
            if (c <= 0.0) continue;
            weight += c;
            moment += c * x;
        }
        if (weight <= 0.0) return h.bin_center(peak);
        center = moment / weight;
    }
    return std::llround(center);
}

} // namespace

CorrelationHistogram build_histogram(const TagStream& alice, const TagStream& bob,
                                     std::int64_t trial_offset_ps,
                                     std::int64_t bin_width_ps,
                                     std::int64_t half_range_ps, int threads) {
    if (bin_width_ps <= 0 || half_range_ps <= 0)
        throw DomainError("histogram bin width and range must be positive");
    if ((2 * half_range_ps) % bin_width_ps != 0)
        throw DomainError("bin width must divide the histogram range");
    validate_stream(alice, "alice");
    validate_stream(bob, "bob");

    CorrelationHistogram h;
    h.trial_offset_ps = trial_offset_ps;
    h.bin_width_ps = bin_width_ps;
    h.half_range_ps = half_range_ps;
    h.counts.assign(static_cast<std::size_t>(2 * half_range_ps / bin_width_ps), 0);

    const int nthreads = pick_threads(threads, alice.size());
    if (nthreads <= 1) {
        accumulate(alice, bob, 0, alice.size(), trial_offset_ps, bin_width_ps,
                   half_range_ps, h.counts);
        return h;
    }

    std::vector<std::vector<std::uint64_t>> partial(
        static_cast<std::size_t>(nthreads),
        std::vector<std::uint64_t>(h.counts.size(), 0));
    std::vector<std::thread> pool;
    const std::size_t chunk = (alice.size() + nthreads - 1) / nthreads;
    for (int t = 0; t < nthreads; ++t) {
        const std::size_t lo = std::min(alice.size(), t * chunk);
        const std::size_t hi = std::min(alice.size(), lo + chunk);
        pool.emplace_back([&, t, lo, hi] {
            accumulate(alice, bob, lo, hi, trial_offset_ps, bin_width_ps,
                       half_range_ps, partial[static_cast<std::size_t>(t)]);
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& p : partial)
        for (std::size_t i = 0; i < h.counts.size(); ++i) h.counts[i] += p[i];
    return h;
}

OffsetEstimate estimate_offset(const TagStream& alice, const TagStream& bob,
                               const SyncParams& params) {
    if (alice.empty() || bob.empty())
        throw SyncFailed("cannot synchronize an empty stream");
    if (params.coarse_bin_ps % params.fine_bin_ps != 0)
        throw DomainError("fine bin must divide the coarse bin");

    const CorrelationHistogram coarse =
        build_histogram(alice, bob, 0, params.coarse_bin_ps,
                        params.coarse_half_range_ps, params.threads);
    const Peak cp = find_peak(coarse);
    if (cp.significance < params.min_peak_sigma)
        throw SyncFailed("no significant coarse correlation peak (sigma = " +
                         std::to_string(cp.significance) + ")");
    const std::int64_t coarse_center = coarse.bin_center(cp.index);

    OffsetEstimate est;
    est.fine = build_histogram(alice, bob, coarse_center, params.fine_bin_ps,
                               params.coarse_bin_ps, params.threads);
    const Peak fp = find_peak(est.fine);
    if (fp.significance < params.min_peak_sigma)
        throw SyncFailed("no significant fine correlation peak (sigma = " +
                         std::to_string(fp.significance) + ")");
    est.offset_ps = coarse_center + refine_peak(est.fine, fp.index);
    est.coarse_significance = cp.significance;
    est.fine_significance = fp.significance;
    return est;
}

double fwhm(const CorrelationHistogram& h) {
    if (h.counts.size() < 3) throw NoPeak("histogram too small");
    std::vector<std::uint64_t> sorted(h.counts);
    const std::size_t mid = sorted.size() / 2;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid),
                     sorted.end());
    const double baseline = static_cast<double>(sorted[mid]);

    std::size_t peak = 0;
    for (std::size_t i = 1; i < h.counts.size(); ++i)
        if (h.counts[i] > h.counts[peak]) peak = i;
    const double peak_v = static_cast<double>(h.counts[peak]);
    if (peak_v <= baseline) throw NoPeak("histogram has no peak above baseline");
    const double half = baseline + 0.5 * (peak_v - baseline);

    const double bw = static_cast<double>(h.bin_width_ps);
    auto center = [&](std::size_t i) { return static_cast<double>(h.bin_center(i)); };

    double left = 0.0;
    bool found = false;
    for (std::size_t j = peak; j-- > 0;) {
        const double c = static_cast<double>(h.counts[j]);
        if (c <= half) {
            const double next = static_cast<double>(h.counts[j + 1]);
            left = center(j) + (half - c) / (next - c) * bw;
            found = true;
            break;
        }
    }
    if (!found) throw NoPeak("peak does not fall to half height on the left");

    double right = 0.0;
    found = false;
    for (std::size_t j = peak + 1; j < h.counts.size(); ++j) {
        const double c = static_cast<double>(h.counts[j]);
        if (c <= half) {
            const double prev = static_cast<double>(h.counts[j - 1]);
            right = center(j) - (half - c) / (prev - c) * bw;
            found = true;
            break;
        }
    }
    if (!found) throw NoPeak("peak does not fall to half height on the right");
    return right - left;
}

std::vector<CoincidencePair> match_coincidences(const TagStream& alice,
                                                const TagStream& bob,
                                                std::int64_t offset_ps,
                                                std::int64_t window_ps) {
    if (window_ps < 0) throw DomainError("window_ps must be >= 0");
    validate_stream(alice, "alice");
    validate_stream(bob, "bob");

    const std::size_t na = alice.size(), nb = bob.size();
    std::vector<bool> used_a(na, false), used_b(nb, false);
    std::vector<CoincidencePair> out;

    auto tb = [&](std::size_t j) { return stime(bob[j]) - offset_ps; };

    // Greedy sweep. Invariant: a tag that was processed without finding a
    // partner can never lie inside a later tag's window, so the pointers
    // only move forward.
    std::size_t ia = 0, ib = 0;
    while (true) {
        while (ia < na && used_a[ia]) ++ia;
        while (ib < nb && used_b[ib]) ++ib;
        if (ia >= na || ib >= nb) break;
        const std::int64_t ta = stime(alice[ia]);
        const std::int64_t tbv = tb(ib);
        if (ta <= tbv) {
            std::size_t best = nb;
            std::int64_t best_abs = 0;
            for (std::size_t j = ib; j < nb; ++j) {
                if (used_b[j]) continue;
                const std::int64_t d = tb(j) - ta;
                if (2 * d > window_ps) break;
                const std::int64_t ad = d < 0 ? -d : d;
                if (2 * ad <= window_ps && (best == nb || ad < best_abs)) {
                    best = j;
                    best_abs = ad;
                }
            }
            if (best < nb) {
                used_a[ia] = used_b[best] = true;
                out.push_back({ia, best, tb(best) - ta});
            } else {
                ++ia; // no partner now or ever
            }
        } else {
            std::size_t best = na;
            std::int64_t best_abs = 0;
            for (std::size_t i = ia; i < na; ++i) {
                if (used_a[i]) continue;
                const std::int64_t d = stime(alice[i]) - tbv;
                if (2 * d > window_ps) break;
                const std::int64_t ad = d < 0 ? -d : d;
                if (2 * ad <= window_ps && (best == na || ad < best_abs)) {
                    best = i;
                    best_abs = ad;
                }
            }
            if (best < na) {
                used_a[best] = used_b[ib] = true;
                out.push_back({best, ib, tbv - stime(alice[best])});
            } else {
                ++ib;
            }
        }
    }

    std::sort(out.begin(), out.end(), [](const CoincidencePair& l,
                                         const CoincidencePair& r) {
        return l.alice_index < r.alice_index;
    });
    return out;
}

} // namespace qkd
