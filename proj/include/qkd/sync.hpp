#pragma once

#include <cstdint>
#include <vector>

#include "qkd/core.hpp"

namespace qkd {

/// Histogram of arrival-time differences dt = t_b - t_a - trial_offset,
/// binned over [-half_range, +half_range). bin_width divides 2*half_range.
struct CorrelationHistogram {
    std::int64_t trial_offset_ps = 0;
    std::int64_t bin_width_ps = 0;
    std::int64_t half_range_ps = 0;
    std::vector<std::uint64_t> counts;

    std::int64_t bin_center(std::size_t i) const {
        return -half_range_ps + static_cast<std::int64_t>(i) * bin_width_ps +
               bin_width_ps / 2;
    }
};

/// Count every cross-stream pair whose dt falls in range. Two-pointer
/// sweep, O(n + pairs). threads > 1 splits Alice's stream into chunks with
/// per-chunk partial histograms summed in order, so the result does not
/// depend on the thread count. threads = 0 picks a default capped by the
/// QKD_SIM_THREADS environment variable.
CorrelationHistogram build_histogram(const TagStream& alice, const TagStream& bob,
                                     std::int64_t trial_offset_ps,
                                     std::int64_t bin_width_ps,
                                     std::int64_t half_range_ps, int threads = 0);

struct SyncParams {
    std::int64_t coarse_bin_ps = 1'000'000;        ///< 1 us
    std::int64_t coarse_half_range_ps = 1'000'000'000; ///< +-1 ms
    std::int64_t fine_bin_ps = 100;
    double min_peak_sigma = 5.0; ///< peak must clear mean + sigma*sqrt(mean)
    int threads = 0;
};

struct OffsetEstimate {
    std::int64_t offset_ps = 0;
    double coarse_significance = 0.0; ///< (peak - mean) / sqrt(mean)
    double fine_significance = 0.0;
    CorrelationHistogram fine; ///< fine histogram centered on the offset
};

/// Recover the clock offset between the two streams: coarse correlation
/// argmax over +-coarse_half_range, then a fine pass at fine_bin around
/// the coarse peak, refined to sub-bin precision by a baseline-subtracted
/// centroid over the peak window. Argmax ties break toward the smaller
/// offset. Throws SyncFailed when either stage shows no significant peak.
OffsetEstimate estimate_offset(const TagStream& alice, const TagStream& bob,
                               const SyncParams& params = {});

/// Full width at half maximum of a histogram peak, by linear interpolation
/// between bin centers at half height above the median baseline. Result in
/// the histogram's time units (ps). Throws NoPeak when the histogram is
/// flat or the peak does not fall back to half height on both sides.
double fwhm(const CorrelationHistogram& h);

/// One matched coincidence: indices into the two streams plus the
/// offset-corrected time difference.
struct CoincidencePair {
    std::size_t alice_index;
    std::size_t bob_index;
    std::int64_t dt_ps; ///< t_b - offset - t_a
};

/// Greedy chronological matching with each tag used at most once. The
/// earliest unmatched tag (either stream, offset-corrected) matches the
/// available partner with the smallest |dt| inside the full window
/// (2*|dt| <= window_ps, boundary inclusive); ties break toward the
/// earlier partner. Tags with no partner stay unmatched. Pairs come out
/// ordered by Alice's timestamp.
std::vector<CoincidencePair> match_coincidences(const TagStream& alice,
                                                const TagStream& bob,
                                                std::int64_t offset_ps,
                                                std::int64_t window_ps);

} // namespace qkd
