#pragma once

#include <cstdint>
#include <vector>

#include "qkd/core.hpp"
#include "qkd/sync.hpp"

namespace qkd {

/// A matched coincidence with both detector channels resolved, sufficient
/// for sifting without access to the original streams.
struct ResolvedPair {
    std::uint64_t alice_time_ps;
    std::uint8_t alice_channel;
    std::uint64_t bob_time_ps;
    std::uint8_t bob_channel;
    std::int64_t dt_ps;
};

/// One sifted bit: both parties measured in the same basis.
struct SiftedBit {
    std::uint64_t alice_time_ps;
    Basis basis;
    std::uint8_t alice_bit;
    std::uint8_t bob_bit;
};

struct SiftResult {
    std::vector<SiftedBit> bits; ///< ordered by Alice's timestamp
    std::int64_t raw_count = 0;  ///< matched pairs before basis comparison
    std::int64_t n_x = 0;
    std::int64_t n_z = 0;
};

/// Keep same-basis pairs, discard the rest. Output order follows Alice's
/// timestamps regardless of input order.
SiftResult sift(const std::vector<ResolvedPair>& pairs);

/// Convenience overload resolving channels from the streams.
SiftResult sift(const TagStream& alice, const TagStream& bob,
                const std::vector<CoincidencePair>& pairs);

std::vector<ResolvedPair> resolve_pairs(const TagStream& alice,
                                        const TagStream& bob,
                                        const std::vector<CoincidencePair>& pairs);

struct ErrorRates {
    std::int64_t n_x = 0;
    std::int64_t n_z = 0;
    std::int64_t errors_x = 0;
    std::int64_t errors_z = 0;
    double e_bx = 0.0;
    double e_bz = 0.0;
};

/// Per-basis bit error rates over the sifted bits. Throws EmptyBasis,
/// naming the basis, when either basis holds no bits.
ErrorRates compute_error_rates(const SiftResult& sifted);

} // namespace qkd
