#include "qkd/sift.hpp"

#include <algorithm>
#include <string>

#include "qkd/errors.hpp"

namespace qkd {

std::vector<ResolvedPair> resolve_pairs(const TagStream& alice,
                                        const TagStream& bob,
                                        const std::vector<CoincidencePair>& pairs) {
    std::vector<ResolvedPair> out;
    out.reserve(pairs.size());
    for (const CoincidencePair& p : pairs) {
        if (p.alice_index >= alice.size() || p.bob_index >= bob.size())
            throw DomainError("coincidence pair index outside its stream");
        const TimeTag& a = alice[p.alice_index];
        const TimeTag& b = bob[p.bob_index];
        out.push_back({a.time_ps, a.channel, b.time_ps, b.channel, p.dt_ps});
    }
    return out;
}

SiftResult sift(const std::vector<ResolvedPair>& pairs) {
    SiftResult r;
    r.raw_count = static_cast<std::int64_t>(pairs.size());
    r.bits.reserve(pairs.size());
    for (const ResolvedPair& p : pairs) {
        const Basis ba = channel_basis(p.alice_channel);
        const Basis bb = channel_basis(p.bob_channel);
        if (ba != bb) continue;
        r.bits.push_back({p.alice_time_ps, ba, channel_bit(p.alice_channel),
                          channel_bit(p.bob_channel)});
        (ba == Basis::X ? r.n_x : r.n_z)++;
    }
    std::stable_sort(r.bits.begin(), r.bits.end(),
                     [](const SiftedBit& l, const SiftedBit& rgt) {
                         return l.alice_time_ps < rgt.alice_time_ps;
                     });
    return r;
}

SiftResult sift(const TagStream& alice, const TagStream& bob,
                const std::vector<CoincidencePair>& pairs) {
    return sift(resolve_pairs(alice, bob, pairs));
}

ErrorRates compute_error_rates(const SiftResult& sifted) {
    ErrorRates er;
    er.n_x = sifted.n_x;
    er.n_z = sifted.n_z;
    if (er.n_x == 0) throw EmptyBasis("X basis holds no sifted bits");
    if (er.n_z == 0) throw EmptyBasis("Z basis holds no sifted bits");
    for (const SiftedBit& b : sifted.bits) {
        if (b.alice_bit != b.bob_bit)
            (b.basis == Basis::X ? er.errors_x : er.errors_z)++;
    }
    er.e_bx = static_cast<double>(er.errors_x) / static_cast<double>(er.n_x);
    er.e_bz = static_cast<double>(er.errors_z) / static_cast<double>(er.n_z);
    return er;
}

} // namespace qkd
