#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qkd/errors.hpp"

namespace qkd {

/// Measurement basis. Z is the majority basis under biased operation.
enum class Basis : std::uint8_t { X = 0, Z = 1 };

inline const char* basis_name(Basis b) { return b == Basis::Z ? "Z" : "X"; }

/// Detector channel encoding, fixed across streams, files and reports:
///   0 = (Z, bit 0)   horizontal
///   1 = (Z, bit 1)   vertical
///   2 = (X, bit 0)   diagonal
///   3 = (X, bit 1)   antidiagonal
inline constexpr std::uint8_t kChannelCount = 4;

inline void require_channel(std::uint8_t ch) {
    if (ch >= kChannelCount)
        throw InvalidChannel("channel code " + std::to_string(ch) + " outside [0,3]");
}

inline Basis channel_basis(std::uint8_t ch) {
    require_channel(ch);
    return ch < 2 ? Basis::Z : Basis::X;
}

inline std::uint8_t channel_bit(std::uint8_t ch) {
    require_channel(ch);
    return ch & 1;
}

inline std::uint8_t make_channel(Basis b, std::uint8_t bit) {
    if (bit > 1) throw DomainError("bit value must be 0 or 1");
    return static_cast<std::uint8_t>((b == Basis::Z ? 0 : 2) | bit);
}

/// One detection event: picosecond timestamp plus detector channel.
struct TimeTag {
    std::uint64_t time_ps;
    std::uint8_t channel;
};

using TagStream = std::vector<TimeTag>;

/// Enforced on every stream boundary: timestamps non-decreasing,
/// channels in range. Throws StreamOrderError / InvalidChannel.
inline void validate_stream(const TagStream& s, const char* name = "stream") {
    std::uint64_t prev = 0;
    bool first = true;
    for (std::size_t i = 0; i < s.size(); ++i) {
        require_channel(s[i].channel);
        if (!first && s[i].time_ps < prev)
            throw StreamOrderError(std::string(name) + " not sorted at index " +
                                   std::to_string(i));
        prev = s[i].time_ps;
        first = false;
    }
}

} // namespace qkd
