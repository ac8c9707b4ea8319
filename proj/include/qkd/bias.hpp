#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "qkd/core.hpp"
#include "qkd/errors.hpp"
#include "qkd/rng.hpp"

namespace qkd {

/// Hardware bias granularity: a 10-bit comparator reference.
inline constexpr int kBiasBits = 10;
inline constexpr std::uint16_t kBiasRange = 1u << kBiasBits; // 1024

/// Digital comparator deciding the measurement basis per detection.
/// A uniform 10-bit word r selects Z iff r < reference, so
/// P(Z) = reference / 1024 exactly.
class BiasComparator {
  public:
    explicit BiasComparator(std::uint16_t reference) : reference_(reference) {
        if (reference_ > kBiasRange)
            throw InvalidProbability("comparator reference " +
                                     std::to_string(reference_) + " outside [0,1024]");
    }

    /// Nearest realizable setting for a requested P(Z).
    /// |realized - q_z| <= 2^-11 by rounding.
    static BiasComparator from_probability(double q_z) {
        if (!(q_z >= 0.0 && q_z <= 1.0))
            throw InvalidProbability("q_z must lie in [0,1]");
        return BiasComparator(static_cast<std::uint16_t>(std::llround(q_z * kBiasRange)));
    }

    std::uint16_t reference() const { return reference_; }

    double realized_bias() const {
        return static_cast<double>(reference_) / kBiasRange;
    }

    Basis draw(std::uint16_t word) const {
        if (word >= kBiasRange)
            throw InvalidRandomWord("comparator word " + std::to_string(word) +
                                    " outside [0,1023]");
        return word < reference_ ? Basis::Z : Basis::X;
    }

  private:
    std::uint16_t reference_;
};

/// Seeded source of uniform 10-bit comparator words.
class RandomBitSource {
  public:
    explicit RandomBitSource(std::uint64_t seed) : rng_(seed) {}
    explicit RandomBitSource(Rng rng) : rng_(rng) {}

    std::uint16_t next_word() { return rng_.word10(); }

  private:
    Rng rng_;
};

} // namespace qkd
