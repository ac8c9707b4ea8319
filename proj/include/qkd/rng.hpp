#pragma once

#include <cmath>
#include <cstdint>

namespace qkd {

/// Deterministic PRNG used everywhere randomness is needed.
/// splitmix64 core; normal/exponential variates are hand-rolled so that
/// streams are bit-identical across platforms and standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Derive an independent generator; tag selects the substream.
    Rng child(std::uint64_t tag) {
        Rng c(state_ ^ (0x5851f42d4c957f2dULL * (tag + 1)));
        c.next_u64();
        return c;
    }

    /// Uniform in (0,1): never returns 0, safe for log().
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Uniform 10-bit word in [0,1023]. 1024 divides 2^64, so masking is unbiased.
    std::uint16_t word10() { return static_cast<std::uint16_t>(next_u64() & 1023u); }

    std::uint32_t uniform_below(std::uint32_t n) {
        // n is tiny here (channel/bit picks); modulo bias is < 2^-59.
        return static_cast<std::uint32_t>(next_u64() % n);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    /// Exponential with the given mean (> 0).
    double exponential(double mean) { return -mean * std::log(uniform01()); }

    /// Normal(0, sigma). Box-Muller, one spare cached.
    double normal(double sigma) {
        if (have_spare_) {
            have_spare_ = false;
            return spare_ * sigma;
        }
        double u = uniform01();
        double v = uniform01();
        double r = std::sqrt(-2.0 * std::log(u));
        double a = 6.283185307179586476925286766559 * v;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a) * sigma;
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace qkd
