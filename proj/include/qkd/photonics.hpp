#pragma once

#include <cstdint>
#include <vector>

#include "qkd/core.hpp"

namespace qkd {

struct SourceParams {
    double pair_rate_hz = 1e7; ///< mean entangled-pair emission rate
    double polarization_error_prob = 0.0; ///< P(same-basis bits disagree)
    double jitter_sigma_ps = 300.0; ///< per-photon Gaussian timing jitter
    double background_cps_per_detector = 100.0;
};

struct LinkParams {
    double loss_db = 0.0; ///< full optical budget; +inf means total loss

    double transmittance() const;
};

struct SessionConfig {
    SourceParams source;
    LinkParams link_a;
    LinkParams link_b;
    double bias_z = 0.5; ///< requested P(Z), quantized to the 1/1024 grid
    double duration_s = 0.0;
    std::uint64_t seed = 0;
};

/// A surviving pair: indices into the final sorted streams, plus whether
/// the pair would sift into an error (same basis, different bits).
struct TruthPair {
    std::int64_t alice_index;
    std::int64_t bob_index;
    bool error;
};

struct SessionTally {
    std::int64_t signal_a = 0;     ///< pair photons detected by Alice
    std::int64_t signal_b = 0;     ///< pair photons detected by Bob
    std::int64_t background_a = 0;
    std::int64_t background_b = 0;
    std::int64_t surviving_pairs = 0; ///< pairs with both photons detected
};

struct SessionResult {
    TagStream alice;
    TagStream bob;
    std::vector<TruthPair> truth;
    SessionTally tally;
    std::uint16_t realized_n0 = 0; ///< comparator reference actually used
};

/// Simulate one session: homogeneous Poisson pair emission, independent
/// per-link survival, per-photon basis choice through the 10-bit
/// comparator, correlated bits with the configured polarization error,
/// per-photon Gaussian jitter, and uniform per-detector background.
/// Streams come out sorted and are deterministic given (config, seed).
SessionResult simulate_session(const SessionConfig& cfg);

struct ExpectedRates {
    double singles_a_hz = 0.0;   ///< pair_rate * eta_a + 4 * background
    double singles_b_hz = 0.0;
    double true_coinc_hz = 0.0;  ///< pair_rate * eta_a * eta_b
    double accidental_hz = 0.0;  ///< ~ singles_a * singles_b * window
};

/// Closed-form Poisson expectations for validating simulated sessions.
ExpectedRates analytic_expectations(const SessionConfig& cfg,
                                    std::int64_t window_ps);

} // namespace qkd
