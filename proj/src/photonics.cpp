#include "qkd/photonics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qkd/bias.hpp"
#include "qkd/errors.hpp"
#include "qkd/rng.hpp"

namespace qkd {

namespace {

void require_config(const SessionConfig& cfg) {
    if (!(cfg.source.pair_rate_hz > 0.0))
        throw ConfigError("pair_rate_hz must be positive");
    if (!(cfg.source.polarization_error_prob >= 0.0 &&
          cfg.source.polarization_error_prob <= 1.0))
        throw ConfigError("polarization_error_prob outside [0,1]");
    if (!(cfg.source.jitter_sigma_ps >= 0.0))
        throw ConfigError("jitter_sigma_ps must be >= 0");
    if (!(cfg.source.background_cps_per_detector >= 0.0))
        throw ConfigError("background_cps_per_detector must be >= 0");
    if (!(cfg.link_a.loss_db >= 0.0) || !(cfg.link_b.loss_db >= 0.0))
        throw ConfigError("loss_db must be >= 0");
    if (!(cfg.duration_s > 0.0)) throw ConfigError("duration_s must be positive");
    if (!(cfg.bias_z >= 0.0 && cfg.bias_z <= 1.0))
        throw ConfigError("bias_z outside [0,1]");
}

struct Ev {
    std::int64_t t;
    std::uint8_t ch;
    std::int32_t pair_id; // -1 for singles and background
};

// Poisson arrival times in integer picoseconds over [0, duration).
// Gaps accumulate in integers, so long sessions lose no precision.
template <typename F>
void poisson_times(Rng& rng, double rate_hz, double duration_s, F&& emit) {
    if (rate_hz <= 0.0) return;
    const double mean_gap_ps = 1e12 / rate_hz;
    const auto end = static_cast<std::int64_t>(duration_s * 1e12);
    std::int64_t t = 0;
    for (;;) {
        t += static_cast<std::int64_t>(std::llround(rng.exponential(mean_gap_ps)));
        if (t >= end) return;
        emit(t);
    }
}

std::int64_t jittered(std::int64_t t, double sigma, Rng& rng) {
    if (sigma == 0.0) return t;
    return t + static_cast<std::int64_t>(std::llround(rng.normal(sigma)));
}

} // namespace

double LinkParams::transmittance() const {
    if (std::isinf(loss_db)) return 0.0;
    return std::pow(10.0, -loss_db / 10.0);
}

SessionResult simulate_session(const SessionConfig& cfg) {
    require_config(cfg);

    const double eta_a = cfg.link_a.transmittance();
    const double eta_b = cfg.link_b.transmittance();
    const double rate = cfg.source.pair_rate_hz;
    const double sigma = cfg.source.jitter_sigma_ps;
    const double perr = cfg.source.polarization_error_prob;

    const BiasComparator comparator = BiasComparator::from_probability(cfg.bias_z);

    Rng master(cfg.seed);
    Rng rng_pairs = master.child(1); // pairs surviving both links
    Rng rng_only_a = master.child(2);
    Rng rng_only_b = master.child(3);
    Rng rng_bg_a = master.child(4);
    Rng rng_bg_b = master.child(5);

    std::vector<Ev> ev_a, ev_b;
    std::vector<bool> pair_error;
    SessionResult out;

    // Independent per-photon survival splits the emission process into
    // three thinned Poisson streams; pairs lost on both links never hit a
    // detector and need no events.
    poisson_times(rng_pairs, rate * eta_a * eta_b, cfg.duration_s, [&](std::int64_t t) {
        const Basis ba = comparator.draw(rng_pairs.word10());
        const Basis bb = comparator.draw(rng_pairs.word10());
        const auto bit_a = static_cast<std::uint8_t>(rng_pairs.next_u64() & 1);
        std::uint8_t bit_b;
        bool err = false;
        if (ba == bb) {
            err = rng_pairs.bernoulli(perr);
            bit_b = err ? static_cast<std::uint8_t>(bit_a ^ 1u) : bit_a;
        } else {
            bit_b = static_cast<std::uint8_t>(rng_pairs.next_u64() & 1);
        }
        const std::int64_t ta = jittered(t, sigma, rng_pairs);
        const std::int64_t tb = jittered(t, sigma, rng_pairs);
        // Jitter can push a detection before session start; it is then not
        // recorded and the partner degrades to a single.
        if (ta >= 0 && tb >= 0) {
            const auto id = static_cast<std::int32_t>(pair_error.size());
            pair_error.push_back(err);
            ev_a.push_back({ta, make_channel(ba, bit_a), id});
            ev_b.push_back({tb, make_channel(bb, bit_b), id});
        } else if (ta >= 0) {
            ev_a.push_back({ta, make_channel(ba, bit_a), -1});
        } else if (tb >= 0) {
            ev_b.push_back({tb, make_channel(bb, bit_b), -1});
        }
    });

    auto singles = [&](Rng& rng, double r, std::vector<Ev>& dst) {
        poisson_times(rng, r, cfg.duration_s, [&](std::int64_t t) {
            const Basis b = comparator.draw(rng.word10());
            const auto bit = static_cast<std::uint8_t>(rng.next_u64() & 1);
            const std::int64_t td = jittered(t, sigma, rng);
            if (td < 0) return;
            dst.push_back({td, make_channel(b, bit), -1});
        });
    };
    singles(rng_only_a, rate * eta_a * (1.0 - eta_b), ev_a);
    singles(rng_only_b, rate * eta_b * (1.0 - eta_a), ev_b);

    out.tally.signal_a = static_cast<std::int64_t>(ev_a.size());
    out.tally.signal_b = static_cast<std::int64_t>(ev_b.size());

    // Background is attributed uniformly across the 4 channels; one merged
    // Poisson process per receiver at 4x the per-detector rate.
    auto background = [&](Rng& rng, std::vector<Ev>& dst) {
        poisson_times(rng, 4.0 * cfg.source.background_cps_per_detector,
                      cfg.duration_s, [&](std::int64_t t) {
                          const auto ch =
                              static_cast<std::uint8_t>(rng.uniform_below(4));
                          dst.push_back({t, ch, -1});
                      });
    };
    background(rng_bg_a, ev_a);
    background(rng_bg_b, ev_b);
    out.tally.background_a = static_cast<std::int64_t>(ev_a.size()) - out.tally.signal_a;
    out.tally.background_b = static_cast<std::int64_t>(ev_b.size()) - out.tally.signal_b;

    // Sort by time; stable so equal timestamps keep construction order.
    std::stable_sort(ev_a.begin(), ev_a.end(),
                     [](const Ev& l, const Ev& r) { return l.t < r.t; });
    std::stable_sort(ev_b.begin(), ev_b.end(),
                     [](const Ev& l, const Ev& r) { return l.t < r.t; });

    const auto npairs = static_cast<std::int64_t>(pair_error.size());
    std::vector<std::int64_t> pos_a(static_cast<std::size_t>(npairs), -1);
    std::vector<std::int64_t> pos_b(static_cast<std::size_t>(npairs), -1);

    out.alice.reserve(ev_a.size());
    for (std::size_t i = 0; i < ev_a.size(); ++i) {
        if (ev_a[i].pair_id >= 0) pos_a[static_cast<std::size_t>(ev_a[i].pair_id)] = static_cast<std::int64_t>(i);
        out.alice.push_back({static_cast<std::uint64_t>(ev_a[i].t), ev_a[i].ch});
    }
    out.bob.reserve(ev_b.size());
    for (std::size_t i = 0; i < ev_b.size(); ++i) {
        if (ev_b[i].pair_id >= 0) pos_b[static_cast<std::size_t>(ev_b[i].pair_id)] = static_cast<std::int64_t>(i);
        out.bob.push_back({static_cast<std::uint64_t>(ev_b[i].t), ev_b[i].ch});
    }

    out.truth.reserve(static_cast<std::size_t>(npairs));
    for (std::int64_t id = 0; id < npairs; ++id) {
        out.truth.push_back({pos_a[static_cast<std::size_t>(id)],
                             pos_b[static_cast<std::size_t>(id)],
                             pair_error[static_cast<std::size_t>(id)]});
    }
    out.tally.surviving_pairs = npairs;
    out.realized_n0 = comparator.reference();

    validate_stream(out.alice, "alice");
    validate_stream(out.bob, "bob");
    return out;
}

ExpectedRates analytic_expectations(const SessionConfig& cfg,
                                    std::int64_t window_ps) {
    require_config(cfg);
    if (window_ps < 0) throw ConfigError("window_ps must be >= 0");
    const double eta_a = cfg.link_a.transmittance();
    const double eta_b = cfg.link_b.transmittance();
    const double bg = 4.0 * cfg.source.background_cps_per_detector;
    ExpectedRates r;
    r.singles_a_hz = cfg.source.pair_rate_hz * eta_a + bg;
    r.singles_b_hz = cfg.source.pair_rate_hz * eta_b + bg;
    r.true_coinc_hz = cfg.source.pair_rate_hz * eta_a * eta_b;
    r.accidental_hz =
        r.singles_a_hz * r.singles_b_hz * (static_cast<double>(window_ps) * 1e-12);
    return r;
}

} // namespace qkd
