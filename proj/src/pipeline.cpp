#include "qkd/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <sstream>

#include <json.hpp>

#include "qkd/errors.hpp"

namespace qkd {
namespace {

using ordered_json = nlohmann::ordered_json;

/// NaN has no JSON representation; nlohmann would emit null, but being
/// explicit keeps the intent visible at the call sites.
ordered_json number_or_null(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

ordered_json analysis_json(const Analysis& a) {
    ordered_json j;
    j["offset_ps"] = a.offset.offset_ps;
    j["coarse_significance"] = a.offset.coarse_significance;
    j["fine_significance"] = a.offset.fine_significance;
    j["fwhm_ps"] = number_or_null(a.fwhm_ps);
    j["coincidences"] = a.pairs.size();
    j["sifted"] = {
        {"raw_count", a.sifted.raw_count},
        {"n_x", a.rates.n_x},
        {"n_z", a.rates.n_z},
        {"errors_x", a.rates.errors_x},
        {"errors_z", a.rates.errors_z},
        {"e_bx", a.rates.e_bx},
        {"e_bz", a.rates.e_bz},
    };
    j["finite_key"] = {
        {"theta_x", a.finite_key.theta_x},
        {"theta_z", a.finite_key.theta_z},
        {"k_ec", a.finite_key.k_ec},
        {"k_pr", a.finite_key.k_pr},
        {"final_key_len", a.finite_key.final_key_len},
        {"eps_ph", a.finite_key.eps_ph},
        {"clamped_e_bx", a.finite_key.clamped_ebx},
        {"clamped_e_bz", a.finite_key.clamped_ebz},
        {"insecure_x", a.finite_key.insecure_x},
        {"insecure_z", a.finite_key.insecure_z},
    };
    j["key_rate_per_raw_bit"] = a.key_rate_per_raw_bit;
    j["key_rate_per_sifted_bit"] = a.key_rate_per_sifted_bit;
    j["secret_bits_per_second"] = number_or_null(a.secret_bits_per_second);
    return j;
}

std::string utc_now_iso8601() {
    using std::chrono::system_clock;
    std::time_t t = system_clock::to_time_t(system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ordered_json report_json(const RunConfig& cfg, const Analysis& a,
                         const SessionResult* session, const char* mode) {
    ordered_json j;
    j["report_version"] = 1;
    j["generated_at_utc"] = utc_now_iso8601();
    j["mode"] = mode;
    j["config"] = ordered_json::parse(run_config_json(cfg));
    if (session) {
        const SessionTally& t = session->tally;
        j["simulation"] = {
            {"realized_n0", session->realized_n0},
            {"realized_bias", session->realized_n0 / 1024.0},
            {"alice_tags", session->alice.size()},
            {"bob_tags", session->bob.size()},
            {"truth_pairs", session->truth.size()},
            {"tally",
             {
                 {"signal_a", t.signal_a},
                 {"signal_b", t.signal_b},
                 {"background_a", t.background_a},
                 {"background_b", t.background_b},
                 {"surviving_pairs", t.surviving_pairs},
             }},
        };
    }
    j["analysis"] = analysis_json(a);
    return j;
}

std::string report_text(const RunConfig& cfg, const Analysis& a,
                        const SessionResult* session) {
    std::ostringstream out;
    out.precision(6);
    if (session) {
        out << "session: " << cfg.session.duration_s << " s, seed "
            << cfg.session.seed << ", bias_z " << cfg.session.bias_z
            << " (N0 " << session->realized_n0 << ")\n";
        out << "tags: alice " << session->alice.size() << ", bob "
            << session->bob.size() << "\n";
    }
    out << "offset: " << a.offset.offset_ps << " ps (coarse "
        << a.offset.coarse_significance << " sigma, fine "
        << a.offset.fine_significance << " sigma)\n";
    if (std::isnan(a.fwhm_ps))
        out << "fwhm: not measurable\n";
    else
        out << "fwhm: " << a.fwhm_ps << " ps\n";
    out << "coincidences: " << a.pairs.size() << " (window " << cfg.window_ps
        << " ps)\n";
    out << "sifted: " << a.finite_key.n_sift << " (n_x " << a.rates.n_x
        << ", n_z " << a.rates.n_z << ")\n";
    out << "error rates: e_bx " << a.rates.e_bx << ", e_bz " << a.rates.e_bz
        << "\n";
    out << "theta: x " << a.finite_key.theta_x << ", z "
        << a.finite_key.theta_z << "\n";
    out << "cost: error correction " << a.finite_key.k_ec
        << " bits, privacy amplification " << a.finite_key.k_pr << " bits\n";
    out << "final key: " << a.finite_key.final_key_len << " bits ("
        << a.key_rate_per_raw_bit << " per raw bit)\n";
    if (!std::isnan(a.secret_bits_per_second))
        out << "throughput: " << a.secret_bits_per_second << " bit/s\n";
    if (a.finite_key.insecure_x || a.finite_key.insecure_z)
        out << "warning: observed error rate leaves no extractable key\n";
    return out.str();
}

} // namespace

Analysis analyze_streams(const TagStream& alice, const TagStream& bob,
                         const RunConfig& cfg) {
    validate_stream(alice, "alice");
    validate_stream(bob, "bob");

    Analysis a;
    SyncParams sp;
    sp.coarse_bin_ps = cfg.sync.coarse_bin_ps;
    sp.coarse_half_range_ps = cfg.sync.coarse_half_range_ps;
    sp.fine_bin_ps = cfg.sync.fine_bin_ps;
    sp.min_peak_sigma = cfg.sync.min_peak_sigma;
    a.offset = estimate_offset(alice, bob, sp);
    try {
        a.fwhm_ps = fwhm(a.offset.fine);
    } catch (const NoPeak&) {
        a.fwhm_ps = std::numeric_limits<double>::quiet_NaN();
    }

    a.pairs = match_coincidences(alice, bob, a.offset.offset_ps, cfg.window_ps);
    a.sifted = sift(alice, bob, a.pairs);
    a.rates = compute_error_rates(a.sifted);

    FiniteKeyInput in;
    in.n_x = a.rates.n_x;
    in.n_z = a.rates.n_z;
    in.e_bx = a.rates.e_bx;
    in.e_bz = a.rates.e_bz;
    in.f_x = cfg.finite_key.f_x;
    in.f_z = cfg.finite_key.f_z;
    in.eps_per_basis = cfg.finite_key.eps_per_basis;
    a.finite_key = key_length(in);

    a.key_rate_per_raw_bit =
        key_rate(a.finite_key.final_key_len, a.sifted.raw_count);
    a.key_rate_per_sifted_bit =
        key_rate(a.finite_key.final_key_len, a.finite_key.n_sift);
    a.secret_bits_per_second =
        cfg.session.duration_s > 0
            ? double(a.finite_key.final_key_len) / cfg.session.duration_s
            : std::numeric_limits<double>::quiet_NaN();
    return a;
}

std::string analysis_json_text(const Analysis& a) {
    return analysis_json(a).dump(2) + "\n";
}

RunOutput run_e2e(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    DirectoryLock lock(out_dir);

    RunOutput out;
    out.paths.alice_csv = out_dir / "alice.csv";
    out.paths.bob_csv = out_dir / "bob.csv";
    out.paths.truth_csv = out_dir / "truth.csv";
    out.paths.pairs_csv = out_dir / "pairs.csv";
    out.paths.fine_histogram_csv = out_dir / "fine_histogram.csv";
    out.paths.report_json = out_dir / "report.json";
    out.paths.report_txt = out_dir / "report.txt";

    out.session = simulate_session(cfg.session);
    write_stream_csv(out.paths.alice_csv, out.session.alice);
    write_stream_csv(out.paths.bob_csv, out.session.bob);
    write_truth_csv(out.paths.truth_csv, out.session.truth);

    out.analysis = analyze_streams(out.session.alice, out.session.bob, cfg);

    std::vector<ResolvedPair> resolved =
        resolve_pairs(out.session.alice, out.session.bob, out.analysis.pairs);
    write_pairs_csv(out.paths.pairs_csv, resolved);
    write_histogram_csv(out.paths.fine_histogram_csv, out.analysis.offset.fine);

    ordered_json rep = report_json(cfg, out.analysis, &out.session, "run");
    write_text_file(out.paths.report_json, rep.dump(2) + "\n");
    write_text_file(out.paths.report_txt,
                    report_text(cfg, out.analysis, &out.session));
    return out;
}

AnalyzeOutput analyze_files(const std::filesystem::path& alice_csv,
                            const std::filesystem::path& bob_csv,
                            const RunConfig& cfg,
                            const std::filesystem::path& out_dir) {
    TagStream alice = read_stream_csv(alice_csv);
    TagStream bob = read_stream_csv(bob_csv);

    DirectoryLock lock(out_dir);

    AnalyzeOutput out;
    out.paths.alice_csv = alice_csv;
    out.paths.bob_csv = bob_csv;
    out.paths.pairs_csv = out_dir / "pairs.csv";
    out.paths.fine_histogram_csv = out_dir / "fine_histogram.csv";
    out.paths.report_json = out_dir / "report.json";
    out.paths.report_txt = out_dir / "report.txt";

    out.analysis = analyze_streams(alice, bob, cfg);

    std::vector<ResolvedPair> resolved =
        resolve_pairs(alice, bob, out.analysis.pairs);
    write_pairs_csv(out.paths.pairs_csv, resolved);
    write_histogram_csv(out.paths.fine_histogram_csv, out.analysis.offset.fine);

    ordered_json rep = report_json(cfg, out.analysis, nullptr, "analyze");
    write_text_file(out.paths.report_json, rep.dump(2) + "\n");
    write_text_file(out.paths.report_txt,
                    report_text(cfg, out.analysis, nullptr));
    return out;
}

} // namespace qkd
