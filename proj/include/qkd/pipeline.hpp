#pragma once

#include <filesystem>
#include <string>

#include "qkd/finite_key.hpp"
#include "qkd/io.hpp"
#include "qkd/photonics.hpp"
#include "qkd/sift.hpp"
#include "qkd/sync.hpp"

namespace qkd {

/// Everything derived from a pair of tag streams plus a configuration.
/// Identical streams and config produce an identical Analysis, whether the
/// streams came from a fresh simulation or were loaded from disk.
struct Analysis {
    OffsetEstimate offset;
    double fwhm_ps = 0.0; // NaN when the fine peak has no measurable width
    std::vector<CoincidencePair> pairs;
    SiftResult sifted;
    ErrorRates rates;
    FiniteKeyResult finite_key;
    double key_rate_per_raw_bit = 0.0;    // raw = matched coincidences
    double key_rate_per_sifted_bit = 0.0; // sifted = n_x + n_z
    double secret_bits_per_second = 0.0;  // NaN when duration is unknown
};

Analysis analyze_streams(const TagStream& alice, const TagStream& bob,
                         const RunConfig& cfg);

struct RunPaths {
    std::filesystem::path alice_csv;
    std::filesystem::path bob_csv;
    std::filesystem::path truth_csv;
    std::filesystem::path pairs_csv;
    std::filesystem::path fine_histogram_csv;
    std::filesystem::path report_json;
    std::filesystem::path report_txt;
};

struct RunOutput {
    SessionResult session;
    Analysis analysis;
    RunPaths paths;
};

/// Simulate a session, persist both tag streams and the ground truth,
/// then run the full analysis and write report.json / report.txt.
/// Streams are persisted before synchronization so a failed analysis
/// still leaves the raw data on disk. The output directory is locked
/// for the duration of the run.
RunOutput run_e2e(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct AnalyzeOutput {
    Analysis analysis;
    RunPaths paths; // alice/bob point at the inputs; truth_csv empty
};

/// Analyze previously recorded streams. The report's analysis section is
/// byte-identical to what run_e2e writes for the same streams and config.
AnalyzeOutput analyze_files(const std::filesystem::path& alice_csv,
                            const std::filesystem::path& bob_csv,
                            const RunConfig& cfg,
                            const std::filesystem::path& out_dir);

/// JSON text of the analysis section alone (stable key order, LF newline).
std::string analysis_json_text(const Analysis& a);

} // namespace qkd
