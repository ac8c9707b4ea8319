#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qkd/core.hpp"
#include "qkd/photonics.hpp"
#include "qkd/sift.hpp"
#include "qkd/sync.hpp"

namespace qkd {

/// CSV schemas. All files carry a header line and LF line endings.
///   streams:   time_ps,channel
///   pairs:     alice_time_ps,alice_channel,bob_time_ps,bob_channel,dt_ps
///   truth:     alice_idx,bob_idx,error_flag
///   histogram: bin_center_ps,count
/// Readers are strict: malformed rows raise ParseError with the line
/// number; loaded streams are validated for order and channel range.

void write_stream_csv(const std::filesystem::path& path, const TagStream& s);
TagStream read_stream_csv(const std::filesystem::path& path);

void write_pairs_csv(const std::filesystem::path& path,
                     const std::vector<ResolvedPair>& pairs);
std::vector<ResolvedPair> read_pairs_csv(const std::filesystem::path& path);

void write_truth_csv(const std::filesystem::path& path,
                     const std::vector<TruthPair>& truth);
std::vector<TruthPair> read_truth_csv(const std::filesystem::path& path);

void write_histogram_csv(const std::filesystem::path& path,
                         const CorrelationHistogram& h);

/// Synchronization stage settings carried by the run configuration.
struct SyncConfig {
    std::int64_t coarse_bin_ps = 1'000'000;
    std::int64_t coarse_half_range_ps = 1'000'000'000;
    std::int64_t fine_bin_ps = 100;
    double min_peak_sigma = 5.0;
};

struct FiniteKeyConfig {
    double f_x = 1.1;
    double f_z = 1.12;
    double eps_per_basis = 0.003;
};

/// Full run configuration. JSON form requires config_version = 1 and
/// rejects unknown keys at every level; absent keys keep these defaults.
struct RunConfig {
    int config_version = 1;
    SessionConfig session;
    std::int64_t window_ps = 2500;
    SyncConfig sync;
    FiniteKeyConfig finite_key;
};

/// Parse from JSON text. Throws ConfigError on schema violations.
RunConfig parse_run_config(const std::string& json_text);

/// Read and parse a config file. Throws ParseError when unreadable.
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical JSON echo of a configuration (stable key order).
std::string run_config_json(const RunConfig& cfg);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

/// Exclusive ownership of an output directory for the lifetime of a run.
/// Acquiring an already-locked directory raises ConfigError.
class DirectoryLock {
  public:
    explicit DirectoryLock(const std::filesystem::path& dir);
    ~DirectoryLock();
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

  private:
    std::filesystem::path lock_path_;
};

} // namespace qkd
