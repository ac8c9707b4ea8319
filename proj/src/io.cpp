#include "qkd/io.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <limits>
#include <sstream>
#include <string_view>
#include <unistd.h>

#include <json.hpp>

#include "qkd/errors.hpp"

namespace qkd {
namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

template <typename T>
T parse_number(std::string_view field, const std::filesystem::path& path,
               std::uint64_t line) {
    T value{};
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || field.empty())
        throw ParseError(path.string() + ": malformed number '" +
                             std::string(field) + "'",
                         line);
    return value;
}

/// Iterates LF-separated lines, tolerating a trailing '\r' per line and a
/// missing final newline. Calls fn(line_number, line) for every data row
/// after checking the header on line 1.
template <typename Fn>
void for_each_row(const std::filesystem::path& path, std::string_view header,
                  Fn&& fn) {
    std::string text = read_text_file(path);
    std::string_view rest = text;
    std::uint64_t line_no = 0;
    while (!rest.empty()) {
        ++line_no;
        std::size_t nl = rest.find('\n');
        std::string_view line =
            nl == std::string_view::npos ? rest : rest.substr(0, nl);
        rest = nl == std::string_view::npos ? std::string_view{}
                                            : rest.substr(nl + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line_no == 1) {
            if (line != header)
                throw ParseError(path.string() + ": expected header '" +
                                     std::string(header) + "'",
                                 1);
            continue;
        }
        if (line.empty()) {
            if (rest.empty()) break; // trailing newline
            throw ParseError(path.string() + ": blank line", line_no);
        }
        fn(line_no, line);
    }
    if (line_no == 0)
        throw ParseError(path.string() + ": empty file", 1);
}

void require_fields(std::size_t got, std::size_t want,
                    const std::filesystem::path& path, std::uint64_t line) {
    if (got != want)
        throw ParseError(path.string() + ": expected " + std::to_string(want) +
                             " fields, got " + std::to_string(got),
                         line);
}

std::uint8_t parse_channel(std::string_view field,
                           const std::filesystem::path& path,
                           std::uint64_t line) {
    auto v = parse_number<std::uint64_t>(field, path, line);
    if (v >= kChannelCount)
        throw ParseError(path.string() + ": channel " + std::to_string(v) +
                             " out of range",
                         line);
    return static_cast<std::uint8_t>(v);
}

} // namespace

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw ConfigError("cannot open for writing: " + path.string());
    out << text;
    out.flush();
    if (!out)
        throw ConfigError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError(path.string() + ": cannot open", 0);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad())
        throw ParseError(path.string() + ": read failed", 0);
    return buf.str();
}

void write_stream_csv(const std::filesystem::path& path, const TagStream& s) {
    std::ostringstream out;
    out << "time_ps,channel\n";
    for (const TimeTag& t : s)
        out << t.time_ps << ',' << unsigned(t.channel) << '\n';
    write_text_file(path, out.str());
}

TagStream read_stream_csv(const std::filesystem::path& path) {
    TagStream s;
    for_each_row(path, "time_ps,channel", [&](std::uint64_t line_no,
                                              std::string_view line) {
        auto f = split_fields(line);
        require_fields(f.size(), 2, path, line_no);
        TimeTag tag;
        tag.time_ps = parse_number<std::uint64_t>(f[0], path, line_no);
        tag.channel = parse_channel(f[1], path, line_no);
        if (!s.empty() && tag.time_ps < s.back().time_ps)
            throw ParseError(path.string() + ": timestamps decrease", line_no);
        s.push_back(tag);
    });
    return s;
}

void write_pairs_csv(const std::filesystem::path& path,
                     const std::vector<ResolvedPair>& pairs) {
    std::ostringstream out;
    out << "alice_time_ps,alice_channel,bob_time_ps,bob_channel,dt_ps\n";
    for (const ResolvedPair& p : pairs)
        out << p.alice_time_ps << ',' << unsigned(p.alice_channel) << ','
            << p.bob_time_ps << ',' << unsigned(p.bob_channel) << ','
            << p.dt_ps << '\n';
    write_text_file(path, out.str());
}

std::vector<ResolvedPair> read_pairs_csv(const std::filesystem::path& path) {
    std::vector<ResolvedPair> pairs;
    for_each_row(
        path, "alice_time_ps,alice_channel,bob_time_ps,bob_channel,dt_ps",
        [&](std::uint64_t line_no, std::string_view line) {
            auto f = split_fields(line);
            require_fields(f.size(), 5, path, line_no);
            ResolvedPair p;
            p.alice_time_ps = parse_number<std::uint64_t>(f[0], path, line_no);
            p.alice_channel = parse_channel(f[1], path, line_no);
            p.bob_time_ps = parse_number<std::uint64_t>(f[2], path, line_no);
            p.bob_channel = parse_channel(f[3], path, line_no);
            p.dt_ps = parse_number<std::int64_t>(f[4], path, line_no);
            pairs.push_back(p);
        });
    return pairs;
}

void write_truth_csv(const std::filesystem::path& path,
                     const std::vector<TruthPair>& truth) {
    std::ostringstream out;
    out << "alice_idx,bob_idx,error_flag\n";
    for (const TruthPair& t : truth)
        out << t.alice_index << ',' << t.bob_index << ',' << int(t.error)
            << '\n';
    write_text_file(path, out.str());
}

std::vector<TruthPair> read_truth_csv(const std::filesystem::path& path) {
    std::vector<TruthPair> truth;
    for_each_row(path, "alice_idx,bob_idx,error_flag",
                 [&](std::uint64_t line_no, std::string_view line) {
                     auto f = split_fields(line);
                     require_fields(f.size(), 3, path, line_no);
                     TruthPair t;
                     t.alice_index =
                         parse_number<std::int64_t>(f[0], path, line_no);
                     t.bob_index =
                         parse_number<std::int64_t>(f[1], path, line_no);
                     if (t.alice_index < 0 || t.bob_index < 0)
                         throw ParseError(path.string() + ": negative index",
                                          line_no);
                     auto flag =
                         parse_number<std::uint64_t>(f[2], path, line_no);
                     if (flag > 1)
                         throw ParseError(path.string() +
                                              ": error_flag must be 0 or 1",
                                          line_no);
                     t.error = flag == 1;
                     truth.push_back(t);
                 });
    return truth;
}

void write_histogram_csv(const std::filesystem::path& path,
                         const CorrelationHistogram& h) {
    std::ostringstream out;
    out << "bin_center_ps,count\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i)
        out << h.bin_center(i) << ',' << h.counts[i] << '\n';
    write_text_file(path, out.str());
}

namespace {

void reject_unknown(const ordered_json& obj, const char* where,
                    std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) known = true;
        if (!known)
            throw ConfigError(std::string("unknown key '") + it.key() +
                              "' in " + where);
    }
}

const ordered_json* find_key(const ordered_json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double get_double(const ordered_json& obj, const char* key, double fallback,
                  const char* where) {
    const ordered_json* v = find_key(obj, key);
    if (!v) return fallback;
    if (!v->is_number())
        throw ConfigError(std::string(where) + "." + key + " must be a number");
    return v->get<double>();
}

std::int64_t get_int64(const ordered_json& obj, const char* key,
                       std::int64_t fallback, const char* where) {
    const ordered_json* v = find_key(obj, key);
    if (!v) return fallback;
    if (!v->is_number_integer())
        throw ConfigError(std::string(where) + "." + key +
                          " must be an integer");
    return v->get<std::int64_t>();
}

std::uint64_t get_uint64(const ordered_json& obj, const char* key,
                         std::uint64_t fallback, const char* where) {
    const ordered_json* v = find_key(obj, key);
    if (!v) return fallback;
    if (!v->is_number_unsigned() &&
        !(v->is_number_integer() && v->get<std::int64_t>() >= 0))
        throw ConfigError(std::string(where) + "." + key +
                          " must be a non-negative integer");
    return v->get<std::uint64_t>();
}

/// loss_db accepts a number or the string "inf" (an opaque channel).
double get_loss_db(const ordered_json& obj, const char* key, double fallback,
                   const char* where) {
    const ordered_json* v = find_key(obj, key);
    if (!v) return fallback;
    if (v->is_string()) {
        if (v->get<std::string>() == "inf")
            return std::numeric_limits<double>::infinity();
        throw ConfigError(std::string(where) + "." + key +
                          " must be a number or \"inf\"");
    }
    if (!v->is_number())
        throw ConfigError(std::string(where) + "." + key +
                          " must be a number or \"inf\"");
    return v->get<double>();
}

LinkParams parse_link(const ordered_json& root, const char* key,
                      const LinkParams& fallback) {
    const ordered_json* v = find_key(root, key);
    if (!v) return fallback;
    if (!v->is_object())
        throw ConfigError(std::string(key) + " must be an object");
    reject_unknown(*v, key, {"loss_db"});
    LinkParams out = fallback;
    out.loss_db = get_loss_db(*v, "loss_db", fallback.loss_db, key);
    if (std::isnan(out.loss_db) || out.loss_db < 0)
        throw ConfigError(std::string(key) + ".loss_db must be >= 0");
    return out;
}

} // namespace

RunConfig parse_run_config(const std::string& json_text) {
    ordered_json root;
    try {
        root = ordered_json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("invalid config JSON: ") + e.what());
    }
    if (!root.is_object())
        throw ConfigError("config root must be a JSON object");
    reject_unknown(root, "config",
                   {"config_version", "seed", "duration_s", "bias_z",
                    "window_ps", "source", "link_a", "link_b", "sync",
                    "finite_key"});

    const ordered_json* version = find_key(root, "config_version");
    if (!version)
        throw ConfigError("config_version is required");
    if (!version->is_number_integer() || version->get<std::int64_t>() != 1)
        throw ConfigError("config_version must be 1");

    RunConfig cfg;
    cfg.session.seed = get_uint64(root, "seed", cfg.session.seed, "config");
    cfg.session.duration_s =
        get_double(root, "duration_s", cfg.session.duration_s, "config");
    cfg.session.bias_z = get_double(root, "bias_z", cfg.session.bias_z, "config");
    cfg.window_ps = get_int64(root, "window_ps", cfg.window_ps, "config");
    if (cfg.window_ps <= 0)
        throw ConfigError("window_ps must be positive");

    if (const ordered_json* src = find_key(root, "source")) {
        if (!src->is_object())
            throw ConfigError("source must be an object");
        reject_unknown(*src, "source",
                       {"pair_rate_hz", "polarization_error_prob",
                        "jitter_sigma_ps", "background_cps_per_detector"});
        SourceParams& s = cfg.session.source;
        s.pair_rate_hz = get_double(*src, "pair_rate_hz", s.pair_rate_hz, "source");
        s.polarization_error_prob =
            get_double(*src, "polarization_error_prob",
                       s.polarization_error_prob, "source");
        s.jitter_sigma_ps =
            get_double(*src, "jitter_sigma_ps", s.jitter_sigma_ps, "source");
        s.background_cps_per_detector =
            get_double(*src, "background_cps_per_detector",
                       s.background_cps_per_detector, "source");
    }
    cfg.session.link_a = parse_link(root, "link_a", cfg.session.link_a);
    cfg.session.link_b = parse_link(root, "link_b", cfg.session.link_b);

    if (const ordered_json* sy = find_key(root, "sync")) {
        if (!sy->is_object())
            throw ConfigError("sync must be an object");
        reject_unknown(*sy, "sync",
                       {"coarse_bin_ps", "coarse_half_range_ps", "fine_bin_ps",
                        "min_peak_sigma"});
        SyncConfig& s = cfg.sync;
        s.coarse_bin_ps = get_int64(*sy, "coarse_bin_ps", s.coarse_bin_ps, "sync");
        s.coarse_half_range_ps = get_int64(*sy, "coarse_half_range_ps",
                                           s.coarse_half_range_ps, "sync");
        s.fine_bin_ps = get_int64(*sy, "fine_bin_ps", s.fine_bin_ps, "sync");
        s.min_peak_sigma =
            get_double(*sy, "min_peak_sigma", s.min_peak_sigma, "sync");
        if (s.coarse_bin_ps <= 0 || s.fine_bin_ps <= 0 ||
            s.coarse_half_range_ps <= 0)
            throw ConfigError("sync bin sizes must be positive");
    }

    if (const ordered_json* fk = find_key(root, "finite_key")) {
        if (!fk->is_object())
            throw ConfigError("finite_key must be an object");
        reject_unknown(*fk, "finite_key", {"f_x", "f_z", "eps_per_basis"});
        FiniteKeyConfig& f = cfg.finite_key;
        f.f_x = get_double(*fk, "f_x", f.f_x, "finite_key");
        f.f_z = get_double(*fk, "f_z", f.f_z, "finite_key");
        f.eps_per_basis =
            get_double(*fk, "eps_per_basis", f.eps_per_basis, "finite_key");
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    return parse_run_config(read_text_file(path));
}

std::string run_config_json(const RunConfig& cfg) {
    ordered_json root;
    root["config_version"] = cfg.config_version;
    root["seed"] = cfg.session.seed;
    root["duration_s"] = cfg.session.duration_s;
    root["bias_z"] = cfg.session.bias_z;
    root["window_ps"] = cfg.window_ps;
    root["source"] = {
        {"pair_rate_hz", cfg.session.source.pair_rate_hz},
        {"polarization_error_prob", cfg.session.source.polarization_error_prob},
        {"jitter_sigma_ps", cfg.session.source.jitter_sigma_ps},
        {"background_cps_per_detector",
         cfg.session.source.background_cps_per_detector},
    };
    auto link_json = [](const LinkParams& l) {
        ordered_json j;
        if (std::isinf(l.loss_db))
            j["loss_db"] = "inf";
        else
            j["loss_db"] = l.loss_db;
        return j;
    };
    root["link_a"] = link_json(cfg.session.link_a);
    root["link_b"] = link_json(cfg.session.link_b);
    root["sync"] = {
        {"coarse_bin_ps", cfg.sync.coarse_bin_ps},
        {"coarse_half_range_ps", cfg.sync.coarse_half_range_ps},
        {"fine_bin_ps", cfg.sync.fine_bin_ps},
        {"min_peak_sigma", cfg.sync.min_peak_sigma},
    };
    root["finite_key"] = {
        {"f_x", cfg.finite_key.f_x},
        {"f_z", cfg.finite_key.f_z},
        {"eps_per_basis", cfg.finite_key.eps_per_basis},
    };
    return root.dump(2) + "\n";
}

DirectoryLock::DirectoryLock(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    lock_path_ = dir / ".lock";
    int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        if (errno == EEXIST)
            throw ConfigError("output directory is locked by another run: " +
                              dir.string());
        throw ConfigError("cannot create lock file " + lock_path_.string() +
                          ": " + std::strerror(errno));
    }
    ::close(fd);
}

DirectoryLock::~DirectoryLock() {
    std::error_code ec;
    std::filesystem::remove(lock_path_, ec);
}

} // namespace qkd
