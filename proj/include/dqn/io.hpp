#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "dqn/airport.hpp"
#include "dqn/counts.hpp"
#include "dqn/error.hpp"
#include "dqn/inference.hpp"
#include "dqn/mmd.hpp"
#include "dqn/perf.hpp"
#include "dqn/random.hpp"
#include "dqn/sabc.hpp"

namespace dqn::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Delimited text

/// Shortest decimal text that reads back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  std::size_t column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    require(it != header.end(), ErrorCode::MissingColumn, path + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }

  std::string where(std::size_t r) const { return path + ":" + std::to_string(line_numbers[r]); }
};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Comma-separated text with a header row. Blank lines and '#' comments are skipped.
inline CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path.string());
  CsvTable table;
  table.path = path.string();
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto fields = split_fields(t);
    if (!have_header) {
      if (lineno == 1 && fields.front().rfind("\xEF\xBB\xBF", 0) == 0) fields.front().erase(0, 3);  // UTF-8 BOM
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    require(fields.size() == table.header.size(), ErrorCode::BadValue,
            table.path + ":" + std::to_string(lineno) + ": expected " + std::to_string(table.header.size()) +
                " fields, found " + std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(lineno);
  }
  require(have_header, ErrorCode::EmptyFile, path.string() + " is empty");
  return table;
}

inline double parse_double(const CsvTable& t, std::size_t row, std::size_t col) {
  const auto& s = t.rows[row][col];
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc{} && end == s.data() + s.size() && std::isfinite(v), ErrorCode::BadValue,
          t.where(row) + ": column '" + t.header[col] + "' is not a number: '" + s + "'");
  return v;
}

inline std::int64_t parse_integer(const CsvTable& t, std::size_t row, std::size_t col) {
  const auto& s = t.rows[row][col];
  std::int64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc{} && end == s.data() + s.size(), ErrorCode::BadValue,
          t.where(row) + ": column '" + t.header[col] + "' is not an integer: '" + s + "'");
  return v;
}

inline void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path.string());
  out << content;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Flight schedule: flight_id,arrival_min,gate_distance_m,n_passengers,prop_local

inline FlightSchedule load_flight_schedule(const fs::path& path) {
  const auto t = read_csv(path);
  const auto c_id = t.column("flight_id"), c_arr = t.column("arrival_min"), c_dist = t.column("gate_distance_m"),
             c_n = t.column("n_passengers"), c_p = t.column("prop_local");
  FlightSchedule out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    FlightRecord f;
    f.flight_id = t.rows[r][c_id];
    require(!f.flight_id.empty(), ErrorCode::BadValue, t.where(r) + ": empty flight_id");
    f.arrival_time = parse_double(t, r, c_arr);
    f.gate_distance = parse_double(t, r, c_dist);
    const auto n = parse_integer(t, r, c_n);
    require(n >= 0 && n <= 100000, ErrorCode::BadValue, t.where(r) + ": n_passengers out of range");
    f.n_passengers = static_cast<int>(n);
    f.prop_local = parse_double(t, r, c_p);
    try {
      validate(f);
    } catch (const Error& e) {
      fail(ErrorCode::BadValue, t.where(r) + ": " + e.what());
    }
    for (const auto& g : out)
      require(g.flight_id != f.flight_id, ErrorCode::BadValue, t.where(r) + ": duplicate flight_id " + f.flight_id);
    out.push_back(std::move(f));
  }
  return out;
}

inline std::string flight_schedule_text(const FlightSchedule& flights) {
  std::string s = "flight_id,arrival_min,gate_distance_m,n_passengers,prop_local\n";
  for (const auto& f : flights)
    s += f.flight_id + "," + format_number(f.arrival_time) + "," + format_number(f.gate_distance) + "," +
         std::to_string(f.n_passengers) + "," + format_number(f.prop_local) + "\n";
  return s;
}

inline void save_flight_schedule(const FlightSchedule& flights, const fs::path& path) {
  write_text(path, flight_schedule_text(flights));
}

// ---------------------------------------------------------------------------
// Roster: route,start_min,count

inline RosterSet load_roster(const fs::path& path) {
  const auto t = read_csv(path);
  const auto c_route = t.column("route"), c_start = t.column("start_min"), c_count = t.column("count");
  std::map<std::string, std::vector<std::pair<double, std::pair<int, std::size_t>>>> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& route = t.rows[r][c_route];
    require(!route.empty(), ErrorCode::BadValue, t.where(r) + ": empty route");
    const double start = parse_double(t, r, c_start);
    const auto count = parse_integer(t, r, c_count);
    require(count >= 0, ErrorCode::NegativeCount, t.where(r) + ": negative server count");
    require(count <= 10000, ErrorCode::BadValue, t.where(r) + ": server count out of range");
    rows[route].push_back({start, {static_cast<int>(count), r}});
  }
  RosterSet out;
  for (auto& [route, entries] : rows) {
    std::stable_sort(entries.begin(), entries.end(), [](auto& a, auto& b) { return a.first < b.first; });
    std::vector<double> bp;
    std::vector<int> counts;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (i > 0)
        require(entries[i].first != entries[i - 1].first, ErrorCode::OverlappingIntervals,
                t.where(entries[i].second.second) + ": route " + route + " has two intervals starting at " +
                    format_number(entries[i].first));
      bp.push_back(entries[i].first);
      counts.push_back(entries[i].second.first);
    }
    out[route] = StepSchedule(std::move(bp), std::move(counts));
  }
  return out;
}

inline std::string roster_text(const RosterSet& rosters) {
  std::string s = "route,start_min,count\n";
  for (const auto& [route, schedule] : rosters)
    for (std::size_t i = 0; i < schedule.size(); ++i)
      s += route + "," + format_number(schedule.breakpoints()[i]) + "," + std::to_string(schedule.counts()[i]) + "\n";
  return s;
}

inline void save_roster(const RosterSet& rosters, const fs::path& path) { write_text(path, roster_text(rosters)); }

// ---------------------------------------------------------------------------
// Counts: stream,minute,count

inline constexpr int kMaxMinute = 2880;  // one day plus a day of overflow

inline CountStreams load_counts(const fs::path& path) {
  const auto t = read_csv(path);
  const auto c_stream = t.column("stream"), c_min = t.column("minute"), c_count = t.column("count");
  CountStreams out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& name = t.rows[r][c_stream];
    require(!name.empty(), ErrorCode::BadValue, t.where(r) + ": empty stream name");
    const auto minute = parse_integer(t, r, c_min);
    require(minute >= 0 && minute <= kMaxMinute, ErrorCode::BadValue,
            t.where(r) + ": minute must lie in [0, " + std::to_string(kMaxMinute) + "]");
    const auto count = parse_integer(t, r, c_count);
    require(count >= 0, ErrorCode::BadValue, t.where(r) + ": negative count");
    auto& series = out[name];
    require(series.count(static_cast<int>(minute)) == 0, ErrorCode::DuplicateCell,
            t.where(r) + ": duplicate cell (" + name + ", " + std::to_string(minute) + ")");
    series[static_cast<int>(minute)] = count;
  }
  return out;
}

inline std::string counts_text(const CountStreams& streams) {
  std::string s = "stream,minute,count\n";
  for (const auto& [name, series] : streams)
    for (const auto& [minute, count] : series)
      if (count != 0) s += name + "," + std::to_string(minute) + "," + std::to_string(count) + "\n";
  return s;
}

inline void save_counts(const CountStreams& streams, const fs::path& path) { write_text(path, counts_text(streams)); }

// ---------------------------------------------------------------------------
// Gate counts (minutes since landing): flight_id,minute,count

using GateCounts = std::map<std::string, CountSeries>;

inline GateCounts load_gate_counts(const fs::path& path) {
  const auto t = read_csv(path);
  const auto c_id = t.column("flight_id"), c_min = t.column("minute"), c_count = t.column("count");
  GateCounts out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& id = t.rows[r][c_id];
    const auto minute = parse_integer(t, r, c_min);
    require(minute >= 0 && minute <= kMaxMinute, ErrorCode::BadValue, t.where(r) + ": minute out of range");
    const auto count = parse_integer(t, r, c_count);
    require(count >= 0, ErrorCode::BadValue, t.where(r) + ": negative count");
    auto& series = out[id];
    require(series.count(static_cast<int>(minute)) == 0, ErrorCode::DuplicateCell,
            t.where(r) + ": duplicate cell (" + id + ", " + std::to_string(minute) + ")");
    series[static_cast<int>(minute)] = count;
  }
  return out;
}

inline std::string gate_counts_text(const GateCounts& gates, const FlightSchedule& order) {
  std::string s = "flight_id,minute,count\n";
  for (const auto& f : order) {
    auto it = gates.find(f.flight_id);
    if (it == gates.end()) continue;
    for (const auto& [minute, count] : it->second)
      if (count != 0) s += f.flight_id + "," + std::to_string(minute) + "," + std::to_string(count) + "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------
// Disembarkation parameters: flight_id,alpha,beta

inline DisembarkParams load_disembark(const fs::path& path, const FlightSchedule& flights) {
  const auto t = read_csv(path);
  const auto c_id = t.column("flight_id"), c_a = t.column("alpha"), c_b = t.column("beta");
  std::map<std::string, GammaParams> by_id;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double a = parse_double(t, r, c_a), b = parse_double(t, r, c_b);
    require(a > 0 && b > 0, ErrorCode::BadValue, t.where(r) + ": alpha and beta must be > 0");
    by_id[t.rows[r][c_id]] = {a, b};
  }
  DisembarkParams out;
  for (const auto& f : flights) {
    auto it = by_id.find(f.flight_id);
    require(it != by_id.end(), ErrorCode::BadValue, path.string() + ": no parameters for flight " + f.flight_id);
    out.push_back(it->second);
  }
  return out;
}

inline std::string disembark_text(const DisembarkParams& params, const FlightSchedule& flights) {
  std::string s = "flight_id,alpha,beta\n";
  for (std::size_t i = 0; i < flights.size(); ++i)
    s += flights[i].flight_id + "," + format_number(params[i].shape) + "," + format_number(params[i].rate) + "\n";
  return s;
}

inline void save_disembark(const DisembarkParams& params, const FlightSchedule& flights, const fs::path& path) {
  write_text(path, disembark_text(params, flights));
}

/// Fits every flight; fails naming each flight without gate counts.
inline DisembarkParams fit_all_disembark(const FlightSchedule& flights, const GateCounts& gates) {
  DisembarkParams out;
  std::string missing;
  for (const auto& f : flights) {
    auto it = gates.find(f.flight_id);
    try {
      require(it != gates.end(), ErrorCode::NoCounts, "no gate counts");
      out.push_back(fit_disembark(it->second));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoCounts) throw;
      missing += (missing.empty() ? "" : ", ") + f.flight_id;
    }
  }
  require(missing.empty(), ErrorCode::NoCounts, "flights without disembarkation counts: " + missing);
  return out;
}

// ---------------------------------------------------------------------------
// Inference configuration (config.json)

struct InferenceConfig {
  KernelConfig kernel{20.0};
  std::vector<std::string> distance_streams = default_distance_streams();
  RouteConstants constants;
  PriorBox prior = PriorBox::airport();
  SabcConfig sabc;
  json raw;  // canonical document; hashed into posterior files
};

inline json to_json(const InferenceConfig& c) {
  json prior = json::object();
  for (std::size_t i = 0; i < c.prior.dim(); ++i) prior[c.prior.names()[i]] = {c.prior.lower()[i], c.prior.upper()[i]};
  return {
      {"version", 1},
      {"kernel", {{"sigma_k", c.kernel.sigma_k}}},
      {"distance_streams", c.distance_streams},
      {"route_constants", {{"p_imm_local", c.constants.p_imm_local}, {"p_imm_foreign", c.constants.p_imm_foreign}}},
      {"prior", prior},
      {"sabc",
       {{"n_particles", c.sabc.n_particles},
        {"max_simulations", c.sabc.max_simulations},
        {"decay", c.sabc.decay},
        {"proposal_scale", c.sabc.proposal_scale},
        {"epsilon_floor", c.sabc.epsilon_floor},
        {"epsilon_0", c.sabc.epsilon_rule == EpsilonRule::Fixed ? json(c.sabc.epsilon_0) : json("median")},
        {"target_epsilon", c.sabc.target_epsilon},
        {"max_sweeps", c.sabc.max_sweeps}}},
      {"seed", c.sabc.seed},
  };
}

inline InferenceConfig parse_inference_config(const json& doc) {
  try {
    InferenceConfig c;
    require(doc.value("version", 1) == 1, ErrorCode::VersionMismatch, "unsupported config version");
    if (doc.contains("kernel")) c.kernel.sigma_k = doc.at("kernel").value("sigma_k", 20.0);
    require(c.kernel.sigma_k > 0, ErrorCode::ConfigError, "kernel.sigma_k must be > 0");
    if (doc.contains("distance_streams")) c.distance_streams = doc.at("distance_streams").get<std::vector<std::string>>();
    require(!c.distance_streams.empty(), ErrorCode::ConfigError, "distance_streams must not be empty");
    const auto& rc = doc.at("route_constants");
    c.constants = {rc.at("p_imm_local").get<double>(), rc.at("p_imm_foreign").get<double>()};
    try {
      validate(c.constants);
    } catch (const Error& e) {
      fail(ErrorCode::ConfigError, e.what());
    }
    if (doc.contains("prior")) {
      const auto defaults = PriorBox::airport();
      std::vector<double> lo(defaults.lower()), hi(defaults.upper());
      for (std::size_t i = 0; i < defaults.dim(); ++i) {
        const auto& name = defaults.names()[i];
        if (!doc.at("prior").contains(name)) continue;
        const auto b = doc.at("prior").at(name).get<std::vector<double>>();
        require(b.size() == 2, ErrorCode::ConfigError, "prior." + name + " must be [lower, upper]");
        lo[i] = b[0];
        hi[i] = b[1];
      }
      c.prior = PriorBox(defaults.names(), lo, hi);
    }
    if (doc.contains("sabc")) {
      const auto& s = doc.at("sabc");
      c.sabc.n_particles = s.value("n_particles", c.sabc.n_particles);
      c.sabc.max_simulations = s.value("max_simulations", c.sabc.max_simulations);
      c.sabc.decay = s.value("decay", c.sabc.decay);
      c.sabc.proposal_scale = s.value("proposal_scale", c.sabc.proposal_scale);
      c.sabc.epsilon_floor = s.value("epsilon_floor", c.sabc.epsilon_floor);
      c.sabc.target_epsilon = s.value("target_epsilon", c.sabc.target_epsilon);
      c.sabc.max_sweeps = s.value("max_sweeps", c.sabc.max_sweeps);
      if (s.contains("epsilon_0") && s.at("epsilon_0").is_number()) {
        c.sabc.epsilon_rule = EpsilonRule::Fixed;
        c.sabc.epsilon_0 = s.at("epsilon_0").get<double>();
      }
    }
    c.sabc.seed = doc.value("seed", c.sabc.seed);
    c.sabc.validate();
    c.raw = to_json(c);
    return c;
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("config: ") + e.what());
  }
}

inline InferenceConfig load_inference_config(const fs::path& path) {
  try {
    return parse_inference_config(json::parse(read_text(path)));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
}

inline std::string hash_hex(std::string_view text) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << rng::tag(text);
  return ss.str();
}

inline std::string config_hash(const json& config) { return hash_hex(config.dump()); }

// ---------------------------------------------------------------------------
// Dataset bundle (one directory)

struct DatasetBundle {
  fs::path dir;
  FlightSchedule flights;
  RosterSet rosters;
  CountStreams observed;
  GateCounts gate_counts;
  InferenceConfig config;
  std::optional<DisembarkParams> disembark;
  json meta = json::object();

  /// Disembark parameters from disembark.csv, else fitted from the gate counts.
  DisembarkParams disembark_params() const { return disembark ? *disembark : fit_all_disembark(flights, gate_counts); }

  std::int64_t total_passengers() const {
    std::int64_t n = 0;
    for (const auto& f : flights) n += f.n_passengers;
    return n;
  }
};

namespace bundle_file {
inline constexpr const char* flights = "flights.csv";
inline constexpr const char* roster = "roster.csv";
inline constexpr const char* counts = "counts.csv";
inline constexpr const char* gate_counts = "gate_counts.csv";
inline constexpr const char* config = "config.json";
inline constexpr const char* meta = "meta.json";
inline constexpr const char* disembark = "disembark.csv";
}  // namespace bundle_file

inline void validate_bundle(const DatasetBundle& b) {
  for (const auto& route : {"SG", "MG"})
    require(b.rosters.count(route) == 1, ErrorCode::BadValue, (b.dir / bundle_file::roster).string() + ": no roster for route " + route);
  for (const auto& name : b.config.distance_streams)
    require(b.observed.count(name) == 1, ErrorCode::MissingStream,
            (b.dir / bundle_file::counts).string() + ": stream '" + name + "' named in config is missing");
  if (b.meta.contains("stream_totals"))
    for (const auto& [name, declared] : b.meta.at("stream_totals").items()) {
      auto it = b.observed.find(name);
      const std::int64_t actual = it == b.observed.end() ? 0 : total(it->second);
      require(actual == declared.get<std::int64_t>(), ErrorCode::BadValue,
              (b.dir / bundle_file::meta).string() + ": stream '" + name + "' totals " + std::to_string(actual) +
                  " but meta declares " + std::to_string(declared.get<std::int64_t>()));
    }
  for (const auto& [id, series] : b.gate_counts) {
    const bool known = std::any_of(b.flights.begin(), b.flights.end(), [&](auto& f) { return f.flight_id == id; });
    require(known, ErrorCode::BadValue, (b.dir / bundle_file::gate_counts).string() + ": unknown flight " + id);
  }
}

inline DatasetBundle load_bundle(const fs::path& dir) {
  DatasetBundle b;
  b.dir = dir;
  require(fs::is_directory(dir), ErrorCode::IoError, dir.string() + " is not a bundle directory");
  b.flights = load_flight_schedule(dir / bundle_file::flights);
  b.rosters = load_roster(dir / bundle_file::roster);
  b.observed = load_counts(dir / bundle_file::counts);
  if (fs::exists(dir / bundle_file::gate_counts)) b.gate_counts = load_gate_counts(dir / bundle_file::gate_counts);
  b.config = load_inference_config(dir / bundle_file::config);
  // an all-zero stream has no rows; with no passengers every stream is all zero
  if (b.total_passengers() == 0)
    for (const auto& name : b.config.distance_streams) b.observed.try_emplace(name);
  if (fs::exists(dir / bundle_file::meta)) {
    try {
      b.meta = json::parse(read_text(dir / bundle_file::meta));
    } catch (const json::parse_error& e) {
      fail(ErrorCode::BadValue, (dir / bundle_file::meta).string() + ": " + e.what());
    }
  }
  if (fs::exists(dir / bundle_file::disembark)) b.disembark = load_disembark(dir / bundle_file::disembark, b.flights);
  validate_bundle(b);
  return b;
}

inline void save_bundle(const DatasetBundle& b, const fs::path& dir) {
  fs::create_directories(dir);
  save_flight_schedule(b.flights, dir / bundle_file::flights);
  save_roster(b.rosters, dir / bundle_file::roster);
  save_counts(b.observed, dir / bundle_file::counts);
  write_text(dir / bundle_file::gate_counts, gate_counts_text(b.gate_counts, b.flights));
  write_text(dir / bundle_file::config, b.config.raw.dump(2) + "\n");
  write_text(dir / bundle_file::meta, b.meta.dump(2) + "\n");
  if (b.disembark) save_disembark(*b.disembark, b.flights, dir / bundle_file::disembark);
}

inline AirportInputs airport_inputs(const DatasetBundle& b) {
  return {b.flights, b.disembark_params(), b.rosters, b.config.constants};
}

// ---------------------------------------------------------------------------
// Posterior persistence

inline constexpr int kPosteriorVersion = 1;

namespace detail {
inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline double from_nullable(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}
}  // namespace detail

inline json posterior_to_json(const PosteriorSample& s, const json& config) {
  json rho = json::array();
  for (double r : s.rho) rho.push_back(detail::finite_or_null(r));
  json trace = json::array();
  for (const auto& t : s.trace)
    trace.push_back({{"sweep", t.sweep},
                     {"epsilon", t.epsilon},
                     {"mean_rho", detail::finite_or_null(t.mean_rho)},
                     {"acceptance_rate", t.acceptance_rate},
                     {"simulations", t.simulations}});
  return {{"format", "dqn-posterior"},
          {"version", kPosteriorVersion},
          {"config", config},
          {"config_hash", config_hash(config)},
          {"root_seed", s.root_seed},
          {"n", s.size()},
          {"sampling_names", s.sampling_names},
          {"reporting_names", s.reporting_names},
          {"sampling", s.sampling},
          {"reporting", s.reporting},
          {"rho", rho},
          {"trace", trace},
          {"counters",
           {{"simulations", s.simulations},
            {"accepted", s.accepted},
            {"rejected", s.rejected},
            {"out_of_support", s.out_of_support},
            {"failed", s.failed}}}};
}

inline void save_posterior(const PosteriorSample& s, const json& config, const fs::path& path) {
  write_text(path, posterior_to_json(s, config).dump() + "\n");
}

struct LoadedPosterior {
  PosteriorSample sample;
  json config;
};

inline LoadedPosterior posterior_from_json(const json& doc) {
  try {
    require(doc.value("format", std::string{}) == "dqn-posterior", ErrorCode::VersionMismatch, "not a posterior file");
    require(doc.at("version").get<int>() == kPosteriorVersion, ErrorCode::VersionMismatch,
            "posterior format version " + doc.at("version").dump() + " is not supported");
    LoadedPosterior out;
    out.config = doc.at("config");
    require(config_hash(out.config) == doc.at("config_hash").get<std::string>(), ErrorCode::VersionMismatch,
            "config hash does not match the embedded config");
    auto& s = out.sample;
    s.root_seed = doc.at("root_seed").get<std::uint64_t>();
    s.sampling_names = doc.at("sampling_names").get<std::vector<std::string>>();
    s.reporting_names = doc.at("reporting_names").get<std::vector<std::string>>();
    s.sampling = doc.at("sampling").get<std::vector<std::vector<double>>>();
    s.reporting = doc.at("reporting").get<std::vector<std::vector<double>>>();
    for (const auto& r : doc.at("rho")) s.rho.push_back(detail::from_nullable(r));
    for (const auto& t : doc.at("trace"))
      s.trace.push_back({t.at("sweep").get<std::size_t>(), t.at("epsilon").get<double>(),
                         detail::from_nullable(t.at("mean_rho")), t.at("acceptance_rate").get<double>(),
                         t.at("simulations").get<std::size_t>()});
    const auto& c = doc.at("counters");
    s.simulations = c.at("simulations").get<std::size_t>();
    s.accepted = c.at("accepted").get<std::size_t>();
    s.rejected = c.at("rejected").get<std::size_t>();
    s.out_of_support = c.at("out_of_support").get<std::size_t>();
    s.failed = c.at("failed").get<std::size_t>();
    const auto n = doc.at("n").get<std::size_t>();
    require(s.sampling.size() == n && s.reporting.size() == n && s.rho.size() == n, ErrorCode::BadValue,
            "posterior arrays disagree with n");
    return out;
  } catch (const json::exception& e) {
    fail(ErrorCode::BadValue, std::string("posterior: ") + e.what());
  }
}

inline LoadedPosterior load_posterior(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::BadValue, path.string() + ": " + e.what());
  }
  return posterior_from_json(doc);
}

/// Median and central credible interval per reporting-space parameter.
inline json posterior_summary(const PosteriorSample& s, double level = 0.90) {
  require(!s.empty(), ErrorCode::EmptyPosterior, "posterior sample is empty");
  json out = json::object();
  const double lo = (1.0 - level) / 2.0;
  for (std::size_t j = 0; j < s.reporting_names.size(); ++j) {
    auto col = s.reporting_column(j);
    std::sort(col.begin(), col.end());
    out[s.reporting_names[j]] = {{"median", quantile_sorted(col, 0.5)},
                                 {"lower", quantile_sorted(col, lo)},
                                 {"upper", quantile_sorted(col, 1.0 - lo)},
                                 {"level", level}};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bands

inline json band_to_json(const PredictionBand& b) {
  return {{"bin_width", b.bin_width}, {"level", b.level},       {"n_sims", b.n_sims},
          {"bin_start", b.bin_start}, {"lower", b.lower},       {"median", b.median},
          {"upper", b.upper},         {"n_populated", b.n_populated}};
}

inline json bands_to_json(const ScenarioBands& bands) {
  json out = json::object();
  for (const auto& [route, rb] : bands) out[route] = {{"wait", band_to_json(rb.wait)}, {"queue", band_to_json(rb.queue)}};
  return out;
}

// ---------------------------------------------------------------------------
// Simulation outputs

inline std::string passenger_table_text(const PassengerTable& table, const FlightSchedule& flights) {
  std::string s = "flight_id,passenger,nat,route,t_dis,t_ac,service,d_dis,d_ac,start_imm,d_imm,server\n";
  for (const auto& p : table.rows)
    s += flights[static_cast<std::size_t>(p.flight)].flight_id + "," + std::to_string(p.index) + "," +
         (p.nat == Nationality::Local ? "local" : "foreign") + "," + route_name(p.route) + "," +
         format_number(p.t_dis) + "," + format_number(p.t_ac) + "," + format_number(p.service) + "," +
         format_number(p.d_dis) + "," + format_number(p.d_ac) + "," + format_number(p.start_imm) + "," +
         format_number(p.d_imm) + "," + std::to_string(p.server) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic datasets

/// Optional per-stream detection: keep exactly `n` randomly chosen events of
/// the named stream (models counting loss in the observation system).
using DetectionTargets = std::map<std::string, std::int64_t>;

struct SyntheticSpec {
  FlightSchedule flights;
  RosterSet rosters;
  DisembarkParams disembark;  // generating disembarkation distribution
  Theta theta;
  InferenceConfig config;
  std::uint64_t seed = 1;
  DetectionTargets detection;
  std::string label = "synthetic";
  json extra_meta = json::object();
};

/// Simulates one day, minute-bins every stream, and assembles a complete
/// bundle with per-flight gate counts. Writes it when `out_dir` is non-empty.
inline DatasetBundle generate_synthetic_day(const SyntheticSpec& spec, const fs::path& out_dir = {}) {
  const auto sim = simulate_day(spec.flights, spec.disembark, spec.rosters, spec.theta, spec.config.constants, spec.seed);

  DatasetBundle b;
  b.dir = out_dir;
  b.flights = spec.flights;
  b.rosters = spec.rosters;
  b.config = spec.config;
  for (const auto& [name, times] : sim.streams) {
    std::vector<double> kept = times;
    if (auto it = spec.detection.find(name); it != spec.detection.end()) {
      const auto target = static_cast<std::size_t>(it->second);
      require(target <= kept.size(), ErrorCode::InvalidArgument,
              "detection target for '" + name + "' exceeds the simulated stream size");
      auto rng = rng::stream(spec.seed, {rng::tag("detect"), rng::tag(name)});
      for (std::size_t i = 0; i < target; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.uniform() * static_cast<double>(kept.size() - i));
        std::swap(kept[i], kept[std::min(j, kept.size() - 1)]);
      }
      kept.resize(target);
    }
    b.observed[name] = bin_by_minute(kept);
  }
  for (const auto& p : sim.table.rows)
    ++b.gate_counts[spec.flights[static_cast<std::size_t>(p.flight)].flight_id][static_cast<int>(std::floor(p.t_dis))];

  json totals = json::object();
  for (const auto& [name, series] : b.observed) totals[name] = total(series);
  b.meta = spec.extra_meta;
  b.meta["label"] = spec.label;
  b.meta["n_flights"] = spec.flights.size();
  b.meta["n_passengers"] = b.total_passengers();
  b.meta["stream_totals"] = totals;
  b.meta["generator"] = {{"seed", spec.seed},
                         {"theta",
                          {{"mu_ac", spec.theta.mu_ac},
                           {"sigma_ac", spec.theta.sigma_ac},
                           {"lambda_sg", spec.theta.lambda_sg},
                           {"lambda_mg", spec.theta.lambda_mg}}}};
  if (!out_dir.empty()) save_bundle(b, out_dir);
  return b;
}

}  // namespace dqn::io
