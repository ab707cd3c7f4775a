#pragma once

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <future>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqn/airport.hpp"
#include "dqn/error.hpp"
#include "dqn/io.hpp"
#include "dqn/perf.hpp"
#include "dqn/sabc.hpp"

namespace dqn {

using json = nlohmann::json;

struct RosterEdit {
  std::string route;
  double start = 0.0;  // must match an existing breakpoint of that route
  int count = 0;
};

struct ScenarioOverrides {
  std::map<std::string, double> delays;  // flight_id -> minutes
  std::vector<RosterEdit> roster_edits;

  bool empty() const noexcept { return delays.empty() && roster_edits.empty(); }
};

/// Applies delays and roster edits to a copy of `base`.
inline Scenario apply_overrides(const Scenario& base, const ScenarioOverrides& o) {
  Scenario s = base;
  for (const auto& [id, minutes] : o.delays) {
    auto it = std::find_if(s.flights.begin(), s.flights.end(), [&](const FlightRecord& f) { return f.flight_id == id; });
    require(it != s.flights.end(), ErrorCode::UnknownFlightId, "unknown flight_id '" + id + "'");
    require(std::isfinite(minutes), ErrorCode::BadValue, "delay for '" + id + "' is not finite");
    const double arrival = it->arrival_time + minutes;
    require(arrival >= 0.0 && arrival < 1440.0, ErrorCode::InvalidArgument,
            "delay of " + io::format_number(minutes) + " min moves flight '" + id + "' outside the day");
    it->arrival_time = arrival;
  }
  for (const auto& e : o.roster_edits) {
    auto it = s.rosters.find(e.route);
    require(it != s.rosters.end(), ErrorCode::UnknownRosterInterval, "unknown route '" + e.route + "'");
    require(e.count >= 0, ErrorCode::NegativeCount,
            "roster count for " + e.route + " at " + io::format_number(e.start) + " must be >= 0");
    require(it->second.set_count_at(e.start, e.count), ErrorCode::UnknownRosterInterval,
            "route " + e.route + " has no roster interval starting at " + io::format_number(e.start));
  }
  return s;
}

/// Flights whose arrival lies in [begin, end), with their disembark parameters.
inline Scenario restrict_to_window(const Scenario& s, double begin, double end) {
  require(begin < end, ErrorCode::InvalidArgument, "window must satisfy begin < end");
  Scenario out;
  out.rosters = s.rosters;
  out.constants = s.constants;
  for (std::size_t i = 0; i < s.flights.size(); ++i)
    if (s.flights[i].arrival_time >= begin && s.flights[i].arrival_time < end) {
      out.flights.push_back(s.flights[i]);
      out.disembark.push_back(s.disembark[i]);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Requests

inline constexpr std::size_t kMaxScenarioSims = 2000;

struct ScenarioRequest {
  ScenarioOverrides overrides;
  std::size_t n_sims = 500;
  double level = 0.95;
  std::optional<std::uint64_t> seed;
};

struct FieldError {
  std::string field;
  std::string message;
};

/// Malformed or out-of-range request fields; maps to HTTP 400.
class RequestError : public Error {
 public:
  explicit RequestError(std::vector<FieldError> fields)
      : Error(ErrorCode::BadValue, summary(fields)), fields_(std::move(fields)) {}
  const std::vector<FieldError>& fields() const noexcept { return fields_; }

 private:
  static std::string summary(const std::vector<FieldError>& f) {
    std::string s = "invalid request";
    for (const auto& e : f) s += "; " + e.field + ": " + e.message;
    return s;
  }
  std::vector<FieldError> fields_;
};

/// Parses and validates a request body against the scenario it will modify.
/// Every field problem is collected before throwing.
inline ScenarioRequest parse_scenario_request(const json& body, const Scenario& base) {
  ScenarioRequest r;
  std::vector<FieldError> errors;
  if (!body.is_object()) throw RequestError(std::vector<FieldError>{{"body", "must be a JSON object"}});
  static const std::vector<std::string> known{"delays", "roster", "n_sims", "level", "seed"};
  for (const auto& [key, _] : body.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) errors.push_back({key, "unknown field"});

  if (body.contains("delays")) {
    const auto& d = body.at("delays");
    if (!d.is_object()) {
      errors.push_back({"delays", "must be an object mapping flight_id to minutes"});
    } else {
      for (const auto& [id, v] : d.items()) {
        const std::string field = "delays." + id;
        auto it = std::find_if(base.flights.begin(), base.flights.end(), [&](auto& f) { return f.flight_id == id; });
        if (it == base.flights.end()) {
          errors.push_back({field, "unknown flight_id '" + id + "'"});
        } else if (!v.is_number() || !std::isfinite(v.get<double>())) {
          errors.push_back({field, "delay must be a finite number of minutes"});
        } else if (it->arrival_time + v.get<double>() < 0.0) {
          errors.push_back({field, "delay moves the arrival before midnight"});
        } else {
          r.overrides.delays[id] = v.get<double>();
        }
      }
    }
  }

  if (body.contains("roster")) {
    const auto& edits = body.at("roster");
    if (!edits.is_array()) {
      errors.push_back({"roster", "must be an array of {route, start, count}"});
    } else {
      for (std::size_t i = 0; i < edits.size(); ++i) {
        const std::string field = "roster[" + std::to_string(i) + "]";
        const auto& e = edits[i];
        if (!e.is_object() || !e.contains("route") || !e.contains("start") || !e.contains("count") ||
            !e.at("route").is_string() || !e.at("start").is_number() || !e.at("count").is_number_integer()) {
          errors.push_back({field, "needs string route, numeric start and integer count"});
          continue;
        }
        RosterEdit edit{e.at("route").get<std::string>(), e.at("start").get<double>(), 0};
        const auto count = e.at("count").get<std::int64_t>();
        auto route = base.rosters.find(edit.route);
        if (route == base.rosters.end()) {
          errors.push_back({field + ".route", "unknown route '" + edit.route + "'"});
          continue;
        }
        const auto bp = route->second.breakpoints();
        if (std::find(bp.begin(), bp.end(), edit.start) == bp.end()) {
          errors.push_back({field + ".start", "route " + edit.route + " has no interval starting at " +
                                                  io::format_number(edit.start)});
          continue;
        }
        if (count < 0 || count > 10000) {
          errors.push_back({field + ".count", "count must lie in [0, 10000]"});
          continue;
        }
        edit.count = static_cast<int>(count);
        r.overrides.roster_edits.push_back(std::move(edit));
      }
    }
  }

  if (body.contains("n_sims")) {
    const auto& n = body.at("n_sims");
    if (!n.is_number_integer() || n.get<std::int64_t>() < 1 || n.get<std::int64_t>() > static_cast<std::int64_t>(kMaxScenarioSims))
      errors.push_back({"n_sims", "must be an integer in [1, " + std::to_string(kMaxScenarioSims) + "]"});
    else
      r.n_sims = n.get<std::size_t>();
  }
  if (body.contains("level")) {
    const auto& l = body.at("level");
    if (!l.is_number() || !(l.get<double>() > 0.0 && l.get<double>() < 1.0))
      errors.push_back({"level", "must be a number in (0, 1)"});
    else
      r.level = l.get<double>();
  }
  if (body.contains("seed") && !body.at("seed").is_null()) {
    const auto& s = body.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0))
      errors.push_back({"seed", "must be a non-negative integer"});
    else
      r.seed = s.get<std::uint64_t>();
  }
  if (!errors.empty()) throw RequestError(std::move(errors));
  return r;
}

/// Canonical form with every default made explicit; used as the cache key.
inline json canonical_request(const ScenarioRequest& r, std::uint64_t seed) {
  json delays = json::object();
  for (const auto& [id, m] : r.overrides.delays)
    if (m != 0.0) delays[id] = m;
  auto edits = r.overrides.roster_edits;
  std::stable_sort(edits.begin(), edits.end(),
                   [](auto& a, auto& b) { return std::tie(a.route, a.start) < std::tie(b.route, b.start); });
  json roster = json::array();
  for (std::size_t i = 0; i < edits.size(); ++i) {
    // a later edit to the same interval wins
    if (i + 1 < edits.size() && edits[i + 1].route == edits[i].route && edits[i + 1].start == edits[i].start) continue;
    roster.push_back({{"route", edits[i].route}, {"start", edits[i].start}, {"count", edits[i].count}});
  }
  return {{"delays", delays}, {"roster", roster}, {"n_sims", r.n_sims}, {"level", r.level}, {"seed", seed}};
}

// ---------------------------------------------------------------------------
// Responses

inline json roster_to_json(const RosterSet& rosters) {
  json out = json::object();
  for (const auto& [route, s] : rosters)
    out[route] = {{"breakpoints", std::vector<double>(s.breakpoints().begin(), s.breakpoints().end())},
                  {"counts", std::vector<int>(s.counts().begin(), s.counts().end())}};
  return out;
}

inline json flight_markers(const FlightSchedule& flights) {
  json out = json::array();
  for (const auto& f : flights)
    out.push_back({{"flight_id", f.flight_id}, {"time", f.arrival_time}, {"passengers", f.n_passengers}});
  return out;
}

inline json scenario_response(const Scenario& s, const ScenarioBands& bands, const json& request, double compute_ms) {
  return {{"request", request},
          {"routes", io::bands_to_json(bands)},
          {"flights", flight_markers(s.flights)},
          {"rosters", roster_to_json(s.rosters)},
          {"compute_ms", compute_ms}};
}

// ---------------------------------------------------------------------------
// Single-flight response cache

/// Bounded cache of response bodies. Concurrent lookups of a key that is being
/// computed wait for that computation instead of starting another.
class SingleFlightCache {
 public:
  explicit SingleFlightCache(std::size_t capacity = 128) : capacity_(capacity) {}

  template <class Compute>
  std::shared_ptr<const std::string> get_or_compute(const std::string& key, Compute&& compute) {
    std::shared_future<std::shared_ptr<const std::string>> future;
    std::promise<std::shared_ptr<const std::string>> promise;
    bool owner = false;
    {
      std::lock_guard lock(mutex_);
      if (auto it = done_.find(key); it != done_.end()) {
        touch(key);
        ++hits_;
        return it->second;
      }
      if (auto it = pending_.find(key); it != pending_.end()) {
        future = it->second;
        ++hits_;
      } else {
        future = promise.get_future().share();
        pending_.emplace(key, future);
        owner = true;
        ++computations_;
      }
    }
    if (!owner) return future.get();

    try {
      auto value = std::make_shared<const std::string>(compute());
      {
        std::lock_guard lock(mutex_);
        pending_.erase(key);
        done_[key] = value;
        touch(key);
        while (done_.size() > capacity_) {
          done_.erase(order_.back());
          order_.pop_back();
        }
      }
      promise.set_value(value);
      return value;
    } catch (...) {
      {
        std::lock_guard lock(mutex_);
        pending_.erase(key);
      }
      promise.set_exception(std::current_exception());
      throw;
    }
  }

  std::size_t computations() const {
    std::lock_guard lock(mutex_);
    return computations_;
  }
  std::size_t hits() const {
    std::lock_guard lock(mutex_);
    return hits_;
  }

 private:
  void touch(const std::string& key) {
    order_.remove(key);
    order_.push_front(key);
  }

  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const std::string>> done_;
  std::map<std::string, std::shared_future<std::shared_ptr<const std::string>>> pending_;
  std::list<std::string> order_;
  std::size_t computations_ = 0;
  std::size_t hits_ = 0;
};

// ---------------------------------------------------------------------------
// Engine behind the HTTP endpoints

struct ServiceDefaults {
  std::size_t n_sims = 500;
  double level = 0.95;
  std::uint64_t seed = 1;
  std::size_t jobs = default_jobs();
};

class ScenarioEngine {
 public:
  ScenarioEngine(Scenario baseline, PosteriorSample posterior, json meta, ServiceDefaults defaults = {})
      : baseline_(std::move(baseline)),
        posterior_(std::move(posterior)),
        meta_(std::move(meta)),
        defaults_(defaults) {
    require(!posterior_.empty(), ErrorCode::EmptyPosterior, "posterior sample is empty");
    for (const auto& route : {"SG", "MG"})
      require(baseline_.rosters.count(route) == 1, ErrorCode::InvalidArgument, std::string("no roster for route ") + route);
    summary_ = io::posterior_summary(posterior_, 0.90).dump();
  }

  const Scenario& baseline() const noexcept { return baseline_; }
  const ServiceDefaults& defaults() const noexcept { return defaults_; }
  const SingleFlightCache& cache() const noexcept { return cache_; }

  ScenarioRequest default_request() const {
    ScenarioRequest r;
    r.n_sims = defaults_.n_sims;
    r.level = defaults_.level;
    return r;
  }

  ScenarioRequest parse(const json& body) const {
    json b = body;
    if (b.is_object()) {
      if (!b.contains("n_sims")) b["n_sims"] = defaults_.n_sims;
      if (!b.contains("level")) b["level"] = defaults_.level;
    }
    return parse_scenario_request(b, baseline_);
  }

  /// Response body for a request; byte-identical for equal canonical requests
  /// while the entry stays cached.
  std::shared_ptr<const std::string> respond(const ScenarioRequest& r) {
    const std::uint64_t seed = r.seed.value_or(defaults_.seed);
    const json canon = canonical_request(r, seed);
    return cache_.get_or_compute(canon.dump(), [&] {
      const auto t0 = std::chrono::steady_clock::now();
      const Scenario s = apply_overrides(baseline_, r.overrides);
      const auto bands = prediction_band(s, posterior_, r.n_sims, r.level, seed, defaults_.jobs);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      return scenario_response(s, bands, canon, std::round(ms * 1000.0) / 1000.0).dump();
    });
  }

  const std::string& posterior_summary() const noexcept { return summary_; }
  json meta() const { return meta_; }

 private:
  Scenario baseline_;
  PosteriorSample posterior_;
  json meta_;
  ServiceDefaults defaults_;
  std::string summary_;
  SingleFlightCache cache_;
};

/// Inventory document served at /api/meta.
inline json bundle_meta(const io::DatasetBundle& b, const Scenario& scenario, std::optional<std::pair<double, double>> window,
                        const ServiceDefaults& d) {
  json flights = json::array();
  for (const auto& f : b.flights)
    flights.push_back({{"flight_id", f.flight_id},
                       {"arrival_min", f.arrival_time},
                       {"gate_distance_m", f.gate_distance},
                       {"n_passengers", f.n_passengers},
                       {"prop_local", f.prop_local}});
  json streams = json::object();
  for (const auto& [name, series] : b.observed) streams[name] = total(series);
  json scenario_ids = json::array();
  std::int64_t scenario_pax = 0;
  for (const auto& f : scenario.flights) {
    scenario_ids.push_back(f.flight_id);
    scenario_pax += f.n_passengers;
  }
  return {{"label", b.meta.value("label", std::string{})},
          {"n_flights", b.flights.size()},
          {"n_passengers", b.total_passengers()},
          {"flights", flights},
          {"rosters", roster_to_json(b.rosters)},
          {"streams", streams},
          {"scenario",
           {{"window", window ? json{window->first, window->second} : json(nullptr)},
            {"flight_ids", scenario_ids},
            {"n_passengers", scenario_pax}}},
          {"defaults",
           {{"n_sims", d.n_sims}, {"level", d.level}, {"seed", d.seed}, {"max_n_sims", kMaxScenarioSims}}}};
}

/// The scenario a bundle describes: every flight, or those in `window`
/// (defaulting to the bundle's declared scenario window when present).
inline Scenario bundle_scenario(const io::DatasetBundle& b, std::optional<std::pair<double, double>>& window) {
  Scenario s{b.flights, b.disembark_params(), b.rosters, b.config.constants};
  if (!window && b.meta.contains("scenario_window")) {
    const auto w = b.meta.at("scenario_window").get<std::vector<double>>();
    require(w.size() == 2, ErrorCode::BadValue, "meta scenario_window must be [begin, end]");
    window = std::pair{w[0], w[1]};
  }
  return window ? restrict_to_window(s, window->first, window->second) : s;
}

}  // namespace dqn
