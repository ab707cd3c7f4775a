#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dqn/airport.hpp"
#include "dqn/counts.hpp"
#include "dqn/error.hpp"
#include "dqn/qdc.hpp"
#include "dqn/random.hpp"
#include "dqn/schedule.hpp"

namespace dqn {

using Bindings = std::map<std::string, double>;

/// A number, or the name of a parameter bound at run time ("$lambda_0").
struct Param {
  double value = 0.0;
  std::string binding;

  double resolve(const Bindings& b) const {
    if (binding.empty()) return value;
    auto it = b.find(binding);
    require(it != b.end(), ErrorCode::ConfigError, "unbound parameter '" + binding + "'");
    return it->second;
  }
};

struct DistSpec {
  enum class Family { Gamma, Exponential, Deterministic };
  Family family = Family::Deterministic;
  Param a;  // gamma: shape, exponential: rate, deterministic: value
  Param b;  // gamma: rate
  bool degenerate = false;  // gamma collapsed to its mean shape/rate

  double sample(const Bindings& bind, rng::Engine& rng) const {
    switch (family) {
      case Family::Deterministic: return a.resolve(bind);
      case Family::Exponential: {
        const double rate = a.resolve(bind);
        require(rate > 0, ErrorCode::ConfigError, "exponential rate must be > 0");
        return std::exponential_distribution<double>(1.0)(rng) / rate;
      }
      case Family::Gamma: {
        const GammaParams g{a.resolve(bind), b.resolve(bind)};
        require(g.shape > 0 && g.rate > 0, ErrorCode::ConfigError, "gamma shape and rate must be > 0");
        return degenerate ? g.shape / g.rate : sample_gamma(g, rng);
      }
    }
    return 0.0;
  }
};

struct ArrivalSpec {
  enum class Kind { Flights, Explicit, Poisson };
  Kind kind = Kind::Explicit;
  FlightSchedule flights;        // Flights
  std::vector<double> times;     // Explicit
  std::vector<double> rate_breakpoints;  // Poisson: piecewise-constant rate on [bp_i, bp_{i+1})
  std::vector<double> rates;
  double end = 0.0;              // Poisson horizon
  double attribute = 0.0;        // per-customer routing attribute for non-flight arrivals
};

struct DelayStage {
  std::string name;
  std::string stream_key;
  std::vector<DistSpec> per_group;  // one per group, or a single shared entry
  bool scale_by_distance = false;
};

struct RouteStage {
  std::string name;
  std::string stream_key;
  std::string first_label;
  std::string second_label;
  // P(first_label): a parameter, the customer's attribute, or conditional on an earlier route's label.
  std::optional<Param> probability;
  bool use_attribute = false;
  std::string given;
  std::map<std::string, Param> conditional;
};

struct QueueStage {
  std::string name;
  std::string stream_key;
  std::string by;  // route stage whose label selects the queue
  std::map<std::string, DistSpec> service;
  std::map<std::string, StepSchedule> schedules;
};

using Stage = std::variant<DelayStage, RouteStage, QueueStage>;

struct NetworkConfig {
  ArrivalSpec arrivals;
  std::vector<Stage> stages;

  void validate() const {
    std::map<std::string, std::pair<std::string, std::string>> routes;
    std::map<std::string, int> names;
    for (const auto& stage : stages) {
      std::visit(
          [&](const auto& s) {
            require(!s.name.empty(), ErrorCode::ConfigError, "stage without a name");
            require(names[s.name]++ == 0, ErrorCode::ConfigError, "duplicate stage name '" + s.name + "'");
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, DelayStage>) {
              require(!s.per_group.empty(), ErrorCode::ConfigError, "delay stage '" + s.name + "' has no distribution");
            } else if constexpr (std::is_same_v<T, RouteStage>) {
              require(s.probability || s.use_attribute || !s.given.empty(), ErrorCode::ConfigError,
                      "route stage '" + s.name + "' has no probability");
              if (!s.given.empty()) {
                auto it = routes.find(s.given);
                require(it != routes.end(), ErrorCode::ConfigError,
                        "route stage '" + s.name + "' conditions on unknown stage '" + s.given + "'");
                for (const auto& label : {it->second.first, it->second.second})
                  require(s.conditional.count(label) == 1, ErrorCode::ConfigError,
                          "route stage '" + s.name + "' lacks a probability for label '" + label + "'");
              }
              routes[s.name] = {s.first_label, s.second_label};
            } else {
              auto it = routes.find(s.by);
              require(it != routes.end(), ErrorCode::ConfigError,
                      "queue stage '" + s.name + "' routes by unknown stage '" + s.by + "'");
              for (const auto& label : {it->second.first, it->second.second}) {
                require(s.schedules.count(label) == 1, ErrorCode::ConfigError,
                        "queue stage '" + s.name + "' has no schedule for route '" + label + "'");
                require(s.service.count(label) == 1, ErrorCode::ConfigError,
                        "queue stage '" + s.name + "' has no service distribution for route '" + label + "'");
              }
            }
          },
          stage);
    }
  }
};

namespace detail {

struct Customer {
  double time = 0.0;
  std::uint64_t group = 0;
  std::uint64_t index = 0;
  double distance = 1.0;
  double attribute = 0.0;
};

inline std::vector<Customer> make_customers(const ArrivalSpec& spec, std::uint64_t seed) {
  std::vector<Customer> out;
  switch (spec.kind) {
    case ArrivalSpec::Kind::Flights:
      for (std::size_t i = 0; i < spec.flights.size(); ++i) {
        const auto& f = spec.flights[i];
        validate(f);
        for (int j = 0; j < f.n_passengers; ++j)
          out.push_back({f.arrival_time, i, static_cast<std::uint64_t>(j), f.gate_distance, f.prop_local});
      }
      break;
    case ArrivalSpec::Kind::Explicit:
      for (std::size_t j = 0; j < spec.times.size(); ++j) out.push_back({spec.times[j], 0, j, 1.0, spec.attribute});
      break;
    case ArrivalSpec::Kind::Poisson: {
      require(spec.rate_breakpoints.size() == spec.rates.size() && !spec.rates.empty(), ErrorCode::ConfigError,
              "poisson arrivals need one rate per breakpoint");
      auto rng = rng::stream(seed, {rng::tag("arrivals")});
      std::exponential_distribution<double> unit(1.0);
      for (std::size_t i = 0; i < spec.rates.size(); ++i) {
        const double lo = spec.rate_breakpoints[i];
        const double hi = i + 1 < spec.rates.size() ? spec.rate_breakpoints[i + 1] : spec.end;
        if (spec.rates[i] <= 0) continue;
        for (double t = lo + unit(rng) / spec.rates[i]; t < hi; t += unit(rng) / spec.rates[i])
          out.push_back({t, 0, out.size(), 1.0, spec.attribute});
      }
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Runs the pipeline. Each stage draws from its own sub-stream keyed by
/// (seed, stage key, group, index), the same discipline as simulate_day.
/// Emits the current times after every delay and queue stage, and per-route
/// sub-streams "<queue>_<label>".
inline Streams simulate_network(const NetworkConfig& config, const Bindings& bindings, std::uint64_t seed) {
  config.validate();
  auto customers = detail::make_customers(config.arrivals, seed);
  std::map<std::string, std::vector<std::string>> labels;  // route stage -> label per customer
  Streams streams;

  auto key = [](const std::string& explicit_key, const std::string& name) {
    return rng::tag(explicit_key.empty() ? name : explicit_key);
  };

  for (const auto& stage : config.stages) {
    if (const auto* d = std::get_if<DelayStage>(&stage)) {
      const auto tag = key(d->stream_key, d->name);
      auto& out = streams[d->name];
      for (auto& c : customers) {
        const auto& dist = d->per_group.size() == 1 ? d->per_group.front() : d->per_group.at(c.group);
        auto rng = rng::stream(seed, {tag, c.group, c.index});
        double delay = dist.sample(bindings, rng);
        if (d->scale_by_distance) delay *= c.distance;
        c.time += delay;
        out.push_back(c.time);
      }
    } else if (const auto* r = std::get_if<RouteStage>(&stage)) {
      const auto tag = key(r->stream_key, r->name);
      auto& assigned = labels[r->name];
      assigned.resize(customers.size());
      for (std::size_t i = 0; i < customers.size(); ++i) {
        const auto& c = customers[i];
        double p;
        if (r->use_attribute)
          p = c.attribute;
        else if (!r->given.empty())
          p = r->conditional.at(labels.at(r->given)[i]).resolve(bindings);
        else
          p = r->probability->resolve(bindings);
        auto rng = rng::stream(seed, {tag, c.group, c.index});
        assigned[i] = rng.uniform() < p ? r->first_label : r->second_label;
      }
    } else {
      const auto& q = std::get<QueueStage>(stage);
      const auto tag = key(q.stream_key, q.name + "/service");
      const auto& route_of = labels.at(q.by);
      auto& all = streams[q.name];
      all.assign(customers.size(), 0.0);
      for (const auto& [label, schedule] : q.schedules) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < customers.size(); ++i)
          if (route_of[i] == label) members.push_back(i);
        std::vector<QueueJob> jobs(members.size());
        for (std::size_t j = 0; j < members.size(); ++j) {
          const auto& c = customers[members[j]];
          auto rng = rng::stream(seed, {tag, c.group, c.index});
          jobs[j] = {c.time, q.service.at(label).sample(bindings, rng), members[j]};
        }
        const auto result = qdc(jobs, schedule);
        auto& sub = streams[q.name + "_" + label];
        for (std::size_t j = 0; j < members.size(); ++j) {
          customers[members[j]].time = result.departures[j];
          sub.push_back(result.departures[j]);
        }
      }
      for (std::size_t i = 0; i < customers.size(); ++i) all[i] = customers[i].time;
    }
  }
  return streams;
}

// ---------------------------------------------------------------------------
// JSON form

namespace detail {

inline Param parse_param(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    require(s.size() > 1 && s.front() == '$', ErrorCode::ConfigError, "parameter string must look like \"$name\"");
    return {0.0, s.substr(1)};
  }
  require(j.is_number(), ErrorCode::ConfigError, "parameter must be a number or \"$name\"");
  return {j.get<double>(), {}};
}

inline DistSpec parse_dist(const nlohmann::json& j) {
  DistSpec d;
  const auto family = j.at("family").get<std::string>();
  if (family == "gamma") {
    d.family = DistSpec::Family::Gamma;
    d.a = parse_param(j.at("shape"));
    d.b = parse_param(j.at("rate"));
    d.degenerate = j.value("degenerate", false);
  } else if (family == "exponential") {
    d.family = DistSpec::Family::Exponential;
    d.a = parse_param(j.at("rate"));
  } else if (family == "deterministic") {
    d.family = DistSpec::Family::Deterministic;
    d.a = parse_param(j.at("value"));
  } else {
    fail(ErrorCode::ConfigError, "unknown distribution family '" + family + "'");
  }
  return d;
}

inline StepSchedule parse_schedule(const nlohmann::json& j) {
  std::vector<double> bp;
  std::vector<int> counts;
  for (const auto& seg : j) {
    bp.push_back(seg.at(0).get<double>());
    counts.push_back(seg.at(1).get<int>());
  }
  return {std::move(bp), std::move(counts)};
}

}  // namespace detail

/// Parses a network document, e.g.
///   {"arrivals": {"kind": "poisson", "breakpoints": [0, 60], "rates": [1, 3], "end": 120},
///    "stages": [{"type": "route", "name": "r", "labels": ["0", "1"], "p": 0.7},
///               {"type": "delay", "name": "A", "dist": {"family": "gamma", "shape": "$alpha", "rate": "$beta"}},
///               {"type": "queue", "name": "B", "by": "r",
///                "service": {"0": {"family": "exponential", "rate": "$lambda_0"}, ...},
///                "schedules": {"0": [[0, 2]], "1": [[0, 1], [60, 3]]}}]}
/// Flight arrivals are supplied separately (`kind: "flights"` takes the
/// schedule passed in).
inline NetworkConfig parse_network_config(const nlohmann::json& doc, const FlightSchedule& flights = {}) {
  try {
    NetworkConfig cfg;
    const auto& a = doc.at("arrivals");
    const auto kind = a.at("kind").get<std::string>();
    if (kind == "flights") {
      cfg.arrivals.kind = ArrivalSpec::Kind::Flights;
      cfg.arrivals.flights = flights;
    } else if (kind == "explicit") {
      cfg.arrivals.kind = ArrivalSpec::Kind::Explicit;
      cfg.arrivals.times = a.at("times").get<std::vector<double>>();
    } else if (kind == "poisson") {
      cfg.arrivals.kind = ArrivalSpec::Kind::Poisson;
      cfg.arrivals.rate_breakpoints = a.at("breakpoints").get<std::vector<double>>();
      cfg.arrivals.rates = a.at("rates").get<std::vector<double>>();
      cfg.arrivals.end = a.at("end").get<double>();
    } else {
      fail(ErrorCode::ConfigError, "unknown arrival kind '" + kind + "'");
    }
    cfg.arrivals.attribute = a.value("attribute", 0.0);

    for (const auto& s : doc.at("stages")) {
      const auto type = s.at("type").get<std::string>();
      const auto name = s.at("name").get<std::string>();
      const auto key = s.value("stream_key", std::string{});
      if (type == "delay") {
        DelayStage d{name, key, {}, s.value("scale_by_distance", false)};
        if (s.contains("per_group"))
          for (const auto& g : s.at("per_group")) d.per_group.push_back(detail::parse_dist(g));
        else
          d.per_group.push_back(detail::parse_dist(s.at("dist")));
        cfg.stages.emplace_back(std::move(d));
      } else if (type == "route") {
        RouteStage r;
        r.name = name;
        r.stream_key = key;
        const auto labels = s.at("labels").get<std::vector<std::string>>();
        require(labels.size() == 2 && labels[0] != labels[1], ErrorCode::ConfigError,
                "route stage '" + name + "' needs two distinct labels");
        r.first_label = labels[0];
        r.second_label = labels[1];
        if (s.contains("p")) {
          if (s.at("p").is_string() && s.at("p").get<std::string>() == "attribute")
            r.use_attribute = true;
          else
            r.probability = detail::parse_param(s.at("p"));
        }
        if (s.contains("given")) {
          r.given = s.at("given").get<std::string>();
          for (const auto& [label, p] : s.at("p_given").items()) r.conditional[label] = detail::parse_param(p);
        }
        cfg.stages.emplace_back(std::move(r));
      } else if (type == "queue") {
        QueueStage q;
        q.name = name;
        q.stream_key = key;
        q.by = s.at("by").get<std::string>();
        for (const auto& [label, d] : s.at("service").items()) q.service[label] = detail::parse_dist(d);
        for (const auto& [label, sch] : s.at("schedules").items()) q.schedules[label] = detail::parse_schedule(sch);
        cfg.stages.emplace_back(std::move(q));
      } else {
        fail(ErrorCode::ConfigError, "unknown stage type '" + type + "'");
      }
    }
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("network config: ") + e.what());
  }
}

/// The airport day as a pipeline: disembark -> walk -> nationality -> route -> immigration queues.
inline NetworkConfig airport_network(const FlightSchedule& flights, const DisembarkParams& disembark,
                                     const RosterSet& rosters, const RouteConstants& constants) {
  NetworkConfig cfg;
  cfg.arrivals.kind = ArrivalSpec::Kind::Flights;
  cfg.arrivals.flights = flights;

  DelayStage dis{"dis", "dis", {}, false};
  for (const auto& g : disembark)
    dis.per_group.push_back({DistSpec::Family::Gamma, {g.shape, {}}, {g.rate, {}}, false});
  cfg.stages.emplace_back(std::move(dis));
  cfg.stages.emplace_back(
      DelayStage{"ac", "ac", {{DistSpec::Family::Gamma, {0, "alpha_ac"}, {0, "beta_ac"}, false}}, true});

  RouteStage nat;
  nat.name = nat.stream_key = "nat";
  nat.first_label = "local";
  nat.second_label = "foreign";
  nat.use_attribute = true;
  cfg.stages.emplace_back(nat);

  RouteStage route;
  route.name = route.stream_key = "route";
  route.first_label = "SG";
  route.second_label = "MG";
  route.given = "nat";
  route.conditional = {{"local", {constants.p_imm_local, {}}}, {"foreign", {constants.p_imm_foreign, {}}}};
  cfg.stages.emplace_back(route);

  QueueStage imm;
  imm.name = "imm";
  imm.stream_key = "service";
  imm.by = "route";
  imm.service = {{"SG", {DistSpec::Family::Exponential, {0, "lambda_sg"}, {}, false}},
                 {"MG", {DistSpec::Family::Exponential, {0, "lambda_mg"}, {}, false}}};
  imm.schedules = {{"SG", rosters.at("SG")}, {"MG", rosters.at("MG")}};
  cfg.stages.emplace_back(std::move(imm));
  cfg.validate();
  return cfg;
}

inline Bindings airport_bindings(const Theta& theta) {
  const GammaParams walk = reparam(theta.mu_ac, theta.sigma_ac);
  return {{"alpha_ac", walk.shape}, {"beta_ac", walk.rate}, {"lambda_sg", theta.lambda_sg}, {"lambda_mg", theta.lambda_mg}};
}

}  // namespace dqn
