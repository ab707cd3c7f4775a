#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dqn/counts.hpp"
#include "dqn/error.hpp"
#include "dqn/qdc.hpp"
#include "dqn/random.hpp"
#include "dqn/schedule.hpp"

namespace dqn {

struct FlightRecord {
  std::string flight_id;
  double arrival_time = 0.0;   // minutes since midnight
  double gate_distance = 1.0;  // model distance unit, > 0
  int n_passengers = 0;
  double prop_local = 0.0;

  friend bool operator==(const FlightRecord&, const FlightRecord&) = default;
};

using FlightSchedule = std::vector<FlightRecord>;

/// Per-route server schedules keyed by route label ("SG", "MG").
using RosterSet = std::map<std::string, StepSchedule>;

inline void validate(const FlightRecord& f) {
  const std::string where = "flight " + f.flight_id + ": ";
  require(std::isfinite(f.arrival_time) && f.arrival_time >= 0.0 && f.arrival_time < 1440.0, ErrorCode::BadValue,
          where + "arrival_time must be in [0, 1440)");
  require(std::isfinite(f.gate_distance) && f.gate_distance > 0.0, ErrorCode::BadValue,
          where + "gate_distance must be > 0");
  require(f.n_passengers >= 0, ErrorCode::BadValue, where + "n_passengers must be >= 0");
  require(f.prop_local >= 0.0 && f.prop_local <= 1.0, ErrorCode::BadValue, where + "prop_local must be in [0, 1]");
}

struct GammaParams {
  double shape = 1.0;
  double rate = 1.0;
  friend bool operator==(const GammaParams&, const GammaParams&) = default;
};

/// Disembarkation-time distribution per flight, aligned with the schedule.
using DisembarkParams = std::vector<GammaParams>;

/// The four inferred parameters, in reporting space.
struct Theta {
  double mu_ac = 1.0;      // mean walking time per unit distance
  double sigma_ac = 1.0;   // sd of walking time per unit distance
  double lambda_sg = 1.0;  // smart-gate service rate (1/min)
  double lambda_mg = 1.0;  // manual-gate service rate (1/min)

  friend bool operator==(const Theta&, const Theta&) = default;
};

inline void validate(const Theta& t) {
  require(t.mu_ac > 0 && t.sigma_ac > 0 && t.lambda_sg > 0 && t.lambda_mg > 0, ErrorCode::InvalidArgument,
          "theta components must be strictly positive");
}

struct RouteConstants {
  double p_imm_local = 0.5;    // P(SG | local)
  double p_imm_foreign = 0.5;  // P(SG | foreign)
};

inline void validate(const RouteConstants& c) {
  require(c.p_imm_local >= 0 && c.p_imm_local <= 1 && c.p_imm_foreign >= 0 && c.p_imm_foreign <= 1,
          ErrorCode::InvalidArgument, "route probabilities must lie in [0, 1]");
}

enum class Nationality : std::uint8_t { Local, Foreign };
enum class Route : std::uint8_t { SG, MG };

inline const char* route_name(Route r) { return r == Route::SG ? "SG" : "MG"; }

// ---------------------------------------------------------------------------
// (mean, sd) <-> (shape, rate)

inline GammaParams reparam(double mu, double sigma) {
  require(mu > 0 && sigma > 0, ErrorCode::InvalidArgument, "reparam needs mu > 0 and sigma > 0");
  const double ratio = mu / sigma;
  return {ratio * ratio, mu / (sigma * sigma)};
}

inline std::pair<double, double> reparam_inverse(GammaParams g) {
  require(g.shape > 0 && g.rate > 0, ErrorCode::InvalidArgument, "reparam_inverse needs shape, rate > 0");
  return {g.shape / g.rate, std::sqrt(g.shape) / g.rate};
}

// ---------------------------------------------------------------------------
// Per-passenger sampling primitives

inline double sample_gamma(GammaParams g, rng::Engine& rng) {
  return std::gamma_distribution<double>(g.shape, 1.0 / g.rate)(rng);
}

/// Walking time: a Gamma(alpha_ac, beta_ac) draw scaled by the gate distance.
inline double sample_walk(const Theta& theta, double distance, rng::Engine& rng) {
  require(distance > 0, ErrorCode::InvalidArgument, "walking distance must be > 0");
  return sample_gamma(reparam(theta.mu_ac, theta.sigma_ac), rng) * distance;
}

/// Nationality from `nat_rng`, route from `route_rng`.
inline std::pair<Nationality, Route> assign_nat_route(double prop_local, const RouteConstants& constants,
                                                      rng::Engine& nat_rng, rng::Engine& route_rng) {
  const Nationality nat = nat_rng.uniform() < prop_local ? Nationality::Local : Nationality::Foreign;
  const double p_sg = nat == Nationality::Local ? constants.p_imm_local : constants.p_imm_foreign;
  const Route route = route_rng.uniform() < p_sg ? Route::SG : Route::MG;
  return {nat, route};
}

inline std::pair<Nationality, Route> assign_nat_route(double prop_local, const RouteConstants& constants,
                                                      rng::Engine& rng) {
  return assign_nat_route(prop_local, constants, rng, rng);
}

/// Exp(lambda_route) drawn as Exp(1)/lambda so a fixed stream gives common
/// random numbers across rates.
inline double sample_service(Route route, const Theta& theta, rng::Engine& rng) {
  const double rate = route == Route::SG ? theta.lambda_sg : theta.lambda_mg;
  return std::exponential_distribution<double>(1.0)(rng) / rate;
}

// ---------------------------------------------------------------------------
// Disembarkation fit

/// Weighted method of moments on bin midpoints (minute + 0.5), with the
/// variance floored at 1/12 (uniform spread inside one bin).
inline GammaParams fit_disembark(const CountSeries& gate_counts) {
  double weight = 0.0;
  double first = 0.0;
  for (const auto& [minute, count] : gate_counts) {
    require(count >= 0, ErrorCode::BadValue, "gate counts must be >= 0");
    weight += static_cast<double>(count);
    first += static_cast<double>(count) * (minute + 0.5);
  }
  require(weight > 0, ErrorCode::NoCounts, "no disembarkation counts");
  const double mean = first / weight;
  double second = 0.0;
  for (const auto& [minute, count] : gate_counts) {
    const double d = minute + 0.5 - mean;
    second += static_cast<double>(count) * d * d;
  }
  const double var = std::max(second / weight, 1.0 / 12.0);
  require(mean > 0, ErrorCode::BadValue, "disembarkation mean must be positive");
  return {mean * mean / var, mean / var};
}

// ---------------------------------------------------------------------------
// One operational day

struct Passenger {
  int flight = 0;  // position in the flight schedule
  int index = 0;   // passenger index within the flight
  Nationality nat = Nationality::Local;
  Route route = Route::MG;
  double t_dis = 0.0;
  double t_ac = 0.0;
  double service = 0.0;
  double d_dis = 0.0;
  double d_ac = 0.0;
  double start_imm = 0.0;  // service start at immigration
  double d_imm = 0.0;
  int server = 0;
};

struct PassengerTable {
  std::vector<Passenger> rows;

  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }
};

struct DaySimulation {
  PassengerTable table;
  Streams streams;  // dis, ac, imm, imm_SG, imm_MG
};

namespace stream_tag {
inline constexpr std::uint64_t dis = rng::tag("dis");
inline constexpr std::uint64_t walk = rng::tag("ac");
inline constexpr std::uint64_t nat = rng::tag("nat");
inline constexpr std::uint64_t route = rng::tag("route");
inline constexpr std::uint64_t service = rng::tag("service");
}  // namespace stream_tag

inline const StepSchedule& roster_for(const RosterSet& rosters, Route route) {
  auto it = rosters.find(route_name(route));
  require(it != rosters.end(), ErrorCode::InvalidArgument, std::string("missing roster for route ") + route_name(route));
  return it->second;
}

/// Runs queue departure computation separately for each route, with jobs in
/// d_ac order (ties by flight then passenger). Fills start_imm/d_imm/server.
inline void run_immigration(PassengerTable& table, const RosterSet& rosters) {
  for (Route route : {Route::SG, Route::MG}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < table.rows.size(); ++i)
      if (table.rows[i].route == route) members.push_back(i);
    if (members.empty()) continue;
    std::vector<QueueJob> jobs(members.size());
    for (std::size_t j = 0; j < members.size(); ++j) {
      const auto& p = table.rows[members[j]];
      jobs[j] = {p.d_ac, p.service, members[j]};  // row order is (flight, passenger)
    }
    const QueueResult out = qdc(jobs, roster_for(rosters, route));
    for (std::size_t j = 0; j < members.size(); ++j) {
      auto& p = table.rows[members[j]];
      p.start_imm = out.service_start[j];
      p.d_imm = out.departures[j];
      p.server = out.server_assignment[j];
    }
  }
}

inline Streams table_streams(const PassengerTable& table) {
  Streams s;
  auto& dis = s["dis"];
  auto& ac = s["ac"];
  auto& imm = s["imm"];
  auto& sg = s["imm_SG"];
  auto& mg = s["imm_MG"];
  for (const auto& p : table.rows) {
    dis.push_back(p.d_dis);
    ac.push_back(p.d_ac);
    imm.push_back(p.d_imm);
    (p.route == Route::SG ? sg : mg).push_back(p.d_imm);
  }
  return s;
}

/// Samples one day of passenger trajectories. Every random variable of every
/// passenger has its own sub-stream keyed by (seed, variable, flight, passenger),
/// so changing one parameter leaves the other variables' draws untouched.
inline DaySimulation simulate_day(const FlightSchedule& flights, const DisembarkParams& disembark,
                                  const RosterSet& rosters, const Theta& theta, const RouteConstants& constants,
                                  std::uint64_t seed) {
  validate(theta);
  validate(constants);
  require(disembark.size() == flights.size(), ErrorCode::InvalidArgument,
          "disembark parameters must align with the flight schedule");
  const GammaParams walk = reparam(theta.mu_ac, theta.sigma_ac);

  DaySimulation sim;
  std::size_t total = 0;
  for (const auto& f : flights) total += static_cast<std::size_t>(std::max(0, f.n_passengers));
  sim.table.rows.reserve(total);

  for (std::size_t i = 0; i < flights.size(); ++i) {
    const auto& f = flights[i];
    validate(f);
    const GammaParams dis = disembark[i];
    require(dis.shape > 0 && dis.rate > 0, ErrorCode::InvalidArgument,
            "disembark parameters must be positive for flight " + f.flight_id);
    for (int j = 0; j < f.n_passengers; ++j) {
      const auto fi = static_cast<std::uint64_t>(i);
      const auto pj = static_cast<std::uint64_t>(j);
      auto dis_rng = rng::stream(seed, {stream_tag::dis, fi, pj});
      auto walk_rng = rng::stream(seed, {stream_tag::walk, fi, pj});
      auto nat_rng = rng::stream(seed, {stream_tag::nat, fi, pj});
      auto route_rng = rng::stream(seed, {stream_tag::route, fi, pj});
      auto service_rng = rng::stream(seed, {stream_tag::service, fi, pj});

      Passenger p;
      p.flight = static_cast<int>(i);
      p.index = j;
      p.t_dis = sample_gamma(dis, dis_rng);
      p.t_ac = sample_gamma(walk, walk_rng) * f.gate_distance;
      std::tie(p.nat, p.route) = assign_nat_route(f.prop_local, constants, nat_rng, route_rng);
      p.service = sample_service(p.route, theta, service_rng);
      p.d_dis = f.arrival_time + p.t_dis;
      p.d_ac = p.d_dis + p.t_ac;
      sim.table.rows.push_back(p);
    }
  }
  run_immigration(sim.table, rosters);
  sim.streams = table_streams(sim.table);
  return sim;
}

}  // namespace dqn
