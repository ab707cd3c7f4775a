#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dqn/airport.hpp"
#include "dqn/error.hpp"
#include "dqn/parallel.hpp"
#include "dqn/random.hpp"
#include "dqn/sabc.hpp"

namespace dqn {

using RouteFilter = std::optional<Route>;

inline bool matches(const Passenger& p, RouteFilter route) { return !route || p.route == *route; }

/// w = d_imm - d_ac - s per passenger (table order), clamped at 0 to absorb
/// rounding.
inline std::vector<double> waiting_times(const PassengerTable& table, RouteFilter route = std::nullopt) {
  std::vector<double> w;
  for (const auto& p : table.rows)
    if (matches(p, route)) w.push_back(std::max(0.0, p.d_imm - p.d_ac - p.service));
  return w;
}

/// Mean wait per bin of d_ac (the time a passenger reaches immigration).
/// Bins span the populated range contiguously; empty bins have count 0 and NaN mean.
struct WaitSeries {
  double bin_width = 5.0;
  std::vector<double> bin_start;
  std::vector<double> mean;
  std::vector<std::size_t> count;
};

/// Max number of passengers waiting (arrived, not yet in service) per bin.
struct QueueSeries {
  double bin_width = 1.0;
  std::vector<double> bin_start;
  std::vector<int> max_queue;
};

inline WaitSeries mean_wait_series(const PassengerTable& table, RouteFilter route = std::nullopt,
                                   double bin_width = 5.0) {
  require(bin_width > 0, ErrorCode::InvalidArgument, "bin width must be > 0");
  std::map<std::int64_t, std::pair<double, std::size_t>> bins;
  for (const auto& p : table.rows) {
    if (!matches(p, route)) continue;
    auto& [sum, n] = bins[static_cast<std::int64_t>(std::floor(p.d_ac / bin_width))];
    sum += std::max(0.0, p.d_imm - p.d_ac - p.service);
    ++n;
  }
  WaitSeries out;
  out.bin_width = bin_width;
  if (bins.empty()) return out;
  for (std::int64_t b = bins.begin()->first; b <= bins.rbegin()->first; ++b) {
    out.bin_start.push_back(static_cast<double>(b) * bin_width);
    auto it = bins.find(b);
    if (it == bins.end()) {
      out.mean.push_back(std::numeric_limits<double>::quiet_NaN());
      out.count.push_back(0);
    } else {
      out.mean.push_back(it->second.first / static_cast<double>(it->second.second));
      out.count.push_back(it->second.second);
    }
  }
  return out;
}

/// Q(t) = #{d_ac <= t < start_imm}; each bin reports the max of Q at its start
/// and at every event time inside it.
inline QueueSeries queue_length_series(const PassengerTable& table, RouteFilter route = std::nullopt,
                                       double bin_width = 1.0) {
  require(bin_width > 0, ErrorCode::InvalidArgument, "bin width must be > 0");
  std::vector<std::pair<double, int>> events;
  for (const auto& p : table.rows) {
    if (!matches(p, route) || !(p.start_imm > p.d_ac)) continue;
    events.emplace_back(p.d_ac, +1);
    events.emplace_back(p.start_imm, -1);
  }
  QueueSeries out;
  out.bin_width = bin_width;
  if (events.empty()) return out;
  std::sort(events.begin(), events.end());

  const auto first_bin = static_cast<std::int64_t>(std::floor(events.front().first / bin_width));
  const auto last_bin = static_cast<std::int64_t>(std::floor(events.back().first / bin_width));
  const auto nbins = static_cast<std::size_t>(last_bin - first_bin + 1);
  out.bin_start.resize(nbins);
  out.max_queue.assign(nbins, 0);
  for (std::size_t b = 0; b < nbins; ++b) out.bin_start[b] = static_cast<double>(first_bin + static_cast<std::int64_t>(b)) * bin_width;

  int q = 0;
  std::size_t e = 0;
  for (std::size_t b = 0; b < nbins; ++b) {
    const double lo = out.bin_start[b];
    const double hi = lo + bin_width;
    // Q at the bin start: everything at or before lo applied
    while (e < events.size() && events[e].first <= lo) q += events[e++].second;
    int best = q;
    while (e < events.size() && events[e].first < hi) {
      const double t = events[e].first;
      while (e < events.size() && events[e].first == t) q += events[e++].second;
      best = std::max(best, q);
    }
    out.max_queue[b] = best;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prediction bands

struct PredictionBand {
  double bin_width = 0.0;
  double level = 0.95;
  std::size_t n_sims = 0;
  std::vector<double> bin_start;
  std::vector<double> lower;
  std::vector<double> median;
  std::vector<double> upper;
  std::vector<std::size_t> n_populated;

  std::size_t size() const noexcept { return bin_start.size(); }

  double peak_median() const {
    return median.empty() ? std::numeric_limits<double>::quiet_NaN() : *std::max_element(median.begin(), median.end());
  }
};

struct RouteBands {
  PredictionBand wait;
  PredictionBand queue;
};

using ScenarioBands = std::map<std::string, RouteBands>;

/// Everything a prediction needs besides the posterior.
struct Scenario {
  FlightSchedule flights;
  DisembarkParams disembark;
  RosterSet rosters;
  RouteConstants constants;
};

/// Per-simulation series for each route; input to band summaries at any level.
struct PredictiveDraws {
  std::size_t n_sims = 0;
  std::vector<std::map<std::string, WaitSeries>> waits;
  std::vector<std::map<std::string, QueueSeries>> queues;
};

inline Theta theta_from_reporting(std::span<const double> r) {
  require(r.size() == 4, ErrorCode::InvalidArgument, "reporting-space theta has 4 components");
  return {r[0], r[1], r[2], r[3]};
}

namespace predict_tag {
inline constexpr std::uint64_t draw = rng::tag("posterior-draw");
inline constexpr std::uint64_t sim = rng::tag("predict-sim");
}  // namespace predict_tag

/// n_sims simulations, each with theta drawn uniformly (with replacement) from
/// the posterior particles. Sim i depends only on (seed, i), so two scenarios
/// run with the same seed share random numbers.
inline PredictiveDraws simulate_predictive(const Scenario& scenario, const PosteriorSample& posterior,
                                           std::size_t n_sims, std::uint64_t seed, std::size_t jobs = 1) {
  require(!posterior.empty(), ErrorCode::EmptyPosterior, "posterior sample is empty");
  require(n_sims >= 1, ErrorCode::InvalidArgument, "n_sims must be >= 1");
  PredictiveDraws draws;
  draws.n_sims = n_sims;
  draws.waits.resize(n_sims);
  draws.queues.resize(n_sims);
  parallel_for(n_sims, jobs, [&](std::size_t i) {
    auto rng = rng::stream(seed, {predict_tag::draw, i});
    const auto pick = std::min(posterior.size() - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(posterior.size())));
    const Theta theta = theta_from_reporting(posterior.reporting[pick]);
    const auto sim = simulate_day(scenario.flights, scenario.disembark, scenario.rosters, theta, scenario.constants,
                                  rng::derive(seed, {predict_tag::sim, i}));
    for (Route r : {Route::SG, Route::MG}) {
      draws.waits[i][route_name(r)] = mean_wait_series(sim.table, r);
      draws.queues[i][route_name(r)] = queue_length_series(sim.table, r);
    }
  });
  return draws;
}

/// Linear-interpolation empirical quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  require(!sorted.empty(), ErrorCode::EmptySample, "quantile of empty data");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(sorted.size() - 1, lo + 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace detail {

/// values[bin][..] per bin index relative to first_bin; empty entries are missing.
inline PredictionBand summarize_bins(const std::map<std::int64_t, std::vector<double>>& per_bin, double bin_width,
                                     std::size_t n_sims, double level, std::size_t min_populated) {
  PredictionBand band;
  band.bin_width = bin_width;
  band.level = level;
  band.n_sims = n_sims;
  const double lo_p = (1.0 - level) / 2.0;
  for (const auto& [bin, values] : per_bin) {
    if (values.size() < min_populated || values.empty()) continue;
    std::vector<double> v(values);
    std::sort(v.begin(), v.end());
    band.bin_start.push_back(static_cast<double>(bin) * bin_width);
    band.lower.push_back(quantile_sorted(v, lo_p));
    band.median.push_back(quantile_sorted(v, 0.5));
    band.upper.push_back(quantile_sorted(v, 1.0 - lo_p));
    band.n_populated.push_back(values.size());
  }
  return band;
}

inline std::int64_t bin_index(double start, double width) {
  return static_cast<std::int64_t>(std::llround(start / width));
}

}  // namespace detail

/// Pointwise percentile bands. Wait bins are reported only where at least half
/// of the simulations have passengers; queue lengths outside a simulation's
/// range are 0.
inline ScenarioBands summarize_bands(const PredictiveDraws& draws, double level) {
  require(level > 0 && level < 1, ErrorCode::InvalidArgument, "level must lie in (0, 1)");
  ScenarioBands out;
  const std::size_t min_populated = (draws.n_sims + 1) / 2;
  for (Route r : {Route::SG, Route::MG}) {
    const std::string name = route_name(r);
    std::map<std::int64_t, std::vector<double>> wait_bins;
    double wait_width = 5.0;
    for (const auto& sim : draws.waits) {
      const auto& ws = sim.at(name);
      wait_width = ws.bin_width;
      for (std::size_t b = 0; b < ws.bin_start.size(); ++b)
        if (ws.count[b] > 0) wait_bins[detail::bin_index(ws.bin_start[b], ws.bin_width)].push_back(ws.mean[b]);
    }
    std::map<std::int64_t, std::vector<double>> queue_bins;
    double queue_width = 1.0;
    for (const auto& sim : draws.queues) {
      const auto& qs = sim.at(name);
      queue_width = qs.bin_width;
      for (std::size_t b = 0; b < qs.bin_start.size(); ++b)
        queue_bins[detail::bin_index(qs.bin_start[b], qs.bin_width)];
    }
    for (auto& [bin, values] : queue_bins) values.assign(draws.n_sims, 0.0);
    for (std::size_t s = 0; s < draws.queues.size(); ++s) {
      const auto& qs = draws.queues[s].at(name);
      for (std::size_t b = 0; b < qs.bin_start.size(); ++b)
        queue_bins[detail::bin_index(qs.bin_start[b], qs.bin_width)][s] = qs.max_queue[b];
    }
    out[name].wait = detail::summarize_bins(wait_bins, wait_width, draws.n_sims, level, min_populated);
    out[name].queue = detail::summarize_bins(queue_bins, queue_width, draws.n_sims, level, 1);
  }
  return out;
}

inline ScenarioBands prediction_band(const Scenario& scenario, const PosteriorSample& posterior,
                                     std::size_t n_sims = 500, double level = 0.95, std::uint64_t seed = 1,
                                     std::size_t jobs = 1) {
  return summarize_bands(simulate_predictive(scenario, posterior, n_sims, seed, jobs), level);
}

}  // namespace dqn
