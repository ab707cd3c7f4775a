#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "dqn/error.hpp"
#include "dqn/parallel.hpp"
#include "dqn/random.hpp"

namespace dqn {

/// Independent uniform priors on an open box.
class PriorBox {
 public:
  PriorBox() = default;
  PriorBox(std::vector<std::string> names, std::vector<double> lower, std::vector<double> upper)
      : names_(std::move(names)), lower_(std::move(lower)), upper_(std::move(upper)) {
    require(names_.size() == lower_.size() && lower_.size() == upper_.size() && !names_.empty(),
            ErrorCode::InvalidArgument, "prior box needs matching names/lower/upper");
    for (std::size_t i = 0; i < lower_.size(); ++i)
      require(std::isfinite(lower_[i]) && std::isfinite(upper_[i]) && lower_[i] < upper_[i],
              ErrorCode::InvalidArgument, "prior bounds for '" + names_[i] + "' need lower < upper");
  }

  /// alpha_ac, beta_ac ~ U(0, 10); lambda_SG, lambda_MG ~ U(0, 2.5).
  static PriorBox airport() {
    return {{"alpha_ac", "beta_ac", "lambda_sg", "lambda_mg"}, {0, 0, 0, 0}, {10, 10, 2.5, 2.5}};
  }

  std::size_t dim() const noexcept { return lower_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<double>& lower() const noexcept { return lower_; }
  const std::vector<double>& upper() const noexcept { return upper_; }

  bool contains(std::span<const double> theta) const noexcept {
    if (theta.size() != dim()) return false;
    for (std::size_t i = 0; i < dim(); ++i)
      if (!(theta[i] > lower_[i] && theta[i] < upper_[i])) return false;
    return true;
  }

 private:
  std::vector<std::string> names_;
  std::vector<double> lower_;
  std::vector<double> upper_;
};

inline std::vector<double> sample_prior(const PriorBox& prior, rng::Engine& rng) {
  std::vector<double> theta(prior.dim());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    double v;
    do {
      v = prior.lower()[i] + (prior.upper()[i] - prior.lower()[i]) * rng.uniform();
    } while (!(v > prior.lower()[i] && v < prior.upper()[i]));  // open interval
    theta[i] = v;
  }
  return theta;
}

struct Particle {
  std::vector<double> theta;  // sampling space
  double rho = 0.0;
  std::uint64_t sim_seed = 0;
};

enum class EpsilonRule { MedianInitial, Fixed };

struct SabcConfig {
  std::size_t n_particles = 1000;
  std::size_t max_simulations = 200000;
  EpsilonRule epsilon_rule = EpsilonRule::MedianInitial;
  double epsilon_0 = 1.0;  // used with EpsilonRule::Fixed
  double decay = 0.05;     // per-sweep: eps <- eps * exp(-decay)
  double epsilon_floor = 1e-8;
  double proposal_scale = 0.5;  // multiplies the population covariance
  double regularizer = 1e-6;
  double target_epsilon = 0.0;  // stop once eps <= target (0 disables)
  std::size_t max_sweeps = 0;   // 0 = until the budget runs out
  std::uint64_t seed = 1;
  std::size_t jobs = 1;

  void validate() const {
    require(n_particles >= 2, ErrorCode::ConfigError, "SABC needs at least 2 particles");
    require(decay > 0, ErrorCode::ConfigError, "SABC decay must be > 0");
    require(proposal_scale > 0, ErrorCode::ConfigError, "proposal scale must be > 0");
    require(epsilon_floor > 0, ErrorCode::ConfigError, "epsilon floor must be > 0");
    require(epsilon_rule != EpsilonRule::Fixed || epsilon_0 > 0, ErrorCode::ConfigError, "epsilon_0 must be > 0");
  }
};

struct TraceRecord {
  std::size_t sweep = 0;
  double epsilon = 0.0;
  double mean_rho = 0.0;
  double acceptance_rate = 0.0;
  std::size_t simulations = 0;  // cumulative
};

struct PosteriorSample {
  std::vector<std::string> sampling_names;
  std::vector<std::string> reporting_names;
  std::vector<std::vector<double>> sampling;
  std::vector<std::vector<double>> reporting;
  std::vector<double> rho;
  std::vector<TraceRecord> trace;
  std::size_t simulations = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;        // simulated proposals that were rejected (includes simulator failures)
  std::size_t out_of_support = 0;  // proposals rejected without simulating
  std::size_t failed = 0;
  std::uint64_t root_seed = 0;

  std::size_t size() const noexcept { return sampling.size(); }
  bool empty() const noexcept { return sampling.empty(); }

  std::vector<double> reporting_column(std::size_t j) const {
    std::vector<double> col;
    col.reserve(reporting.size());
    for (const auto& r : reporting) col.push_back(r[j]);
    return col;
  }
};

/// A likelihood-free problem: `simulate(theta, seed)` produces data and
/// `distance(data)` compares them with the observations. `to_reporting`
/// maps sampling-space points to the reported parametrisation (identity if empty).
template <class Simulator, class Distance>
struct AbcProblem {
  PriorBox prior;
  Simulator simulate;
  Distance distance;
  std::function<std::vector<double>(std::span<const double>)> to_reporting;
  std::vector<std::string> reporting_names;
};

/// min(1, prior_ratio * exp((rho_old - rho_new) / epsilon)).
inline double accept_prob(double rho_old, double rho_new, double prior_ratio, double epsilon) {
  require(epsilon > 0, ErrorCode::InvalidArgument, "epsilon must be > 0");
  if (prior_ratio <= 0) return 0.0;
  if (rho_new <= rho_old) return std::min(1.0, prior_ratio);
  return std::min(1.0, prior_ratio * std::exp((rho_old - rho_new) / epsilon));
}

inline double anneal(double epsilon, double decay, double floor = 1e-8) {
  require(epsilon > 0, ErrorCode::InvalidArgument, "epsilon must be > 0");
  return std::max(floor, epsilon * std::exp(-decay));
}

/// Population covariance plus regularizer * I.
inline Eigen::MatrixXd population_covariance(const std::vector<Particle>& pop, double regularizer) {
  require(!pop.empty(), ErrorCode::InvalidArgument, "empty population");
  const auto d = static_cast<Eigen::Index>(pop.front().theta.size());
  const auto n = static_cast<double>(pop.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& p : pop) mean += Eigen::Map<const Eigen::VectorXd>(p.theta.data(), d);
  mean /= n;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& p : pop) {
    const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(p.theta.data(), d) - mean;
    cov += c * c.transpose();
  }
  if (pop.size() > 1) cov /= (n - 1.0);
  cov += regularizer * Eigen::MatrixXd::Identity(d, d);
  return cov;
}

struct SweepStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t out_of_support = 0;
  std::size_t failed = 0;
  std::size_t simulations = 0;
  double acceptance_rate = 0.0;
  double mean_rho = 0.0;
};

namespace sabc_tag {
inline constexpr std::uint64_t prior = rng::tag("prior");
inline constexpr std::uint64_t proposal = rng::tag("proposal");
inline constexpr std::uint64_t sim = rng::tag("sim");
}  // namespace sabc_tag

namespace detail {

template <class Problem>
bool evaluate(const Problem& problem, std::span<const double> theta, std::uint64_t seed, double& rho,
              std::string& error) {
  try {
    rho = problem.distance(problem.simulate(theta, seed));
    return true;
  } catch (const std::exception& e) {
    error = e.what();
    return false;
  }
}

inline void warn_failures(const std::vector<std::string>& errors, std::size_t sweep) {
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty())
      std::cerr << "warning: sweep " << sweep << " particle " << i << ": simulation failed (" << errors[i]
                << "), treated as rejection\n";
}

}  // namespace detail

/// One population Metropolis move at tolerance `epsilon`: every particle
/// proposes theta + N(0, proposal_scale * cov), simulates, and accepts under
/// the exp(-rho/epsilon) kernel. Out-of-support proposals are rejected
/// without a simulation. Randomness is keyed by (seed, sweep, particle).
template <class Problem>
SweepStats sabc_sweep(std::vector<Particle>& pop, double epsilon, const Eigen::MatrixXd& cov, const Problem& problem,
                      const SabcConfig& config, std::size_t sweep) {
  require(epsilon > 0, ErrorCode::InvalidArgument, "epsilon must be > 0");
  const std::size_t n = pop.size();
  const auto d = static_cast<Eigen::Index>(problem.prior.dim());
  Eigen::LLT<Eigen::MatrixXd> llt(config.proposal_scale * cov);
  require(llt.info() == Eigen::Success, ErrorCode::InvalidArgument, "proposal covariance not positive definite");
  const Eigen::MatrixXd chol = llt.matrixL();

  enum class Outcome { Accepted, Rejected, OutOfSupport, Failed };
  std::vector<Outcome> outcome(n, Outcome::Rejected);
  std::vector<std::string> errors(n);

  parallel_for(n, config.jobs, [&](std::size_t i) {
    auto rng = rng::stream(config.seed, {sabc_tag::proposal, sweep, i});
    std::normal_distribution<double> normal;
    Eigen::VectorXd z(d);
    for (Eigen::Index j = 0; j < d; ++j) z[j] = normal(rng);
    const Eigen::VectorXd step = chol * z;
    std::vector<double> proposal(pop[i].theta);
    for (Eigen::Index j = 0; j < d; ++j) proposal[static_cast<std::size_t>(j)] += step[j];
    const double u = rng.uniform();

    if (!problem.prior.contains(proposal)) {
      outcome[i] = Outcome::OutOfSupport;
      return;
    }
    const std::uint64_t seed = rng::derive(config.seed, {sabc_tag::sim, sweep, i});
    double rho = 0.0;
    if (!detail::evaluate(problem, proposal, seed, rho, errors[i])) {
      outcome[i] = Outcome::Failed;
      return;
    }
    if (u < accept_prob(pop[i].rho, rho, 1.0, epsilon)) {
      pop[i] = {std::move(proposal), rho, seed};
      outcome[i] = Outcome::Accepted;
    }
  });
  detail::warn_failures(errors, sweep);

  SweepStats stats;
  for (auto o : outcome) {
    switch (o) {
      case Outcome::Accepted: ++stats.accepted; break;
      case Outcome::Rejected: ++stats.rejected; break;
      case Outcome::OutOfSupport: ++stats.out_of_support; break;
      case Outcome::Failed:
        ++stats.failed;
        ++stats.rejected;
        break;
    }
  }
  stats.simulations = stats.accepted + stats.rejected;
  stats.acceptance_rate = n ? static_cast<double>(stats.accepted) / static_cast<double>(n) : 0.0;
  double sum = 0.0;
  for (const auto& p : pop) sum += p.rho;
  stats.mean_rho = n ? sum / static_cast<double>(n) : 0.0;
  return stats;
}

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lo);
  }
  return m;
}

template <class Problem>
PosteriorSample to_posterior(const std::vector<Particle>& pop, const Problem& problem) {
  PosteriorSample out;
  out.sampling_names = problem.prior.names();
  out.reporting_names = problem.reporting_names.empty() ? out.sampling_names : problem.reporting_names;
  for (const auto& p : pop) {
    out.sampling.push_back(p.theta);
    out.reporting.push_back(problem.to_reporting ? problem.to_reporting(p.theta) : p.theta);
    out.rho.push_back(p.rho);
  }
  return out;
}

/// N particles from the prior, one simulation each.
template <class Problem>
std::vector<Particle> initial_population(const Problem& problem, std::size_t n, std::uint64_t root, std::size_t jobs) {
  std::vector<Particle> pop(n);
  std::vector<std::string> errors(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    auto rng = rng::stream(root, {sabc_tag::prior, i});
    pop[i].theta = sample_prior(problem.prior, rng);
    pop[i].sim_seed = rng::derive(root, {sabc_tag::sim, 0, i});
    if (!evaluate(problem, pop[i].theta, pop[i].sim_seed, pop[i].rho, errors[i]))
      pop[i].rho = std::numeric_limits<double>::infinity();
  });
  warn_failures(errors, 0);
  return pop;
}

}  // namespace detail

/// Simulated-annealing ABC. Starts from N prior draws, sets epsilon_0 to the
/// median initial distance (or a fixed value), then alternates population
/// sweeps with geometric annealing while the remaining budget can pay for a
/// full sweep. `on_sweep` sees each trace record as it is produced.
template <class Problem>
PosteriorSample run_sabc(const Problem& problem, const SabcConfig& config,
                         const std::function<void(const TraceRecord&)>& on_sweep = {}) {
  config.validate();
  const std::size_t n = config.n_particles;
  require(config.max_simulations >= n, ErrorCode::BudgetExhaustedBeforeInit,
          "simulation budget " + std::to_string(config.max_simulations) + " is below the population size " +
              std::to_string(n));

  auto pop = detail::initial_population(problem, n, config.seed, config.jobs);
  std::size_t simulations = n;
  std::size_t accepted = 0, rejected = 0, out_of_support = 0, failed = 0;

  std::vector<double> rhos;
  for (const auto& p : pop) rhos.push_back(p.rho);
  double epsilon = config.epsilon_rule == EpsilonRule::Fixed ? config.epsilon_0 : detail::median(rhos);
  if (!(epsilon > config.epsilon_floor) || !std::isfinite(epsilon)) epsilon = std::isfinite(epsilon) ? config.epsilon_floor : 1.0;

  std::vector<TraceRecord> trace;
  {
    TraceRecord init{0, epsilon, std::accumulate(rhos.begin(), rhos.end(), 0.0) / static_cast<double>(n), 1.0,
                     simulations};
    trace.push_back(init);
    if (on_sweep) on_sweep(init);
  }

  std::size_t sweep = 0;
  while (simulations + n <= config.max_simulations) {
    if (config.max_sweeps && sweep >= config.max_sweeps) break;
    if (config.target_epsilon > 0 && epsilon <= config.target_epsilon) break;
    ++sweep;
    const Eigen::MatrixXd cov = population_covariance(pop, config.regularizer);
    const SweepStats stats = sabc_sweep(pop, epsilon, cov, problem, config, sweep);
    simulations += stats.simulations;
    accepted += stats.accepted;
    rejected += stats.rejected;
    out_of_support += stats.out_of_support;
    failed += stats.failed;
    TraceRecord rec{sweep, epsilon, stats.mean_rho, stats.acceptance_rate, simulations};
    trace.push_back(rec);
    if (on_sweep) on_sweep(rec);
    epsilon = anneal(epsilon, config.decay, config.epsilon_floor);
  }

  PosteriorSample out = detail::to_posterior(pop, problem);
  out.trace = std::move(trace);
  out.simulations = simulations;
  out.accepted = accepted;
  out.rejected = rejected;
  out.out_of_support = out_of_support;
  out.failed = failed;
  out.root_seed = config.seed;
  return out;
}

/// Plain rejection ABC: n_draws prior/simulation pairs, keep the n_keep with
/// the smallest distance (ties broken by draw index).
template <class Problem>
PosteriorSample rejection_abc(const Problem& problem, std::size_t n_keep, std::size_t n_draws, std::uint64_t seed,
                              std::size_t jobs = 1) {
  require(n_keep <= n_draws, ErrorCode::InvalidArgument, "n_keep must not exceed n_draws");
  auto pop = detail::initial_population(problem, n_draws, seed, jobs);
  std::vector<std::size_t> order(n_draws);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return pop[a].rho < pop[b].rho; });
  std::vector<Particle> kept;
  kept.reserve(n_keep);
  for (std::size_t i = 0; i < n_keep; ++i) kept.push_back(pop[order[i]]);
  PosteriorSample out = detail::to_posterior(kept, problem);
  out.simulations = n_draws;
  out.root_seed = seed;
  return out;
}

}  // namespace dqn
