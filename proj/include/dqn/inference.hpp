#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dqn/airport.hpp"
#include "dqn/mmd.hpp"
#include "dqn/sabc.hpp"

namespace dqn {

/// Sampling space (alpha_ac, beta_ac, lambda_SG, lambda_MG) -> Theta.
inline Theta theta_from_sampling(std::span<const double> s) {
  require(s.size() == 4, ErrorCode::InvalidArgument, "sampling-space theta has 4 components");
  const auto [mu, sigma] = reparam_inverse({s[0], s[1]});
  return {mu, sigma, s[2], s[3]};
}

inline std::vector<double> sampling_from_theta(const Theta& t) {
  const GammaParams g = reparam(t.mu_ac, t.sigma_ac);
  return {g.shape, g.rate, t.lambda_sg, t.lambda_mg};
}

inline std::vector<double> airport_reporting(std::span<const double> s) {
  const Theta t = theta_from_sampling(s);
  return {t.mu_ac, t.sigma_ac, t.lambda_sg, t.lambda_mg};
}

inline const std::vector<std::string>& airport_reporting_names() {
  static const std::vector<std::string> names{"mu_ac", "sigma_ac", "lambda_sg", "lambda_mg"};
  return names;
}

/// Known inputs of one airport day.
struct AirportInputs {
  FlightSchedule flights;
  DisembarkParams disembark;
  RosterSet rosters;
  RouteConstants constants;
};

struct AirportSimulator {
  const AirportInputs* inputs;
  Streams operator()(std::span<const double> sampling_theta, std::uint64_t seed) const {
    return simulate_day(inputs->flights, inputs->disembark, inputs->rosters, theta_from_sampling(sampling_theta),
                        inputs->constants, seed)
        .streams;
  }
};

struct AirportDistance {
  const CompositeDistance* distance;
  double operator()(const Streams& simulated) const { return (*distance)(simulated); }
};

using AirportProblem = AbcProblem<AirportSimulator, AirportDistance>;

/// Binds the airport simulator and composite MMD into an ABC problem. The
/// inputs and distance must outlive the returned problem.
inline AirportProblem make_airport_problem(const AirportInputs& inputs, const CompositeDistance& distance,
                                           PriorBox prior = PriorBox::airport()) {
  return {std::move(prior), AirportSimulator{&inputs}, AirportDistance{&distance}, airport_reporting,
          airport_reporting_names()};
}

}  // namespace dqn
