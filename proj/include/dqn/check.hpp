#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqn/des_oracle.hpp"
#include "dqn/qdc.hpp"
#include "dqn/random.hpp"
#include "dqn/schedule.hpp"

namespace dqn {

/// One queue input: jobs plus a server schedule.
struct QueueInstance {
  std::vector<QueueJob> jobs;
  StepSchedule schedule;
};

struct InstanceShape {
  std::size_t max_jobs = 50;
  std::size_t min_breakpoints = 1;
  std::size_t max_breakpoints = 4;
  int max_count = 4;
  double horizon = 60.0;
  bool integer_times = false;  // forces ties between arrivals and breakpoints
};

inline QueueInstance random_instance(std::uint64_t seed, const InstanceShape& shape = {}) {
  auto rng = rng::stream(seed, {rng::tag("queue-instance")});
  auto below = [&](std::size_t n) { return std::min(n - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(n))); };
  auto time = [&](double scale) {
    const double t = rng.uniform() * scale;
    return shape.integer_times ? std::floor(t) : t;
  };

  const std::size_t n_bp = shape.min_breakpoints + below(shape.max_breakpoints - shape.min_breakpoints + 1);
  std::vector<double> bp{0.0};
  while (bp.size() < n_bp) {
    const double t = time(shape.horizon);
    if (std::find(bp.begin(), bp.end(), t) == bp.end()) bp.push_back(t);
  }
  std::sort(bp.begin(), bp.end());
  std::vector<int> counts;
  for (std::size_t i = 0; i < bp.size(); ++i) counts.push_back(static_cast<int>(below(static_cast<std::size_t>(shape.max_count) + 1)));

  QueueInstance inst{{}, StepSchedule(std::move(bp), std::move(counts))};
  const std::size_t n_jobs = below(shape.max_jobs + 1);
  for (std::size_t i = 0; i < n_jobs; ++i) {
    const double service = shape.integer_times ? 1.0 + std::floor(rng.uniform() * 5.0) : -std::log1p(-rng.uniform()) * 3.0;
    inst.jobs.push_back({time(shape.horizon), service, i});
  }
  return inst;
}

inline nlohmann::json instance_to_json(const QueueInstance& inst) {
  nlohmann::json jobs = nlohmann::json::array();
  for (const auto& j : inst.jobs) jobs.push_back({{"arrival", j.arrival}, {"service", j.service}});
  return {{"jobs", jobs},
          {"schedule",
           {{"breakpoints", std::vector<double>(inst.schedule.breakpoints().begin(), inst.schedule.breakpoints().end())},
            {"counts", std::vector<int>(inst.schedule.counts().begin(), inst.schedule.counts().end())}}}};
}

inline QueueInstance instance_from_json(const nlohmann::json& j) {
  QueueInstance inst{{},
                     StepSchedule(j.at("schedule").at("breakpoints").get<std::vector<double>>(),
                                  j.at("schedule").at("counts").get<std::vector<int>>())};
  std::size_t i = 0;
  for (const auto& job : j.at("jobs")) inst.jobs.push_back({job.at("arrival").get<double>(), job.at("service").get<double>(), i++});
  return inst;
}

/// Outcome of running both algorithms; `serviceable` is false when both
/// reported an unserviceable job.
struct OracleComparison {
  bool agree = false;
  bool serviceable = false;
  double max_abs_diff = 0.0;
  std::string detail;
};

inline OracleComparison compare_with_oracle(const QueueInstance& inst, double tolerance = 1e-9) {
  std::optional<QueueResult> fast, slow;
  std::string fast_err, slow_err;
  try {
    fast = qdc(inst.jobs, inst.schedule);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UnserviceableJob) throw;
    fast_err = e.what();
  }
  try {
    slow = des_oracle(inst.jobs, inst.schedule);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UnserviceableJob) throw;
    slow_err = e.what();
  }
  OracleComparison out;
  if (!fast && !slow) {
    out.agree = true;
    return out;
  }
  if (!fast || !slow) {
    out.detail = fast ? "oracle: " + slow_err : "qdc: " + fast_err;
    return out;
  }
  out.serviceable = true;
  for (std::size_t i = 0; i < fast->size(); ++i)
    out.max_abs_diff = std::max(out.max_abs_diff, std::abs(fast->departures[i] - slow->departures[i]));
  out.agree = out.max_abs_diff <= tolerance;
  if (!out.agree) out.detail = "max departure difference " + std::to_string(out.max_abs_diff);
  return out;
}

}  // namespace dqn
