#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dqn/error.hpp"
#include "dqn/schedule.hpp"

namespace dqn {

struct QueueJob {
  double arrival = 0.0;
  double service = 0.0;
  std::size_t input_index = 0;
};

/// Per-job results, aligned to the order the jobs were given in.
struct QueueResult {
  std::vector<double> departures;
  std::vector<int> server_assignment;  // 1-based
  std::vector<double> service_start;

  std::size_t size() const noexcept { return departures.size(); }
};

namespace detail {

inline void validate_jobs(std::span<const QueueJob> jobs) {
  for (const auto& job : jobs) {
    require(std::isfinite(job.arrival), ErrorCode::InvalidArgument,
            "job " + std::to_string(job.input_index) + " has a non-finite arrival");
    require(std::isfinite(job.service) && job.service >= 0.0, ErrorCode::InvalidArgument,
            "job " + std::to_string(job.input_index) + " has an invalid service time");
  }
}

/// Positions of `jobs` sorted by (arrival, input_index).
inline std::vector<std::size_t> fcfs_order(std::span<const QueueJob> jobs) {
  std::vector<std::size_t> order(jobs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (jobs[a].arrival != jobs[b].arrival) return jobs[a].arrival < jobs[b].arrival;
    return jobs[a].input_index < jobs[b].input_index;
  });
  return order;
}

[[noreturn]] inline void unserviceable(const QueueJob& job) {
  fail(ErrorCode::UnserviceableJob, "job " + std::to_string(job.input_index) + " (arrival " +
                                        std::to_string(job.arrival) +
                                        ") can never complete service under the schedule");
}

}  // namespace detail

/// Queue departure computation for a FCFS multi-server system whose server
/// count follows a step schedule.
///
/// Jobs enter service in (arrival, input_index) order. Each job takes the
/// server that becomes free-and-online first (lowest index on ties). Service
/// accrues only while that server is online; an off-shift suspends the job,
/// which resumes on the same server when it comes back.
inline QueueResult qdc(std::span<const QueueJob> jobs, const StepSchedule& schedule) {
  detail::validate_jobs(jobs);
  QueueResult result;
  const std::size_t n = jobs.size();
  result.departures.assign(n, 0.0);
  result.server_assignment.assign(n, 0);
  result.service_start.assign(n, 0.0);
  if (n == 0) return result;

  auto servers = expand_schedule(schedule);
  std::vector<std::size_t> cursor(servers.size(), 0);

  for (std::size_t pos : detail::fcfs_order(jobs)) {
    const QueueJob& job = jobs[pos];
    double best_time = kInfinity;
    std::size_t best = servers.size();
    for (std::size_t k = 0; k < servers.size(); ++k) {
      const auto& on = servers[k].on_intervals;
      const double from = std::max(job.arrival, servers[k].committed_until);
      std::size_t& c = cursor[k];
      while (c < on.size() && on[c].end <= from) ++c;
      if (c == on.size()) continue;
      const double avail = std::max(from, on[c].begin);
      if (avail < best_time) {
        best_time = avail;
        best = k;
      }
    }
    if (best == servers.size()) detail::unserviceable(job);

    const auto& on = servers[best].on_intervals;
    std::size_t c = cursor[best];
    double t = best_time;
    double remaining = job.service;
    while (remaining > on[c].end - t) {
      remaining -= on[c].end - t;
      if (++c == on.size()) detail::unserviceable(job);
      t = on[c].begin;
    }
    const double departure = t + remaining;
    cursor[best] = c;
    servers[best].committed_until = departure;

    result.departures[pos] = departure;
    result.service_start[pos] = best_time;
    result.server_assignment[pos] = servers[best].server_index;
  }
  return result;
}

inline QueueResult qdc(std::span<const double> arrivals, std::span<const double> services,
                       const StepSchedule& schedule) {
  require(arrivals.size() == services.size(), ErrorCode::InvalidArgument,
          "arrival and service vectors differ in length");
  std::vector<QueueJob> jobs(arrivals.size());
  for (std::size_t i = 0; i < jobs.size(); ++i) jobs[i] = {arrivals[i], services[i], i};
  return qdc(jobs, schedule);
}

/// w_j = d_j - a_j - s_j; suspended time counts as waiting.
inline std::vector<double> waiting_times(std::span<const QueueJob> jobs, const QueueResult& result) {
  std::vector<double> w(jobs.size());
  for (std::size_t i = 0; i < jobs.size(); ++i)
    w[i] = result.departures[i] - jobs[i].arrival - jobs[i].service;
  return w;
}

}  // namespace dqn
