#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "dqn/error.hpp"
#include "dqn/qdc.hpp"
#include "dqn/schedule.hpp"

namespace dqn {

/// Event-driven reference for `qdc`: advances a clock over arrival,
/// server-on/off and completion events and keeps explicit server state.
/// Slow but independent of the departure recursion; used in tests and
/// the `validate` command.
inline QueueResult des_oracle(std::span<const QueueJob> jobs, const StepSchedule& schedule) {
  detail::validate_jobs(jobs);
  QueueResult result;
  const std::size_t n = jobs.size();
  result.departures.assign(n, 0.0);
  result.server_assignment.assign(n, 0);
  result.service_start.assign(n, 0.0);
  if (n == 0) return result;

  struct Server {
    std::optional<std::size_t> job;
    double remaining = 0.0;
  };
  std::vector<Server> servers(static_cast<std::size_t>(schedule.max_count()));

  const auto order = detail::fcfs_order(jobs);
  const auto bp = schedule.breakpoints();
  const auto counts = schedule.counts();
  std::size_t next_arrival = 0;
  std::size_t next_break = 0;
  std::size_t departed = 0;
  int online = 0;
  std::deque<std::size_t> waiting;
  double clock = -kInfinity;

  auto is_online = [&](std::size_t k) { return static_cast<int>(k) < online; };

  while (departed < n) {
    double next = kInfinity;
    if (next_arrival < n) next = std::min(next, jobs[order[next_arrival]].arrival);
    if (next_break < bp.size()) next = std::min(next, bp[next_break]);
    for (std::size_t k = 0; k < servers.size(); ++k)
      if (servers[k].job && is_online(k)) next = std::min(next, clock + servers[k].remaining);

    if (next == kInfinity) {
      std::size_t stuck = waiting.empty() ? n : waiting.front();
      for (const auto& s : servers)
        if (s.job) stuck = *s.job;
      detail::unserviceable(jobs[stuck]);
    }

    // completions, then roster changes, then arrivals, then assignment
    for (std::size_t k = 0; k < servers.size(); ++k) {
      auto& s = servers[k];
      if (!s.job || !is_online(k)) continue;
      const double done_at = clock + s.remaining;
      if (done_at <= next) {
        result.departures[*s.job] = done_at;
        s.job.reset();
        s.remaining = 0.0;
        ++departed;
      } else {
        s.remaining -= next - clock;
      }
    }
    clock = next;

    while (next_break < bp.size() && bp[next_break] <= clock) online = counts[next_break++];
    while (next_arrival < n && jobs[order[next_arrival]].arrival <= clock) waiting.push_back(order[next_arrival++]);

    while (!waiting.empty()) {
      std::size_t k = 0;
      while (k < servers.size() && (servers[k].job || !is_online(k))) ++k;
      if (k == servers.size()) break;
      const std::size_t pos = waiting.front();
      waiting.pop_front();
      result.service_start[pos] = clock;
      result.server_assignment[pos] = static_cast<int>(k) + 1;
      if (jobs[pos].service == 0.0) {
        result.departures[pos] = clock;
        ++departed;
      } else {
        servers[k].job = pos;
        servers[k].remaining = jobs[pos].service;
      }
    }
  }
  return result;
}

}  // namespace dqn
