#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dqn/error.hpp"

namespace dqn {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Server count as a right-continuous step function of time (minutes).
/// counts[i] holds on [breakpoints[i], breakpoints[i+1]); the last count
/// extends to +inf and the value before the first breakpoint is 0.
class StepSchedule {
 public:
  StepSchedule() = default;

  StepSchedule(std::vector<double> breakpoints, std::vector<int> counts)
      : breakpoints_(std::move(breakpoints)), counts_(std::move(counts)) {
    require(breakpoints_.size() == counts_.size(), ErrorCode::InvalidArgument,
            "schedule needs one count per breakpoint");
    for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
      require(std::isfinite(breakpoints_[i]), ErrorCode::InvalidArgument, "schedule breakpoint not finite");
      require(counts_[i] >= 0, ErrorCode::NegativeCount, "schedule count must be >= 0");
      if (i > 0)
        require(breakpoints_[i] > breakpoints_[i - 1], ErrorCode::InvalidArgument,
                "schedule breakpoints must be strictly increasing");
    }
  }

  static StepSchedule constant(int count, double from = 0.0) { return StepSchedule({from}, {count}); }

  std::span<const double> breakpoints() const noexcept { return breakpoints_; }
  std::span<const int> counts() const noexcept { return counts_; }
  bool empty() const noexcept { return breakpoints_.empty(); }
  std::size_t size() const noexcept { return breakpoints_.size(); }

  int at(double t) const noexcept {
    auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
    if (it == breakpoints_.begin()) return 0;
    return counts_[static_cast<std::size_t>(it - breakpoints_.begin()) - 1];
  }

  int max_count() const noexcept {
    return counts_.empty() ? 0 : *std::max_element(counts_.begin(), counts_.end());
  }

  /// Same schedule with every count shifted by `delta` (clamped at zero).
  StepSchedule shifted(int delta) const {
    std::vector<int> c(counts_);
    for (auto& v : c) v = std::max(0, v + delta);
    return {breakpoints_, std::move(c)};
  }

  /// Replaces the count of the interval starting exactly at `start`.
  /// Returns false if no interval starts there.
  bool set_count_at(double start, int count) {
    require(count >= 0, ErrorCode::NegativeCount, "roster count must be >= 0");
    auto it = std::find(breakpoints_.begin(), breakpoints_.end(), start);
    if (it == breakpoints_.end()) return false;
    counts_[static_cast<std::size_t>(it - breakpoints_.begin())] = count;
    return true;
  }

  friend bool operator==(const StepSchedule&, const StepSchedule&) = default;

 private:
  std::vector<double> breakpoints_;
  std::vector<int> counts_;
};

struct Interval {
  double begin;
  double end;  // exclusive; +inf for the open terminal segment
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Availability of one server: online exactly when the schedule value >= index.
struct ServerTimeline {
  int server_index = 1;  // 1-based
  std::vector<Interval> on_intervals;
  double committed_until = -kInfinity;
};

/// Splits K(t) into K_max per-server timelines, merging adjacent on-pieces so
/// that on_intervals are maximal, disjoint, and ascending.
inline std::vector<ServerTimeline> expand_schedule(const StepSchedule& schedule) {
  const int kmax = schedule.max_count();
  std::vector<ServerTimeline> servers(static_cast<std::size_t>(kmax));
  const auto bp = schedule.breakpoints();
  const auto counts = schedule.counts();
  for (int k = 1; k <= kmax; ++k) {
    auto& timeline = servers[static_cast<std::size_t>(k - 1)];
    timeline.server_index = k;
    for (std::size_t i = 0; i < bp.size(); ++i) {
      if (counts[i] < k) continue;
      const double end = i + 1 < bp.size() ? bp[i + 1] : kInfinity;
      auto& on = timeline.on_intervals;
      if (!on.empty() && on.back().end == bp[i])
        on.back().end = end;
      else
        on.push_back({bp[i], end});
    }
  }
  return servers;
}

}  // namespace dqn
