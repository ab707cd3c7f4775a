#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dqn {

/// Passenger counts per whole minute (minute -> count). Absent minutes are 0.
using CountSeries = std::map<int, std::int64_t>;

/// Named event-time vectors (minutes), e.g. "ac", "imm", "imm_SG".
using Streams = std::map<std::string, std::vector<double>>;

/// Named observation streams in binned form.
using CountStreams = std::map<std::string, CountSeries>;

inline std::int64_t total(const CountSeries& series) {
  std::int64_t sum = 0;
  for (const auto& [minute, count] : series) sum += count;
  return sum;
}

/// Bins event times by floor(t) into a count series.
inline CountSeries bin_by_minute(std::span<const double> times) {
  CountSeries series;
  for (double t : times) ++series[static_cast<int>(std::floor(t))];
  return series;
}

inline CountStreams bin_by_minute(const Streams& streams) {
  CountStreams out;
  for (const auto& [name, times] : streams) out[name] = bin_by_minute(times);
  return out;
}

}  // namespace dqn
