#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dqn/counts.hpp"
#include "dqn/error.hpp"

namespace dqn {

struct KernelConfig {
  double sigma_k = 20.0;  // minutes
};

/// Compensated (Neumaier) summation.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Event times collapsed to distinct bin times with integer multiplicities.
struct BinnedSample {
  std::vector<double> times;  // distinct
  std::vector<std::int64_t> weights;

  std::int64_t total() const noexcept { return std::accumulate(weights.begin(), weights.end(), std::int64_t{0}); }
  std::size_t size() const noexcept { return times.size(); }

  std::vector<double> expand() const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(std::max<std::int64_t>(0, total())));
    for (std::size_t b = 0; b < times.size(); ++b) out.insert(out.end(), static_cast<std::size_t>(weights[b]), times[b]);
    return out;
  }
};

/// Left-edge binning: bin time is the minute itself; zero-count minutes drop out.
inline BinnedSample counts_to_binned(const CountSeries& series) {
  BinnedSample out;
  for (const auto& [minute, count] : series) {
    require(count >= 0, ErrorCode::BadValue, "negative count at minute " + std::to_string(minute));
    if (count == 0) continue;
    out.times.push_back(static_cast<double>(minute));
    out.weights.push_back(count);
  }
  return out;
}

namespace detail {

inline void check_kernel(const KernelConfig& k) {
  require(std::isfinite(k.sigma_k) && k.sigma_k > 0, ErrorCode::InvalidArgument, "kernel bandwidth must be > 0");
}

/// Gaussian kernel with a band cutoff at 9.1 sigma, where k < 1.1e-18. Pair
/// weights in each MMD term are normalized to sum to 1, so skipping pairs
/// beyond the band moves a distance by less than 5e-18.
class GaussianKernel {
 public:
  static constexpr double kBandSigmas = 9.1;

  explicit GaussianKernel(double sigma) : two_sigma_sq_(2.0 * sigma * sigma), cutoff_(sigma * kBandSigmas) {
    if (cutoff_ < 1e7) {
      table_.resize(static_cast<std::size_t>(std::ceil(cutoff_)) + 1);
      for (std::size_t d = 0; d < table_.size(); ++d) table_[d] = (*this)(static_cast<double>(d), 0.0);
    }
  }

  double operator()(double a, double b) const noexcept {
    const double d = a - b;
    return std::exp(-(d * d) / two_sigma_sq_);
  }
  double cutoff() const noexcept { return cutoff_; }

  /// k(d) for integer d in [0, cutoff]; built with the same expression as
  /// operator(), so lookups are bit-identical. Empty for very wide kernels.
  const std::vector<double>& integer_table() const noexcept { return table_; }

 private:
  double two_sigma_sq_;
  double cutoff_;
  std::vector<double> table_;
};

struct SortedBins {
  std::vector<double> times;
  std::vector<double> weights;
  bool integral = true;
};

inline SortedBins sorted_bins(const BinnedSample& s) {
  require(s.times.size() == s.weights.size(), ErrorCode::InvalidArgument, "binned sample size mismatch");
  std::vector<std::size_t> idx(s.times.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s.times[a] < s.times[b]; });
  SortedBins out;
  out.times.reserve(idx.size());
  out.weights.reserve(idx.size());
  for (auto i : idx) {
    require(std::isfinite(s.times[i]), ErrorCode::InvalidArgument, "binned time not finite");
    require(s.weights[i] >= 0, ErrorCode::BadValue, "binned weights must be >= 0");
    if (s.weights[i] == 0) continue;
    out.times.push_back(s.times[i]);
    out.weights.push_back(static_cast<double>(s.weights[i]));
    out.integral = out.integral && s.times[i] == std::floor(s.times[i]) && std::abs(s.times[i]) < 1e12;
  }
  return out;
}

/// sum_a sum_b wa wb k(ta, tb) over pairs inside the kernel band.
inline double weighted_cross(const SortedBins& x, const SortedBins& y, const GaussianKernel& k) {
  const double cut = k.cutoff();
  const bool lookup = x.integral && y.integral && !k.integer_table().empty();
  const std::vector<double>* table = lookup ? &k.integer_table() : nullptr;
  CompensatedSum total;
  std::size_t lo = 0;
  for (std::size_t a = 0; a < x.times.size(); ++a) {
    const double ta = x.times[a];
    while (lo < y.times.size() && y.times[lo] < ta - cut) ++lo;
    CompensatedSum row;
    for (std::size_t b = lo; b < y.times.size() && y.times[b] <= ta + cut; ++b) {
      const double kv = lookup ? (*table)[static_cast<std::size_t>(std::abs(ta - y.times[b]))] : k(ta, y.times[b]);
      row.add(y.weights[b] * kv);
    }
    total.add(x.weights[a] * row.value());
  }
  return total.value();
}

/// Same as weighted_cross(x, x) using symmetry.
inline double weighted_self(const SortedBins& x, const GaussianKernel& k) {
  const double cut = k.cutoff();
  const std::vector<double>* table = x.integral && !k.integer_table().empty() ? &k.integer_table() : nullptr;
  CompensatedSum diag;
  CompensatedSum off;
  for (std::size_t a = 0; a < x.times.size(); ++a) {
    const double ta = x.times[a];
    diag.add(x.weights[a] * x.weights[a]);  // k(t, t) = 1
    CompensatedSum row;
    for (std::size_t b = a + 1; b < x.times.size() && x.times[b] <= ta + cut; ++b) {
      const double kv = table ? (*table)[static_cast<std::size_t>(x.times[b] - ta)] : k(ta, x.times[b]);
      row.add(x.weights[b] * kv);
    }
    off.add(x.weights[a] * row.value());
  }
  return diag.value() + 2.0 * off.value();
}

inline double combine(double sxx, double syy, double sxy, double m, double n) {
  return sxx / (m * m) + syy / (n * n) - 2.0 * sxy / (m * n);
}

}  // namespace detail

/// Biased (V-statistic) MMD estimate with a Gaussian kernel, evaluated
/// directly over all m*n pairs.
inline double mmd_biased(std::span<const double> x, std::span<const double> y, const KernelConfig& kernel) {
  detail::check_kernel(kernel);
  require(!x.empty() && !y.empty(), ErrorCode::EmptySample, "MMD needs non-empty samples");
  const detail::GaussianKernel k(kernel.sigma_k);
  auto pair_sum = [&](std::span<const double> a, std::span<const double> b) {
    CompensatedSum s;
    for (double ai : a) {
      CompensatedSum row;
      for (double bj : b) row.add(k(ai, bj));
      s.add(row.value());
    }
    return s.value();
  };
  // cross term always in a canonical operand order
  const bool swap = std::lexicographical_compare(y.begin(), y.end(), x.begin(), x.end());
  const double sxy = swap ? pair_sum(y, x) : pair_sum(x, y);
  return detail::combine(pair_sum(x, x), pair_sum(y, y), sxy, static_cast<double>(x.size()),
                         static_cast<double>(y.size()));
}

/// The same estimator over binned samples, O(bins^2) (banded) instead of
/// O(m n); equal to mmd_biased on the expanded samples.
inline double mmd_weighted(const BinnedSample& bx, const BinnedSample& by, const KernelConfig& kernel) {
  detail::check_kernel(kernel);
  const auto x = detail::sorted_bins(bx);
  const auto y = detail::sorted_bins(by);
  const double m = std::accumulate(x.weights.begin(), x.weights.end(), 0.0);
  const double n = std::accumulate(y.weights.begin(), y.weights.end(), 0.0);
  require(m >= 1 && n >= 1, ErrorCode::ZeroTotal, "weighted MMD needs positive totals");
  const detail::GaussianKernel k(kernel.sigma_k);
  return detail::combine(detail::weighted_self(x, k), detail::weighted_self(y, k), detail::weighted_cross(x, y, k), m,
                         n);
}

inline const std::vector<std::string>& default_distance_streams() {
  static const std::vector<std::string> names{"ac", "imm", "imm_SG"};
  return names;
}

/// Sum of per-stream weighted MMDs between minute-binned simulated streams and
/// observed count streams. The observed self terms are computed once.
class CompositeDistance {
 public:
  CompositeDistance(const CountStreams& observed, KernelConfig kernel,
                    std::vector<std::string> stream_names = default_distance_streams())
      : kernel_(kernel), names_(std::move(stream_names)), k_(kernel.sigma_k) {
    detail::check_kernel(kernel_);
    for (const auto& name : names_) {
      auto it = observed.find(name);
      require(it != observed.end(), ErrorCode::MissingStream, "observed stream '" + name + "' missing");
      Observed o;
      o.bins = detail::sorted_bins(counts_to_binned(it->second));
      o.total = std::accumulate(o.bins.weights.begin(), o.bins.weights.end(), 0.0);
      require(o.total >= 1, ErrorCode::EmptySample, "observed stream '" + name + "' is empty");
      o.self = detail::weighted_self(o.bins, k_);
      obs_.push_back(std::move(o));
    }
  }

  const std::vector<std::string>& stream_names() const noexcept { return names_; }

  double stream_distance(std::size_t i, const CountSeries& simulated) const {
    const auto x = detail::sorted_bins(counts_to_binned(simulated));
    const double m = std::accumulate(x.weights.begin(), x.weights.end(), 0.0);
    require(m >= 1, ErrorCode::EmptySample, "simulated stream '" + names_[i] + "' is empty");
    const auto& o = obs_[i];
    return detail::combine(detail::weighted_self(x, k_), o.self, detail::weighted_cross(x, o.bins, k_), m, o.total);
  }

  double operator()(const CountStreams& simulated) const {
    double rho = 0.0;
    for (std::size_t i = 0; i < names_.size(); ++i) {
      auto it = simulated.find(names_[i]);
      require(it != simulated.end(), ErrorCode::MissingStream, "simulated stream '" + names_[i] + "' missing");
      rho += stream_distance(i, it->second);
    }
    return rho;
  }

  double operator()(const Streams& simulated) const {
    double rho = 0.0;
    for (std::size_t i = 0; i < names_.size(); ++i) {
      auto it = simulated.find(names_[i]);
      require(it != simulated.end(), ErrorCode::MissingStream, "simulated stream '" + names_[i] + "' missing");
      rho += stream_distance(i, bin_by_minute(it->second));
    }
    return rho;
  }

 private:
  struct Observed {
    detail::SortedBins bins;
    double total = 0.0;
    double self = 0.0;
  };
  KernelConfig kernel_;
  std::vector<std::string> names_;
  detail::GaussianKernel k_;
  std::vector<Observed> obs_;
};

/// rho = sum over the named streams of MMD(sim, obs), simulated side binned
/// to whole minutes like the observations.
inline double composite_distance(const Streams& simulated, const CountStreams& observed, const KernelConfig& kernel,
                                 const std::vector<std::string>& stream_names = default_distance_streams()) {
  return CompositeDistance(observed, kernel, stream_names)(simulated);
}

inline double composite_distance(const CountStreams& simulated, const CountStreams& observed,
                                 const KernelConfig& kernel,
                                 const std::vector<std::string>& stream_names = default_distance_streams()) {
  return CompositeDistance(observed, kernel, stream_names)(simulated);
}

}  // namespace dqn
