#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "dqn/io.hpp"
#include "dqn/mmd.hpp"
#include "oracles.hpp"

using namespace dqn;

namespace {

std::vector<double> random_times(std::mt19937_64& gen, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> out(n);
  for (auto& t : out) t = u(gen);
  return out;
}

BinnedSample random_binned(std::mt19937_64& gen, bool integral, int max_weight = 50) {
  std::uniform_int_distribution<int> n_bins(1, 200), weight(0, max_weight), minute(0, 1439);
  std::uniform_real_distribution<double> t(0.0, 1440.0);
  BinnedSample s;
  std::set<double> used;
  const int n = n_bins(gen);
  while (static_cast<int>(s.times.size()) < n) {
    const double time = integral ? minute(gen) : t(gen);
    if (!used.insert(time).second) continue;
    s.times.push_back(time);
    s.weights.push_back(weight(gen));
  }
  if (s.total() == 0) s.weights[0] = 1;
  return s;
}

CountStreams shifted(const CountStreams& streams, int delta) {
  CountStreams out;
  for (const auto& [name, series] : streams)
    for (const auto& [minute, count] : series) out[name][minute + delta] = count;
  return out;
}

}  // namespace

TEST(MmdBiased, SelfDistanceIsZero) {
  std::mt19937_64 gen(7);
  for (int rep = 0; rep < 20; ++rep) {
    const auto x = random_times(gen, 1 + rep * 13, 0, 1440);
    EXPECT_NEAR(mmd_biased(x, x, {20.0}), 0.0, 1e-12);
  }
}

TEST(MmdBiased, TwoPointClosedForm) {
  const std::vector<double> x{0.0}, y{1.0};
  EXPECT_NEAR(mmd_biased(x, y, {1.0}), 2.0 - 2.0 * std::exp(-0.5), 1e-12);
  EXPECT_NEAR(mmd_biased(x, y, {1.0}), 0.786938680574733, 1e-12);
}

TEST(MmdBiased, SymmetricExactly) {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<int> size(1, 60);
  for (int rep = 0; rep < 100; ++rep) {
    const auto x = random_times(gen, size(gen), 500, 800);
    const auto y = random_times(gen, size(gen), 520, 900);
    EXPECT_EQ(mmd_biased(x, y, {20.0}), mmd_biased(y, x, {20.0}));
  }
}

TEST(MmdBiased, MatchesLongDoubleDoubleLoop) {
  std::mt19937_64 gen(13);
  for (int rep = 0; rep < 50; ++rep) {
    const auto x = random_times(gen, 80, 0, 300);
    const auto y = random_times(gen, 60, 50, 350);
    EXPECT_NEAR(mmd_biased(x, y, {20.0}), oracle::naive_mmd(x, y, 20.0), 1e-12);
  }
}

TEST(MmdBiased, NonNegative) {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> sigma(0.01, 500.0);
  for (int rep = 0; rep < 200; ++rep) {
    const auto x = random_times(gen, 30, 0, 100);
    const auto y = random_times(gen, 25, 0, 100);
    EXPECT_GE(mmd_biased(x, y, {sigma(gen)}), -1e-12);
  }
}

TEST(MmdBiased, EmptySampleAndBadBandwidth) {
  const std::vector<double> x{1.0}, empty;
  try {
    mmd_biased(x, empty, {1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySample);
  }
  EXPECT_THROW(mmd_biased(x, x, {0.0}), Error);
  EXPECT_THROW(mmd_biased(x, x, {-1.0}), Error);
}

TEST(MmdBiased, ScaleLimits) {
  const std::vector<double> x{0, 1, 2}, y{10, 11, 12, 13};
  EXPECT_NEAR(mmd_biased(x, y, {1e-6}), 1.0 / 3 + 1.0 / 4, 1e-6);
  EXPECT_LT(mmd_biased(x, y, {1e6}), 1e-9);
  EXPECT_LT(mmd_biased(x, y, {1e3}), mmd_biased(x, y, {1e2}));
}

TEST(MmdWeighted, UnitWeightsEqualDirectEstimator) {
  std::mt19937_64 gen(19);
  for (int rep = 0; rep < 50; ++rep) {
    auto bx = random_binned(gen, rep % 2 == 0), by = random_binned(gen, rep % 2 == 0);
    for (auto& w : bx.weights) w = 1;
    for (auto& w : by.weights) w = 1;
    EXPECT_NEAR(mmd_weighted(bx, by, {20.0}), mmd_biased(bx.times, by.times, {20.0}), 1e-12);
  }
}

TEST(MmdWeighted, RandomBinnedPairsMatchExpandedNaive) {
  std::mt19937_64 gen(23);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const bool integral = rep % 2 == 0;
    const auto bx = random_binned(gen, integral, 10), by = random_binned(gen, integral, 10);
    const double fast = mmd_weighted(bx, by, {20.0});
    const double slow = oracle::naive_mmd(bx.expand(), by.expand(), 20.0);
    worst = std::max(worst, std::abs(fast - slow));
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(MmdWeighted, SelfDistanceIsZero) {
  std::mt19937_64 gen(29);
  for (int rep = 0; rep < 50; ++rep) {
    const auto b = random_binned(gen, rep % 2 == 0);
    EXPECT_NEAR(mmd_weighted(b, b, {20.0}), 0.0, 1e-12);
  }
}

TEST(MmdWeighted, ZeroBinsAreIgnored) {
  BinnedSample a{{600, 601, 602}, {2, 0, 1}}, b{{600, 602}, {2, 1}}, c{{590}, {3}};
  EXPECT_EQ(mmd_weighted(a, c, {20.0}), mmd_weighted(b, c, {20.0}));
}

TEST(MmdWeighted, ZeroTotal) {
  BinnedSample a{{600}, {0}}, b{{600}, {1}};
  try {
    mmd_weighted(a, b, {20.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroTotal);
  }
}

TEST(CountsToBinned, LeftEdgeAndZeroDrop) {
  const auto b = counts_to_binned({{600, 2}, {601, 0}, {602, 1}});
  EXPECT_EQ(b.times, (std::vector<double>{600, 602}));
  EXPECT_EQ(b.weights, (std::vector<std::int64_t>{2, 1}));
  EXPECT_EQ(b.expand(), (std::vector<double>{600, 600, 602}));
  EXPECT_TRUE(counts_to_binned({}).times.empty());
}

TEST(CountsToBinned, BundledObservedStreamSizes) {
  const auto counts = io::load_counts(std::filesystem::path(DQN_DATA_DIR) / "airport_day" / "counts.csv");
  EXPECT_EQ(counts_to_binned(counts.at("ac")).expand().size(), 4866u);
  EXPECT_EQ(counts_to_binned(counts.at("imm")).expand().size(), 5249u);
  EXPECT_EQ(counts_to_binned(counts.at("imm_SG")).expand().size(), 1468u);
}

TEST(CompositeDistance, SelfDistanceIsZero) {
  const auto counts = io::load_counts(std::filesystem::path(DQN_DATA_DIR) / "airport_day" / "counts.csv");
  EXPECT_NEAR(composite_distance(counts, counts, {20.0}), 0.0, 1e-9);
}

TEST(CompositeDistance, EqualsSumOfStreamDistances) {
  const auto obs = io::load_counts(std::filesystem::path(DQN_DATA_DIR) / "airport_day" / "counts.csv");
  const auto sim = shifted(obs, 7);
  double sum = 0.0;
  for (const auto& name : default_distance_streams())
    sum += mmd_weighted(counts_to_binned(sim.at(name)), counts_to_binned(obs.at(name)), {20.0});
  EXPECT_NEAR(composite_distance(sim, obs, {20.0}), sum, 1e-12);
}

TEST(CompositeDistance, RawStreamsAreMinuteBinned) {
  const CountStreams obs{{"ac", {{600, 3}}}, {"imm", {{610, 2}, {620, 1}}}, {"imm_SG", {{615, 1}}}};
  const Streams sim{{"ac", {600.2, 600.9, 601.5}}, {"imm", {610.0, 620.99, 630.1}}, {"imm_SG", {615.7}}};
  EXPECT_DOUBLE_EQ(composite_distance(sim, obs, {20.0}), composite_distance(bin_by_minute(sim), obs, {20.0}));
}

TEST(CompositeDistance, GrowsWithTranslation) {
  const auto obs = io::load_counts(std::filesystem::path(DQN_DATA_DIR) / "synthetic_day" / "counts.csv");
  double previous = composite_distance(obs, obs, {20.0});
  for (int delta : {1, 5, 20, 60}) {
    const double rho = composite_distance(shifted(obs, delta), obs, {20.0});
    EXPECT_GT(rho, previous) << "delta " << delta;
    previous = rho;
  }
}

TEST(CompositeDistance, MissingStream) {
  const CountStreams obs{{"ac", {{600, 3}}}, {"imm", {{610, 2}}}, {"imm_SG", {{615, 1}}}};
  auto sim = obs;
  sim.erase("imm_SG");
  try {
    composite_distance(sim, obs, {20.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingStream);
  }
  try {
    composite_distance(obs, sim, {20.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingStream);
  }
}

TEST(CompositeDistance, EmptySimulatedStream) {
  const CountStreams obs{{"ac", {{600, 3}}}, {"imm", {{610, 2}}}, {"imm_SG", {{615, 1}}}};
  auto sim = obs;
  sim["imm_SG"].clear();
  try {
    composite_distance(sim, obs, {20.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySample);
  }
}
