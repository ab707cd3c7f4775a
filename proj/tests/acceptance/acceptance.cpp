// Acceptance run: one PASS/FAIL line per criterion, exit status 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dqn/dqn.hpp"
#include "oracles.hpp"

using namespace dqn;
namespace fs = std::filesystem;

namespace {

const fs::path kData = DQN_DATA_DIR;

namespace limits {
constexpr std::size_t kOracleInstances = 1000;
constexpr double kOracleTolerance = 1e-9;
constexpr double kOracleSeconds = 10.0;

constexpr double kMm1Lambda = 0.5;
constexpr double kMm1Mu = 1.0;
constexpr std::size_t kMm1Jobs = 200000;
constexpr std::size_t kMm1Warmup = 10000;
constexpr double kMm1RelTolerance = 0.05;
constexpr double kMm1Seconds = 5.0;

constexpr double kMmdSelfTolerance = 1e-12;
constexpr int kMmdPairs = 200;
constexpr int kMmdMaxWeight = 50;
constexpr double kMmdNaiveTolerance = 1e-9;
constexpr double kMmdClosedFormTolerance = 1e-12;

constexpr int kThroughputRuns = 20;
constexpr double kSimulateSeconds = 0.1;

constexpr std::size_t kRecoveryParticles = 200;
constexpr std::size_t kRecoveryBudget = 20000;
constexpr std::uint64_t kRecoverySeed = 2024;
constexpr double kRecoveryLevel = 0.90;
constexpr double kRecoveryMedianRel = 0.25;
constexpr double kRecoverySeconds = 1800.0;

constexpr std::size_t kPriorParticles = 1000;
constexpr std::size_t kPriorBudget = 5000;
constexpr double kPriorKsP = 0.01;

constexpr std::size_t kScenarioSims = 500;
constexpr double kScenarioLevel = 0.95;
constexpr std::uint64_t kScenarioSeed = 11;
constexpr std::uint64_t kScenarioNoiseSeed = 12;
constexpr double kDelayMinutes = 15.0;
constexpr int kMovedServers = 2;
constexpr int kWindowPassengers = 1091;
constexpr double kPredictionSeconds = 35.0;

constexpr int kConservationSeeds = 25;
constexpr double kConservationTolerance = 1e-9;
constexpr double kConservationSeconds = 60.0;
}  // namespace limits

const Theta kTheta{1.41, 0.8, 0.8, 1.4};

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void run(int id, const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [pass, detail] = body();
    report(id, name, pass, detail);
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

BinnedSample random_binned(std::mt19937_64& gen, bool integral) {
  std::uniform_int_distribution<int> n_bins(1, 200), weight(0, limits::kMmdMaxWeight), minute(0, 1439);
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

struct ZeroStreamDistance {
  double operator()(const Streams&) const { return 0.0; }
};

RosterSet plus_one(const RosterSet& rosters) {
  RosterSet out;
  for (const auto& [route, k] : rosters) {
    std::vector<int> counts(k.counts().begin(), k.counts().end());
    for (auto& c : counts) ++c;
    out.emplace(route, StepSchedule({k.breakpoints().begin(), k.breakpoints().end()}, counts));
  }
  return out;
}

}  // namespace

int main() {
  run(1, "QDC matches event-driven oracle", [] {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t agreed = 0, serviceable = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < limits::kOracleInstances; ++i) {
      const auto inst = random_instance(rng::derive(7, {rng::tag("acceptance"), i}));
      const auto cmp = compare_with_oracle(inst, limits::kOracleTolerance);
      agreed += cmp.agree;
      serviceable += cmp.serviceable;
      worst = std::max(worst, cmp.max_abs_diff);
    }
    const double s = seconds_since(t0);
    return std::pair{agreed == limits::kOracleInstances && s < limits::kOracleSeconds,
                     fmt("%zu/%zu agree (%zu fully serviceable), max |diff| %.3g <= %.0e, %.2f s < %.0f s", agreed,
                         limits::kOracleInstances, serviceable, worst, limits::kOracleTolerance, s,
                         limits::kOracleSeconds)};
  });

  run(2, "M/M/1 mean queueing delay", [] {
    const auto t0 = std::chrono::steady_clock::now();
    auto gen = rng::stream(99, {rng::tag("mm1")});
    std::exponential_distribution<double> inter(limits::kMm1Lambda), service(limits::kMm1Mu);
    const std::size_t n = limits::kMm1Jobs + limits::kMm1Warmup;
    std::vector<double> a(n), s(n);
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      t += inter(gen);
      a[i] = t;
      s[i] = service(gen);
    }
    const auto out = qdc(a, s, StepSchedule::constant(1));
    long double total = 0;
    for (std::size_t i = limits::kMm1Warmup; i < n; ++i) total += out.service_start[i] - a[i];
    const double mean = static_cast<double>(total / limits::kMm1Jobs);
    const double expected = limits::kMm1Lambda / (limits::kMm1Mu * (limits::kMm1Mu - limits::kMm1Lambda));
    const double rel = std::abs(mean - expected) / expected;
    const double secs = seconds_since(t0);
    return std::pair{rel < limits::kMm1RelTolerance && secs < limits::kMm1Seconds,
                     fmt("mean wait %.4f vs %.4f (rel err %.2f%% < %.0f%%), %.2f s < %.0f s", mean, expected, 100 * rel,
                         100 * limits::kMm1RelTolerance, secs, limits::kMm1Seconds)};
  });

  run(3, "MMD correctness", [] {
    std::mt19937_64 gen(31);
    double self = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
      const auto b = random_binned(gen, rep % 2 == 0);
      self = std::max(self, std::abs(mmd_weighted(b, b, {20.0})));
      self = std::max(self, std::abs(mmd_biased(b.times, b.times, {20.0})));
    }
    double naive = 0.0;
    for (int rep = 0; rep < limits::kMmdPairs; ++rep) {
      const bool integral = rep % 2 == 0;
      const auto bx = random_binned(gen, integral), by = random_binned(gen, integral);
      naive = std::max(naive, std::abs(mmd_weighted(bx, by, {20.0}) - oracle::naive_mmd(bx.expand(), by.expand(), 20.0)));
    }
    const std::vector<double> x{0.0}, y{1.0};
    const double closed = std::abs(mmd_biased(x, y, {1.0}) - (2.0 - 2.0 * std::exp(-0.5)));
    return std::pair{self <= limits::kMmdSelfTolerance && naive <= limits::kMmdNaiveTolerance &&
                         closed <= limits::kMmdClosedFormTolerance,
                     fmt("(a) self %.2g <= %.0e; (b) %d weighted pairs vs naive %.2g <= %.0e; (c) two-point %.2g <= %.0e",
                         self, limits::kMmdSelfTolerance, limits::kMmdPairs, naive, limits::kMmdNaiveTolerance, closed,
                         limits::kMmdClosedFormTolerance)};
  });

  run(4, "simulate_day throughput", [] {
    const auto b = io::load_bundle(kData / "airport_day");
    const auto dis = b.disembark_params();
    std::vector<double> times;
    std::size_t pax = 0;
    for (int i = 0; i < limits::kThroughputRuns; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto sim = simulate_day(b.flights, dis, b.rosters, kTheta, b.config.constants, 500 + i);
      times.push_back(seconds_since(t0));
      pax = sim.table.size();
    }
    const double mean = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
    const double worst = *std::max_element(times.begin(), times.end());
    return std::pair{b.flights.size() == 29 && pax == 5454 && mean <= limits::kSimulateSeconds,
                     fmt("%zu flights / %zu passengers, mean %.4f s (max %.4f s) over %d runs <= %.1f s",
                         b.flights.size(), pax, mean, worst, limits::kThroughputRuns, limits::kSimulateSeconds)};
  });

  run(5, "synthetic parameter recovery", [] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto b = io::load_bundle(kData / "synthetic_day");
    const auto truth = b.meta.at("generator").at("theta");
    const auto inputs = io::airport_inputs(b);
    const CompositeDistance distance(b.observed, b.config.kernel, b.config.distance_streams);
    const auto problem = make_airport_problem(inputs, distance, b.config.prior);
    auto cfg = b.config.sabc;
    cfg.n_particles = limits::kRecoveryParticles;
    cfg.max_simulations = limits::kRecoveryBudget;
    cfg.seed = limits::kRecoverySeed;
    const auto post = run_sabc(problem, cfg);
    const auto summary = io::posterior_summary(post, limits::kRecoveryLevel);
    const double secs = seconds_since(t0);

    bool pass = secs <= limits::kRecoverySeconds && post.simulations <= limits::kRecoveryBudget;
    std::string detail;
    for (const char* name : {"mu_ac", "sigma_ac", "lambda_sg", "lambda_mg"}) {
      const double v = truth.at(name).get<double>();
      const auto& s = summary.at(name);
      const double lo = s.at("lower").get<double>(), med = s.at("median").get<double>(), hi = s.at("upper").get<double>();
      const bool inside = lo <= v && v <= hi;
      const bool close = std::abs(med - v) <= limits::kRecoveryMedianRel * v;
      pass = pass && inside && close;
      detail += fmt("%s %.3f in [%.3f, %.3f] %s, median %.3f (%+.1f%%)%s; ", name, v, lo, hi, inside ? "yes" : "NO", med,
                    100 * (med - v) / v, close ? "" : " OUT");
    }
    detail += fmt("N %zu, %zu sims, %.0f s <= %.0f s", post.size(), post.simulations, secs, limits::kRecoverySeconds);
    return std::pair{pass, detail};
  });

  run(6, "prior limit with zero distance", [] {
    const auto b = io::load_bundle(kData / "synthetic_day");
    const auto inputs = io::airport_inputs(b);
    const AbcProblem<AirportSimulator, ZeroStreamDistance> problem{b.config.prior, AirportSimulator{&inputs}, {},
                                                                    airport_reporting, airport_reporting_names()};
    auto cfg = b.config.sabc;
    cfg.n_particles = limits::kPriorParticles;
    cfg.max_simulations = limits::kPriorBudget;
    cfg.seed = 5;
    const auto post = run_sabc(problem, cfg);
    bool pass = post.size() == limits::kPriorParticles;
    std::string detail;
    const auto& box = b.config.prior;
    for (std::size_t j = 0; j < box.dim(); ++j) {
      std::vector<double> col;
      for (const auto& t : post.sampling) col.push_back(t[j]);
      const double p = oracle::ks_uniform_pvalue(col, box.lower()[j], box.upper()[j]);
      pass = pass && p > limits::kPriorKsP;
      detail += fmt("%s KS p %.3f; ", box.names()[j].c_str(), p);
    }
    detail += fmt("N %zu, %zu sweeps, all p > %.2f", post.size(), post.trace.size(), limits::kPriorKsP);
    return std::pair{pass, detail};
  });

  // Cases 1-3 feed both the directionality and the prediction-throughput criteria.
  struct CaseRun {
    double peak = 0, peak_lo = 0, peak_hi = 0, seconds = 0;
  };
  std::vector<CaseRun> cases;
  double noise = 0.0;
  std::string case_error;
  int window_pax = 0;
  try {
    const auto b = io::load_bundle(kData / "airport_day");
    const auto posterior = io::load_posterior(kData / "airport_day" / "posterior.json").sample;
    std::optional<std::pair<double, double>> window;
    const auto case1 = bundle_scenario(b, window);
    for (const auto& f : case1.flights) window_pax += f.n_passengers;

    ScenarioOverrides delay;
    delay.delays[case1.flights.at(1).flight_id] = limits::kDelayMinutes;
    const auto case2 = apply_overrides(case1, delay);

    // the MG shift in force when the window opens loses two servers to the next one
    const auto& mg = case1.rosters.at("MG");
    const auto bp = mg.breakpoints();
    const auto shift = static_cast<std::size_t>(std::upper_bound(bp.begin(), bp.end(), window->first) - bp.begin()) - 1;
    const double early = bp[shift], late = bp[shift + 1];
    ScenarioOverrides move = delay;
    move.roster_edits.push_back({"MG", early, mg.at(early) - limits::kMovedServers});
    move.roster_edits.push_back({"MG", late, mg.at(late) + limits::kMovedServers});
    const auto case3 = apply_overrides(case1, move);

    auto peak_of = [](const ScenarioBands& bands) {
      const auto& w = bands.at("MG").wait;
      const auto i = static_cast<std::size_t>(std::max_element(w.median.begin(), w.median.end()) - w.median.begin());
      return std::tuple{w.median[i], w.lower[i], w.upper[i]};
    };
    for (const auto* s : {&case1, &case2, &case3}) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto bands = prediction_band(*s, posterior, limits::kScenarioSims, limits::kScenarioLevel, limits::kScenarioSeed);
      CaseRun c;
      c.seconds = seconds_since(t0);
      std::tie(c.peak, c.peak_lo, c.peak_hi) = peak_of(bands);
      cases.push_back(c);
    }
    const auto other = prediction_band(case1, posterior, limits::kScenarioSims, limits::kScenarioLevel,
                                       limits::kScenarioNoiseSeed);
    noise = std::abs(std::get<0>(peak_of(other)) - cases[0].peak);
  } catch (const std::exception& e) {
    case_error = e.what();
  }

  run(7, "scenario directionality", [&] {
    if (!case_error.empty()) return std::pair{false, "could not run cases: " + case_error};
    const double d21 = cases[1].peak - cases[0].peak, d32 = cases[2].peak - cases[1].peak;
    return std::pair{d21 > 0 && d32 < 0 && std::abs(d21) > noise,
                     fmt("MG peak median wait case 1 %.2f [%.2f, %.2f], case 2 %.2f [%.2f, %.2f], case 3 %.2f [%.2f, "
                         "%.2f] min; case2-case1 %+.2f, case3-case2 %+.2f, seed-to-seed noise %.2f",
                         cases[0].peak, cases[0].peak_lo, cases[0].peak_hi, cases[1].peak, cases[1].peak_lo,
                         cases[1].peak_hi, cases[2].peak, cases[2].peak_lo, cases[2].peak_hi, d21, d32, noise)};
  });

  run(8, "prediction throughput", [&] {
    if (!case_error.empty()) return std::pair{false, "could not run cases: " + case_error};
    const double total = cases[0].seconds + cases[1].seconds + cases[2].seconds;
    return std::pair{total <= limits::kPredictionSeconds && window_pax == limits::kWindowPassengers,
                     fmt("3 cases x %zu sims over %d passengers: %.2f + %.2f + %.2f = %.2f s <= %.0f s",
                         limits::kScenarioSims, window_pax, cases[0].seconds, cases[1].seconds, cases[2].seconds, total,
                         limits::kPredictionSeconds)};
  });

  run(9, "pathwise conservation suite", [] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto b = io::load_bundle(kData / "airport_day");
    const auto dis = b.disembark_params();
    const auto more = plus_one(b.rosters);
    const auto n = static_cast<std::size_t>(b.total_passengers());
    std::size_t size_fail = 0, identity_fail = 0, integral_fail = 0, monotone_fail = 0;
    double worst_identity = 0, worst_integral = 0;
    for (int seed = 0; seed < limits::kConservationSeeds; ++seed) {
      const auto sim = simulate_day(b.flights, dis, b.rosters, kTheta, b.config.constants, 9000 + seed);
      const auto& s = sim.streams;
      if (s.at("dis").size() != n || s.at("ac").size() != n || s.at("imm").size() != n ||
          s.at("imm_SG").size() + s.at("imm_MG").size() != n || sim.table.size() != n)
        ++size_fail;

      for (Route route : {Route::SG, Route::MG}) {
        std::vector<double> a, st;
        long double total_wait = 0;
        for (const auto& p : sim.table.rows) {
          if (p.route != route) continue;
          const double w = p.start_imm - p.d_ac;
          const double err = std::abs(p.d_imm - (p.d_ac + w + p.service));
          worst_identity = std::max(worst_identity, err);
          if (w < 0 || err > limits::kConservationTolerance) ++identity_fail;
          a.push_back(p.d_ac);
          st.push_back(p.start_imm);
          total_wait += w;
        }
        const double area = oracle::queue_integral(a, st);
        const double err = std::abs(area - static_cast<double>(total_wait)) / std::max(1.0, static_cast<double>(total_wait));
        worst_integral = std::max(worst_integral, err);
        if (err > 1e-9) ++integral_fail;
      }

      const auto bigger = simulate_day(b.flights, dis, more, kTheta, b.config.constants, 9000 + seed);
      for (std::size_t i = 0; i < n; ++i) {
        const auto &p = sim.table.rows[i], &q = bigger.table.rows[i];
        if (q.start_imm - q.d_ac > p.start_imm - p.d_ac + limits::kConservationTolerance) ++monotone_fail;
      }
    }
    const double secs = seconds_since(t0);
    return std::pair{size_fail + identity_fail + integral_fail + monotone_fail == 0 && secs < limits::kConservationSeconds,
                     fmt("%d days: size violations %zu, d = a + w + s violations %zu (max %.2g), integral Q = sum w "
                         "violations %zu (max rel %.2g), per-passenger wait rises with +1 server %zu; %.2f s < %.0f s",
                         limits::kConservationSeeds, size_fail, identity_fail, worst_identity, integral_fail,
                         worst_integral, monotone_fail, secs, limits::kConservationSeconds)};
  });

  std::printf("%s: %d failing criteria\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
