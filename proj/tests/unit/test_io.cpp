#include <gtest/gtest.h>

#include "dqn/io.hpp"
#include "oracles.hpp"

using namespace dqn;
namespace fs = std::filesystem;

namespace {

const fs::path kData = DQN_DATA_DIR;

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& content) {
  io::write_text(dir / name, content);
  return dir / name;
}

template <class F>
Error error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "no error thrown";
  return Error(ErrorCode::IoError, "none");
}

PosteriorSample small_posterior() {
  PosteriorSample s;
  s.sampling_names = {"alpha_ac", "beta_ac", "lambda_sg", "lambda_mg"};
  s.reporting_names = {"mu_ac", "sigma_ac", "lambda_sg", "lambda_mg"};
  s.sampling = {{3.1, 2.2, 0.81, 1.39}, {0.1 + 0.2, 1.0 / 3.0, 2.4999999999999996, 1e-300}};
  s.reporting = {{1.409, 0.8, 0.81, 1.39}, {0.9, 1.7320508075688772, 2.4999999999999996, 1e-300}};
  s.rho = {0.0123456789012345678, std::numeric_limits<double>::infinity()};
  s.trace = {{0, 0.5, 0.75, 1.0, 2}, {1, 0.47561471225035706, 0.6, 0.5, 3}};
  s.simulations = 3;
  s.accepted = 1;
  s.rejected = 0;
  s.out_of_support = 1;
  s.root_seed = 18446744073709551557ULL;
  return s;
}

const nlohmann::json kConfig = io::parse_inference_config(nlohmann::json::parse(
                                                              R"({"route_constants": {"p_imm_local": 0.45, "p_imm_foreign": 0.15}})"))
                                   .raw;

}  // namespace

TEST(FlightSchedule, ParsesRow) {
  const auto dir = oracle::temp_dir("flights");
  const auto path = write_file(dir, "f.csv", "flight_id,arrival_min,gate_distance_m,n_passengers,prop_local\nQF1,540,320,250,0.6\n");
  const auto f = io::load_flight_schedule(path);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0], (FlightRecord{"QF1", 540.0, 320.0, 250, 0.6}));
}

TEST(FlightSchedule, ColumnOrderAndWhitespaceDoNotMatter) {
  const auto dir = oracle::temp_dir("flights-order");
  const auto path = write_file(dir, "f.csv", "\xEF\xBB\xBFprop_local, flight_id ,n_passengers,gate_distance_m,arrival_min\r\n0.6,QF1,250,320,540\r\n");
  EXPECT_EQ(io::load_flight_schedule(path)[0], (FlightRecord{"QF1", 540.0, 320.0, 250, 0.6}));
}

TEST(FlightSchedule, RejectsBadProportionWithRowContext) {
  const auto dir = oracle::temp_dir("flights-bad");
  const auto path = write_file(dir, "f.csv",
                               "flight_id,arrival_min,gate_distance_m,n_passengers,prop_local\n"
                               "QF1,540,320,250,0.6\nQF2,560,320,250,1.3\n");
  const auto e = error_of([&] { io::load_flight_schedule(path); });
  EXPECT_EQ(e.code(), ErrorCode::BadValue);
  EXPECT_NE(std::string(e.what()).find("f.csv:3"), std::string::npos) << e.what();
}

TEST(FlightSchedule, OtherErrors) {
  const auto dir = oracle::temp_dir("flights-errors");
  const std::string header = "flight_id,arrival_min,gate_distance_m,n_passengers,prop_local\n";
  EXPECT_EQ(error_of([&] { io::load_flight_schedule(write_file(dir, "a.csv", "")); }).code(), ErrorCode::EmptyFile);
  EXPECT_EQ(error_of([&] { io::load_flight_schedule(write_file(dir, "b.csv", "flight_id,arrival_min\nQF1,3\n")); }).code(),
            ErrorCode::MissingColumn);
  EXPECT_EQ(error_of([&] { io::load_flight_schedule(write_file(dir, "c.csv", header + "QF1,abc,320,250,0.6\n")); }).code(),
            ErrorCode::BadValue);
  EXPECT_EQ(error_of([&] { io::load_flight_schedule(write_file(dir, "d.csv", header + "QF1,1440,320,250,0.6\n")); }).code(),
            ErrorCode::BadValue);
  EXPECT_EQ(error_of([&] { io::load_flight_schedule(write_file(dir, "e.csv", header + "QF1,10,0,250,0.6\n")); }).code(),
            ErrorCode::BadValue);
  EXPECT_EQ(error_of([&] { io::load_flight_schedule(write_file(dir, "f.csv", header + "QF1,10,3,2.5,0.6\n")); }).code(),
            ErrorCode::BadValue);
  EXPECT_EQ(error_of([&] {
              io::load_flight_schedule(write_file(dir, "g.csv", header + "QF1,10,3,2,0.6\nQF1,20,3,2,0.6\n"));
            }).code(),
            ErrorCode::BadValue);
  EXPECT_EQ(error_of([&] { io::load_flight_schedule(dir / "missing.csv"); }).code(), ErrorCode::IoError);
}

TEST(FlightSchedule, BundledDay) {
  const auto f = io::load_flight_schedule(kData / "airport_day" / "flights.csv");
  EXPECT_EQ(f.size(), 29u);
  int total = 0;
  for (const auto& r : f) total += r.n_passengers;
  EXPECT_EQ(total, 5454);
}

TEST(Roster, Examples) {
  const auto dir = oracle::temp_dir("roster");
  const auto r = io::load_roster(write_file(dir, "r.csv", "route,start_min,count\nMG,720,6\nSG,0,2\nMG,540,4\n"));
  const auto& mg = r.at("MG");
  EXPECT_EQ(std::vector<double>(mg.breakpoints().begin(), mg.breakpoints().end()), (std::vector<double>{540, 720}));
  EXPECT_EQ(std::vector<int>(mg.counts().begin(), mg.counts().end()), (std::vector<int>{4, 6}));
  EXPECT_EQ(r.at("SG").at(100), 2);

  EXPECT_EQ(error_of([&] { io::load_roster(write_file(dir, "n.csv", "route,start_min,count\nMG,0,-1\n")); }).code(),
            ErrorCode::NegativeCount);
  EXPECT_EQ(
      error_of([&] { io::load_roster(write_file(dir, "d.csv", "route,start_min,count\nMG,540,4\nMG,540,5\n")); }).code(),
      ErrorCode::OverlappingIntervals);
}

TEST(Counts, ParsesAndRejectsDuplicates) {
  const auto dir = oracle::temp_dir("counts");
  const auto c = io::load_counts(write_file(dir, "c.csv", "stream,minute,count\nimm,612,7\nac,600,3\n"));
  EXPECT_EQ(c.at("imm").at(612), 7);
  EXPECT_EQ(c.at("imm").count(613), 0u);
  EXPECT_EQ(total(c.at("imm")), 7);
  EXPECT_EQ(error_of([&] { io::load_counts(write_file(dir, "d.csv", "stream,minute,count\nimm,612,7\nimm,612,1\n")); }).code(),
            ErrorCode::DuplicateCell);
  EXPECT_EQ(error_of([&] { io::load_counts(write_file(dir, "e.csv", "stream,minute,count\nimm,612,-1\n")); }).code(),
            ErrorCode::BadValue);
  EXPECT_EQ(error_of([&] { io::load_counts(write_file(dir, "f.csv", "stream,minute,count\nimm,99999,1\n")); }).code(),
            ErrorCode::BadValue);
  EXPECT_EQ(error_of([&] { io::load_counts(write_file(dir, "g.csv", "stream,minute,count\nimm,61.5,1\n")); }).code(),
            ErrorCode::BadValue);
}

TEST(Counts, BundledStreamTotals) {
  const auto c = io::load_counts(kData / "airport_day" / "counts.csv");
  EXPECT_EQ(total(c.at("ac")), 4866);
  EXPECT_EQ(total(c.at("imm")), 5249);
  EXPECT_EQ(total(c.at("imm_SG")), 1468);
}

TEST(Bundle, CanonicalFilesRoundTripByteIdentical) {
  for (const char* name : {"airport_day", "synthetic_day"}) {
    const auto dir = kData / name;
    const auto b = io::load_bundle(dir);
    EXPECT_EQ(io::flight_schedule_text(b.flights), io::read_text(dir / "flights.csv"));
    EXPECT_EQ(io::roster_text(b.rosters), io::read_text(dir / "roster.csv"));
    EXPECT_EQ(io::counts_text(b.observed), io::read_text(dir / "counts.csv"));
    EXPECT_EQ(io::gate_counts_text(b.gate_counts, b.flights), io::read_text(dir / "gate_counts.csv"));
    ASSERT_TRUE(b.disembark.has_value());
    EXPECT_EQ(io::disembark_text(*b.disembark, b.flights), io::read_text(dir / "disembark.csv"));

    const auto out = oracle::temp_dir("bundle-copy");
    io::save_bundle(b, out);
    for (const char* file : {"flights.csv", "roster.csv", "counts.csv", "gate_counts.csv", "disembark.csv", "config.json"})
      EXPECT_EQ(io::read_text(out / file), io::read_text(dir / file)) << name << "/" << file;
  }
}

TEST(Bundle, ValidationErrors) {
  const auto src = kData / "synthetic_day";
  {
    const auto dir = oracle::temp_dir("bundle-missing-stream");
    fs::copy(src, dir, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    auto counts = io::load_counts(dir / "counts.csv");
    counts.erase("imm_SG");
    io::save_counts(counts, dir / "counts.csv");
    fs::remove(dir / "meta.json");
    EXPECT_EQ(error_of([&] { io::load_bundle(dir); }).code(), ErrorCode::MissingStream);
  }
  {
    const auto dir = oracle::temp_dir("bundle-bad-total");
    fs::copy(src, dir, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    auto meta = nlohmann::json::parse(io::read_text(dir / "meta.json"));
    meta["stream_totals"]["ac"] = 1;
    io::write_text(dir / "meta.json", meta.dump());
    EXPECT_EQ(error_of([&] { io::load_bundle(dir); }).code(), ErrorCode::BadValue);
  }
}

TEST(Disembark, FitAllNamesEveryFlightWithoutCounts) {
  const FlightSchedule flights{{"A1", 10, 3, 5, 0.5}, {"B2", 20, 3, 5, 0.5}, {"C3", 30, 3, 5, 0.5}};
  const io::GateCounts gates{{"B2", {{3, 5}}}, {"C3", {{1, 0}}}};
  const auto e = error_of([&] { io::fit_all_disembark(flights, gates); });
  EXPECT_EQ(e.code(), ErrorCode::NoCounts);
  EXPECT_NE(std::string(e.what()).find("A1, C3"), std::string::npos) << e.what();
}

TEST(Disembark, FitRecoversGeneratingGammaOnSyntheticGateCounts) {
  const FlightSchedule flights{{"G1", 100, 3, 250, 0.5}};
  io::SyntheticSpec spec;
  spec.flights = flights;
  spec.rosters = {{"SG", StepSchedule::constant(10)}, {"MG", StepSchedule::constant(10)}};
  spec.disembark = {{4.0, 0.5}};
  spec.theta = {1.41, 0.8, 0.8, 1.4};
  spec.config = io::parse_inference_config(kConfig);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    spec.seed = seed;
    const auto b = io::generate_synthetic_day(spec);
    const auto g = io::fit_all_disembark(b.flights, b.gate_counts)[0];
    EXPECT_NEAR(g.shape, 4.0, 1.0) << "seed " << seed;
    EXPECT_NEAR(g.rate, 0.5, 0.125) << "seed " << seed;
  }
}

TEST(Config, RoundTripAndErrors) {
  const auto c = io::load_inference_config(kData / "airport_day" / "config.json");
  EXPECT_EQ(c.kernel.sigma_k, 20.0);
  EXPECT_EQ(c.distance_streams, (std::vector<std::string>{"ac", "imm", "imm_SG"}));
  EXPECT_EQ(io::parse_inference_config(c.raw).raw, c.raw);
  EXPECT_EQ(io::config_hash(c.raw), io::config_hash(io::parse_inference_config(c.raw).raw));

  auto bad = c.raw;
  bad["route_constants"]["p_imm_local"] = 1.5;
  EXPECT_EQ(error_of([&] { io::parse_inference_config(bad); }).code(), ErrorCode::ConfigError);
  bad = c.raw;
  bad["kernel"]["sigma_k"] = 0;
  EXPECT_EQ(error_of([&] { io::parse_inference_config(bad); }).code(), ErrorCode::ConfigError);
  bad = c.raw;
  bad["prior"]["alpha_ac"] = {5, 1};
  EXPECT_THROW(io::parse_inference_config(bad), Error);
  bad = c.raw;
  bad["version"] = 7;
  EXPECT_EQ(error_of([&] { io::parse_inference_config(bad); }).code(), ErrorCode::VersionMismatch);
}

TEST(Posterior, RoundTripIsLossless) {
  const auto s = small_posterior();
  const auto path = oracle::temp_dir("posterior") / "p.json";
  io::save_posterior(s, kConfig, path);
  const auto loaded = io::load_posterior(path);
  const auto& t = loaded.sample;
  EXPECT_EQ(loaded.config, kConfig);
  EXPECT_EQ(t.sampling, s.sampling);
  EXPECT_EQ(t.reporting, s.reporting);
  EXPECT_EQ(t.rho, s.rho);
  EXPECT_EQ(t.sampling_names, s.sampling_names);
  EXPECT_EQ(t.reporting_names, s.reporting_names);
  ASSERT_EQ(t.trace.size(), s.trace.size());
  for (std::size_t i = 0; i < t.trace.size(); ++i) {
    EXPECT_EQ(t.trace[i].epsilon, s.trace[i].epsilon);
    EXPECT_EQ(t.trace[i].mean_rho, s.trace[i].mean_rho);
    EXPECT_EQ(t.trace[i].simulations, s.trace[i].simulations);
  }
  EXPECT_EQ(t.root_seed, s.root_seed);
  EXPECT_EQ(t.simulations, s.simulations);
  EXPECT_EQ(t.out_of_support, s.out_of_support);
  io::save_posterior(t, loaded.config, path.parent_path() / "q.json");
  EXPECT_EQ(io::read_text(path), io::read_text(path.parent_path() / "q.json"));
}

TEST(Posterior, TamperedHashAndVersion) {
  auto doc = io::posterior_to_json(small_posterior(), kConfig);
  auto tampered = doc;
  tampered["config"]["kernel"]["sigma_k"] = 21.0;
  EXPECT_EQ(error_of([&] { io::posterior_from_json(tampered); }).code(), ErrorCode::VersionMismatch);
  tampered = doc;
  tampered["config_hash"] = "0000000000000000";
  EXPECT_EQ(error_of([&] { io::posterior_from_json(tampered); }).code(), ErrorCode::VersionMismatch);
  tampered = doc;
  tampered["version"] = 2;
  EXPECT_EQ(error_of([&] { io::posterior_from_json(tampered); }).code(), ErrorCode::VersionMismatch);
  tampered = doc;
  tampered["format"] = "something-else";
  EXPECT_EQ(error_of([&] { io::posterior_from_json(tampered); }).code(), ErrorCode::VersionMismatch);
}

TEST(Posterior, EmptySample) {
  PosteriorSample empty;
  const auto path = oracle::temp_dir("posterior-empty") / "p.json";
  io::save_posterior(empty, kConfig, path);
  const auto doc = nlohmann::json::parse(io::read_text(path));
  EXPECT_EQ(doc.at("n"), 0);
  EXPECT_TRUE(io::load_posterior(path).sample.empty());
  EXPECT_EQ(error_of([&] { io::posterior_summary(empty); }).code(), ErrorCode::EmptyPosterior);
}

TEST(Posterior, SummaryIntervalsAreOrdered) {
  const auto s = io::posterior_summary(small_posterior(), 0.9);
  for (const auto& [name, v] : s.items()) {
    EXPECT_LE(v.at("lower").get<double>(), v.at("median").get<double>()) << name;
    EXPECT_LE(v.at("median").get<double>(), v.at("upper").get<double>()) << name;
  }
}

TEST(Synthetic, DeterministicAndConserving) {
  const auto src = io::load_bundle(kData / "synthetic_day");
  io::SyntheticSpec spec;
  spec.flights = src.flights;
  spec.rosters = src.rosters;
  spec.disembark = src.disembark_params();
  spec.theta = {1.41, 0.8, 0.8, 1.4};
  spec.config = src.config;
  spec.seed = 99;
  const auto a = oracle::temp_dir("synthetic-a"), b = oracle::temp_dir("synthetic-b");
  io::generate_synthetic_day(spec, a);
  io::generate_synthetic_day(spec, b);
  for (const auto& entry : fs::directory_iterator(a))
    EXPECT_EQ(io::read_text(entry.path()), io::read_text(b / entry.path().filename())) << entry.path().filename();

  const auto loaded = io::load_bundle(a);
  const auto n = loaded.total_passengers();
  EXPECT_EQ(n, 5454);
  for (const char* stream : {"dis", "ac", "imm"}) EXPECT_EQ(total(loaded.observed.at(stream)), n) << stream;
  EXPECT_EQ(total(loaded.observed.at("imm_SG")) + total(loaded.observed.at("imm_MG")), n);
  std::int64_t gate_total = 0;
  for (const auto& [id, series] : loaded.gate_counts) gate_total += total(series);
  EXPECT_EQ(gate_total, n);
}

TEST(Synthetic, DetectionThinsToExactTotals) {
  const auto src = io::load_bundle(kData / "synthetic_day");
  io::SyntheticSpec spec;
  spec.flights = src.flights;
  spec.rosters = src.rosters;
  spec.disembark = src.disembark_params();
  spec.theta = {1.41, 0.8, 0.8, 1.4};
  spec.config = src.config;
  spec.detection = {{"ac", 4866}, {"imm", 5249}};
  const auto b = io::generate_synthetic_day(spec);
  EXPECT_EQ(total(b.observed.at("ac")), 4866);
  EXPECT_EQ(total(b.observed.at("imm")), 5249);
  EXPECT_EQ(total(b.observed.at("dis")), 5454);
  spec.detection = {{"ac", 6000}};
  EXPECT_THROW(io::generate_synthetic_day(spec), Error);
}
