#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dqn/dqn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string bundle;
  std::string config;
  std::string posterior;
  std::string out;
  std::string theta;
  std::string window;
  std::uint64_t seed = 1;
  std::size_t jobs = dqn::default_jobs();
  std::size_t n_sims = 500;
  double level = 0.95;
  std::vector<std::string> delays;
  std::vector<std::string> roster_edits;
};

std::vector<double> parse_list(const std::string& text, char sep, std::size_t expected, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      dqn::require(used == item.size(), dqn::ErrorCode::BadValue, what + ": bad number '" + item + "'");
    } catch (const std::logic_error&) {
      dqn::fail(dqn::ErrorCode::BadValue, what + ": bad number '" + item + "'");
    }
  }
  dqn::require(expected == 0 || out.size() == expected, dqn::ErrorCode::BadValue,
               what + ": expected " + std::to_string(expected) + " comma-separated values");
  return out;
}

dqn::Theta parse_theta(const std::string& text) {
  const auto v = parse_list(text, ',', 4, "--theta");
  dqn::Theta t{v[0], v[1], v[2], v[3]};
  dqn::validate(t);
  return t;
}

std::optional<std::pair<double, double>> parse_window(const std::string& text) {
  if (text.empty()) return std::nullopt;
  if (text == "all") return std::pair{-1.0, 1e9};
  const auto v = parse_list(text, ',', 2, "--window");
  return std::pair{v[0], v[1]};
}

dqn::ScenarioOverrides parse_overrides(const Common& c) {
  dqn::ScenarioOverrides o;
  for (const auto& d : c.delays) {
    const auto eq = d.find('=');
    dqn::require(eq != std::string::npos && eq > 0, dqn::ErrorCode::BadValue, "--delay expects FLIGHT=MIN, got '" + d + "'");
    o.delays[d.substr(0, eq)] = parse_list(d.substr(eq + 1), ',', 1, "--delay")[0];
  }
  for (const auto& r : c.roster_edits) {
    const auto comma = r.find(',');
    dqn::require(comma != std::string::npos, dqn::ErrorCode::BadValue, "--roster expects ROUTE,START,COUNT, got '" + r + "'");
    const auto v = parse_list(r.substr(comma + 1), ',', 2, "--roster");
    dqn::require(v[1] == std::floor(v[1]), dqn::ErrorCode::BadValue, "--roster count must be an integer");
    o.roster_edits.push_back({r.substr(0, comma), v[0], static_cast<int>(v[1])});
  }
  return o;
}

void emit(const json& summary) { std::cout << summary.dump(2) << std::endl; }

int fit_disembark_cmd(const Common& c) {
  const auto bundle = dqn::io::load_bundle(c.bundle);
  const auto params = dqn::io::fit_all_disembark(bundle.flights, bundle.gate_counts);
  const fs::path out = c.out.empty() ? fs::path(c.bundle) / dqn::io::bundle_file::disembark : fs::path(c.out);
  dqn::io::save_disembark(params, bundle.flights, out);
  json flights = json::array();
  for (std::size_t i = 0; i < params.size(); ++i)
    flights.push_back({{"flight_id", bundle.flights[i].flight_id}, {"alpha", params[i].shape}, {"beta", params[i].rate}});
  emit({{"command", "fit-disembark"}, {"ok", true}, {"out", out.string()}, {"flights", flights}});
  return 0;
}

int simulate_cmd(const Common& c, const std::string& network_path) {
  const auto bundle = dqn::io::load_bundle(c.bundle);
  const dqn::Theta theta = parse_theta(c.theta);
  const auto disembark = bundle.disembark_params();
  const auto t0 = std::chrono::steady_clock::now();
  dqn::Streams streams;
  std::optional<dqn::PassengerTable> table;
  if (network_path.empty()) {
    auto sim = dqn::simulate_day(bundle.flights, disembark, bundle.rosters, theta, bundle.config.constants, c.seed);
    streams = std::move(sim.streams);
    table = std::move(sim.table);
  } else {
    const auto cfg = dqn::parse_network_config(json::parse(dqn::io::read_text(network_path)), bundle.flights);
    streams = dqn::simulate_network(cfg, dqn::airport_bindings(theta), c.seed);
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  json sizes = json::object();
  for (const auto& [name, times] : streams) sizes[name] = times.size();
  json summary{{"command", "simulate"}, {"ok", true}, {"seed", c.seed}, {"wall_ms", ms}, {"stream_sizes", sizes}};
  if (!c.out.empty()) {
    const fs::path out(c.out);
    dqn::io::save_counts(dqn::bin_by_minute(streams), out / "counts.csv");
    if (table) dqn::io::write_text(out / "passengers.csv", dqn::io::passenger_table_text(*table, bundle.flights));
    summary["out"] = out.string();
  }
  emit(summary);
  return 0;
}

int infer_cmd(const Common& c, std::size_t n_particles, std::size_t budget, double decay, std::size_t max_sweeps,
              const std::string& trace_path, bool seed_given) {
  const auto bundle = dqn::io::load_bundle(c.bundle);
  auto cfg = c.config.empty() ? bundle.config : dqn::io::load_inference_config(c.config);
  if (n_particles) cfg.sabc.n_particles = n_particles;
  if (budget) cfg.sabc.max_simulations = budget;
  if (decay > 0) cfg.sabc.decay = decay;
  if (max_sweeps) cfg.sabc.max_sweeps = max_sweeps;
  if (seed_given) cfg.sabc.seed = c.seed;
  cfg.sabc.validate();
  cfg.raw = dqn::io::to_json(cfg);
  auto sabc = cfg.sabc;
  sabc.jobs = c.jobs;

  const auto inputs = dqn::io::airport_inputs(bundle);
  const dqn::CompositeDistance distance(bundle.observed, cfg.kernel, cfg.distance_streams);
  const auto problem = dqn::make_airport_problem(inputs, distance, cfg.prior);

  const fs::path out = c.out.empty() ? fs::path("posterior.json") : fs::path(c.out);
  const fs::path trace_file = trace_path.empty() ? fs::path(out.string() + ".trace.jsonl") : fs::path(trace_path);
  if (trace_file.has_parent_path()) fs::create_directories(trace_file.parent_path());
  std::ofstream trace(trace_file);
  dqn::require(static_cast<bool>(trace), dqn::ErrorCode::IoError, "cannot write " + trace_file.string());

  const auto t0 = std::chrono::steady_clock::now();
  const auto posterior = dqn::run_sabc(problem, sabc, [&](const dqn::TraceRecord& r) {
    trace << json{{"sweep", r.sweep},
                  {"epsilon", r.epsilon},
                  {"acceptance_rate", r.acceptance_rate},
                  {"mean_rho", r.mean_rho},
                  {"simulations", r.simulations}}
                 .dump()
          << '\n'
          << std::flush;
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  dqn::io::save_posterior(posterior, cfg.raw, out);

  emit({{"command", "infer"},
        {"ok", true},
        {"out", out.string()},
        {"trace", trace_file.string()},
        {"wall_s", seconds},
        {"simulations", posterior.simulations},
        {"sweeps", posterior.trace.empty() ? 0 : posterior.trace.back().sweep},
        {"final_epsilon", posterior.trace.empty() ? 0.0 : posterior.trace.back().epsilon},
        {"summary", dqn::io::posterior_summary(posterior)}});
  return 0;
}

int predict_cmd(const Common& c) {
  const auto bundle = dqn::io::load_bundle(c.bundle);
  const auto posterior = dqn::io::load_posterior(c.posterior).sample;
  auto window = parse_window(c.window);
  const auto base = dqn::bundle_scenario(bundle, window);
  const auto overrides = parse_overrides(c);
  const auto scenario = dqn::apply_overrides(base, overrides);
  dqn::require(c.n_sims >= 1 && c.n_sims <= 100000, dqn::ErrorCode::BadValue, "--n-sims out of range");

  const auto t0 = std::chrono::steady_clock::now();
  const auto bands = dqn::prediction_band(scenario, posterior, c.n_sims, c.level, c.seed, c.jobs);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  dqn::ScenarioRequest req;
  req.overrides = overrides;
  req.n_sims = c.n_sims;
  req.level = c.level;
  const json response = dqn::scenario_response(scenario, bands, dqn::canonical_request(req, c.seed), ms);
  const fs::path out = c.out.empty() ? fs::path("bands.json") : fs::path(c.out);
  dqn::io::write_text(out, response.dump() + "\n");

  json peaks = json::object();
  for (const auto& [route, rb] : bands)
    peaks[route] = {{"peak_median_wait", rb.wait.peak_median()}, {"peak_median_queue", rb.queue.peak_median()}};
  std::int64_t pax = 0;
  for (const auto& f : scenario.flights) pax += f.n_passengers;
  emit({{"command", "predict"},
        {"ok", true},
        {"out", out.string()},
        {"n_sims", c.n_sims},
        {"passengers", pax},
        {"wall_ms", ms},
        {"peaks", peaks}});
  return 0;
}

int validate_cmd(const Common& c, std::size_t instances) {
  json checks = json::array();
  bool ok = true;
  auto record = [&](const std::string& name, bool pass, json detail = nullptr) {
    ok = ok && pass;
    json entry{{"check", name}, {"ok", pass}};
    if (!detail.is_null()) entry["detail"] = std::move(detail);
    checks.push_back(std::move(entry));
  };

  std::optional<dqn::io::DatasetBundle> bundle;
  try {
    bundle = dqn::io::load_bundle(c.bundle);
    record("load bundle", true, {{"flights", bundle->flights.size()}, {"passengers", bundle->total_passengers()}});
  } catch (const dqn::Error& e) {
    record("load bundle", false, {{"code", dqn::to_string(e.code())}, {"message", e.what()}});
  }
  if (bundle) {
    try {
      const auto params = bundle->disembark_params();
      record("disembark parameters", params.size() == bundle->flights.size());
    } catch (const dqn::Error& e) {
      record("disembark parameters", false, {{"code", dqn::to_string(e.code())}, {"message", e.what()}});
    }
    try {
      const auto sim = dqn::simulate_day(bundle->flights, bundle->disembark_params(), bundle->rosters,
                                         dqn::Theta{1.0, 0.5, 1.0, 1.0}, bundle->config.constants, c.seed);
      const bool conserved = sim.streams.at("imm").size() == static_cast<std::size_t>(bundle->total_passengers());
      record("simulate day", conserved, {{"passengers", sim.table.rows.size()}});
    } catch (const dqn::Error& e) {
      record("simulate day", false, {{"code", dqn::to_string(e.code())}, {"message", e.what()}});
    }
  }

  std::size_t agreed = 0, serviceable = 0;
  json failures = json::array();
  for (std::size_t i = 0; i < instances; ++i) {
    const auto inst = dqn::random_instance(dqn::rng::derive(c.seed, {dqn::rng::tag("validate"), i}));
    const auto cmp = dqn::compare_with_oracle(inst);
    agreed += cmp.agree;
    serviceable += cmp.serviceable;
    if (!cmp.agree && failures.size() < 5)
      failures.push_back({{"instance", i}, {"detail", cmp.detail}, {"replay", dqn::instance_to_json(inst)}});
  }
  record("qdc matches event-driven oracle", agreed == instances,
         {{"instances", instances}, {"agreed", agreed}, {"serviceable", serviceable}, {"failures", failures}});

  emit({{"command", "validate"}, {"ok", ok}, {"checks", checks}});
  return ok ? 0 : 1;
}

int serve_cmd(const Common& c, const std::string& host, int port) {
  const auto bundle = dqn::io::load_bundle(c.bundle);
  auto posterior = dqn::io::load_posterior(c.posterior).sample;
  auto window = parse_window(c.window);
  auto scenario = dqn::bundle_scenario(bundle, window);
  dqn::ServiceDefaults defaults;
  defaults.n_sims = std::min(c.n_sims, dqn::kMaxScenarioSims);
  defaults.level = c.level;
  defaults.seed = c.seed;
  defaults.jobs = c.jobs;
  auto meta = dqn::bundle_meta(bundle, scenario, window, defaults);
  auto engine = std::make_shared<dqn::ScenarioEngine>(std::move(scenario), std::move(posterior), std::move(meta), defaults);
  dqn::ScenarioServer server(engine);
  const int bound = server.bind(host, port);
  emit({{"command", "serve"}, {"ok", true}, {"host", host}, {"port", bound}});
  server.listen();
  return 0;
}

int generate_cmd(const Common& c, const std::string& flights, const std::string& roster, const std::string& disembark,
                 const std::vector<std::string>& detect, const std::string& label) {
  dqn::io::SyntheticSpec spec;
  spec.flights = dqn::io::load_flight_schedule(flights);
  spec.rosters = dqn::io::load_roster(roster);
  spec.disembark = dqn::io::load_disembark(disembark, spec.flights);
  spec.theta = parse_theta(c.theta);
  dqn::require(!c.config.empty(), dqn::ErrorCode::ConfigError, "generate needs --config");
  spec.config = dqn::io::load_inference_config(c.config);
  spec.seed = c.seed;
  spec.label = label;
  for (const auto& d : detect) {
    const auto eq = d.find('=');
    dqn::require(eq != std::string::npos, dqn::ErrorCode::BadValue, "--detect expects STREAM=N");
    spec.detection[d.substr(0, eq)] = static_cast<std::int64_t>(parse_list(d.substr(eq + 1), ',', 1, "--detect")[0]);
  }
  if (auto w = parse_window(c.window)) spec.extra_meta["scenario_window"] = {w->first, w->second};
  dqn::require(!c.out.empty(), dqn::ErrorCode::InvalidArgument, "generate needs --out");
  const auto b = dqn::io::generate_synthetic_day(spec, c.out);
  emit({{"command", "generate"}, {"ok", true}, {"out", c.out}, {"meta", b.meta}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic queueing network simulation, inference and prediction"};
  app.require_subcommand(1);
  Common c;

  auto add_bundle = [&](CLI::App* sub, bool required = true) {
    auto* opt = sub->add_option("--bundle", c.bundle, "Dataset bundle directory");
    if (required) opt->required();
  };
  auto add_seed_jobs = [&](CLI::App* sub) {
    sub->add_option("--seed", c.seed, "Root random seed");
    sub->add_option("--jobs", c.jobs, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  };

  auto* fit = app.add_subcommand("fit-disembark", "Fit per-flight disembarkation distributions from gate counts");
  add_bundle(fit);
  fit->add_option("--out", c.out, "Output file (default: <bundle>/disembark.csv)");

  std::string network_path;
  auto* sim = app.add_subcommand("simulate", "Simulate one day");
  add_bundle(sim);
  sim->add_option("--theta", c.theta, "mu_ac,sigma_ac,lambda_sg,lambda_mg")->required();
  sim->add_option("--out", c.out, "Directory for counts.csv and passengers.csv");
  sim->add_option("--network", network_path, "Declarative network document to simulate instead of the airport day");
  add_seed_jobs(sim);

  std::size_t n_particles = 0, budget = 0, max_sweeps = 0;
  double decay = 0.0;
  std::string trace_path;
  auto* infer = app.add_subcommand("infer", "Run simulated-annealing ABC on a bundle");
  add_bundle(infer);
  infer->add_option("--config", c.config, "Inference config (default: <bundle>/config.json)");
  infer->add_option("--out", c.out, "Posterior file (default: posterior.json)");
  infer->add_option("--trace", trace_path, "Per-sweep trace, one JSON record per line");
  infer->add_option("--n-particles", n_particles, "Override population size");
  infer->add_option("--budget", budget, "Override the simulation budget");
  infer->add_option("--decay", decay, "Override the per-sweep annealing decay");
  infer->add_option("--max-sweeps", max_sweeps, "Stop after this many sweeps");
  add_seed_jobs(infer);

  auto add_scenario_opts = [&](CLI::App* sub) {
    sub->add_option("--posterior", c.posterior, "Posterior file")->required();
    sub->add_option("--n-sims", c.n_sims, "Simulations per prediction");
    sub->add_option("--level", c.level, "Prediction interval level");
    sub->add_option("--window", c.window, "BEGIN,END minutes or 'all' (default: bundle scenario window)");
  };
  auto* predict = app.add_subcommand("predict", "Prediction bands for a scenario");
  add_bundle(predict);
  add_scenario_opts(predict);
  predict->add_option("--delay", c.delays, "FLIGHT=MIN (repeatable)");
  predict->add_option("--roster", c.roster_edits, "ROUTE,START,COUNT (repeatable)");
  predict->add_option("--out", c.out, "Band file (default: bands.json)");
  add_seed_jobs(predict);

  std::size_t instances = 200;
  auto* validate = app.add_subcommand("validate", "Validate a bundle and spot-check the queue algorithm");
  add_bundle(validate);
  validate->add_option("--instances", instances, "Random oracle instances");
  add_seed_jobs(validate);

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "HTTP scenario service");
  add_bundle(serve);
  add_scenario_opts(serve);
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks a free port)");
  add_seed_jobs(serve);

  std::string flights, roster, disembark, label = "synthetic";
  std::vector<std::string> detect;
  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset bundle");
  gen->add_option("--flights", flights, "Flight schedule")->required();
  gen->add_option("--roster", roster, "Roster")->required();
  gen->add_option("--disembark", disembark, "Disembarkation parameters")->required();
  gen->add_option("--theta", c.theta, "mu_ac,sigma_ac,lambda_sg,lambda_mg")->required();
  gen->add_option("--config", c.config, "Inference config to embed")->required();
  gen->add_option("--detect", detect, "STREAM=N keeps exactly N random events of a stream (repeatable)");
  gen->add_option("--label", label, "Dataset label");
  gen->add_option("--window", c.window, "Scenario window BEGIN,END recorded in the metadata");
  gen->add_option("--out", c.out, "Bundle directory")->required();
  add_seed_jobs(gen);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) return fit_disembark_cmd(c);
    if (*sim) return simulate_cmd(c, network_path);
    if (*infer) return infer_cmd(c, n_particles, budget, decay, max_sweeps, trace_path, infer->count("--seed") > 0);
    if (*predict) return predict_cmd(c);
    if (*validate) return validate_cmd(c, instances);
    if (*serve) return serve_cmd(c, host, port);
    if (*gen) return generate_cmd(c, flights, roster, disembark, detect, label);
  } catch (const dqn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    emit({{"ok", false}, {"error", {{"code", dqn::to_string(e.code())}, {"message", e.what()}}}});
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    emit({{"ok", false}, {"error", {{"code", "Internal"}, {"message", e.what()}}}});
    return 1;
  }
  return 1;
}
