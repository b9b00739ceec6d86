// svsched: channel calibration, MDP solving, simulation, bound and reports.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "svs/bound.hpp"
#include "svs/channel.hpp"
#include "svs/harness.hpp"
#include "svs/io.hpp"
#include "svs/mdp.hpp"
#include "svs/stream.hpp"

namespace fs = std::filesystem;
using svs::Json;

namespace {

constexpr const char* kOutEnv = "SVSCHED_OUT_DIR";

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  long long seed = -1;
  bool quiet = false;
};

Json default_config() {
  return {{"stream", {{"bundled", "foreman"}}},
          {"channel", {{"type", "fsmc"}, {"f_d_hz", 5.0}, {"snr_avg_db", 10.0}, {"num_states", 4}, {"frame_rate", 30.0}, {"partition", "equal_duration"}}},
          {"mdp", {{"window", 4}, {"post_cap", 4}, {"epsilon", 1e-7}, {"boundary", "truncated"}, {"samples", 100000}}},
          {"online", {{"pilot_slots", 20000}, {"i_preemption", true}}},
          {"sim",
           {{"scheduler", "online"},
            {"run_length", 2000},
            {"replications", 20},
            {"seed", 1},
            {"startup_delay", 6},
            {"partial_carryover", false},
            {"threads", 0}}}};
}

Json resolve_config(const Globals& g) {
  Json cfg = default_config();
  if (!g.config_path.empty()) {
    const Json user = svs::read_json(g.config_path);
    // Stream and channel sections describe one object each; mixing a bundled
    // default with custom fields would be ambiguous.
    for (const char* whole : {"stream", "channel"})
      if (user.contains(whole)) cfg[whole] = user[whole];
    cfg.merge_patch(user);
  }
  for (const auto& o : g.overrides) svs::apply_override(cfg, o);
  if (g.seed >= 0) cfg["sim"]["seed"] = g.seed;
  return cfg;
}

std::uint64_t config_seed(const Json& cfg) { return svs::json_get<std::uint64_t>(cfg["sim"], "seed", 1); }

fs::path make_run_dir(const Globals& g, const std::string& tag) {
  std::string base = g.out_dir;
  if (base.empty()) {
    const char* env = std::getenv(kOutEnv);
    base = env && *env ? env : "runs";
  }
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream stamp;
  stamp << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  fs::path dir = fs::path(base) / (tag + "-" + stamp.str());
  for (int i = 1; fs::exists(dir); ++i) dir = fs::path(base) / (tag + "-" + stamp.str() + "-" + std::to_string(i));
  std::error_code ec;
  fs::create_directories(dir, ec);
  svs::require(!ec, "io", "cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  svs::require(static_cast<bool>(out), "io", "cannot write " + path.string());
  out << text;
}

void echo_config(const Globals& g, const Json& cfg, const fs::path& dir) {
  svs::write_json((dir / "config.json").string(), cfg);
  if (g.quiet) return;
  std::cout << "config: " << cfg.dump() << '\n';
  std::cout << "seed: " << config_seed(cfg) << '\n';
  std::cout << "run_dir: " << dir.string() << '\n';
}

void echo_hashes(const svs::StreamProfile& p, const svs::ChannelModel& ch) {
  std::cout << "profile_hash: " << svs::hex64(svs::profile_hash(p)) << '\n';
  std::cout << "channel_hash: " << svs::hex64(svs::channel_hash(ch)) << '\n';
}

svs::MdpConfig mdp_config(const Json& m) {
  svs::MdpConfig c;
  c.window = svs::json_get(m, "window", c.window);
  c.post_cap = svs::json_get(m, "post_cap", c.post_cap);
  c.max_states = svs::json_get(m, "max_states", c.max_states);
  return c;
}

svs::BoundaryDynamics boundary_for(const svs::StateSpace& sp, const Json& m, std::uint64_t seed) {
  const std::string method = svs::json_get<std::string>(m, "boundary", "truncated");
  if (method == "truncated") return svs::boundary_truncated_solve(sp);
  svs::require(method == "monte_carlo", "config", "mdp.boundary must be truncated or monte_carlo");
  return svs::boundary_monte_carlo(sp, svs::json_get<std::size_t>(m, "samples", 100000), seed);
}

struct Solved {
  svs::StateSpace space;
  svs::SolveResult result;
};

Solved solve(const svs::StreamProfile& p, const svs::ChannelModel& ch, const Json& cfg) {
  const Json& m = cfg["mdp"];
  Solved s{svs::enumerate_states(p, ch, mdp_config(m)), {}};
  const auto bd = boundary_for(s.space, m, config_seed(cfg));
  svs::SolveOptions opt;
  opt.epsilon = svs::json_get(m, "epsilon", opt.epsilon);
  opt.max_iters = svs::json_get(m, "max_iters", opt.max_iters);
  s.result = svs::solve_average_cost(s.space, bd, opt);
  return s;
}

int cmd_channel_build(const Globals& g, double fd, double snr, int states, double fps, const std::string& part) {
  Json cfg = resolve_config(g);
  Json& c = cfg["channel"];
  if (fd >= 0) c["f_d_hz"] = fd;
  if (snr > -1e9) c["snr_avg_db"] = snr;
  if (states > 0) c["num_states"] = states;
  if (fps > 0) c["frame_rate"] = fps;
  if (!part.empty()) c["partition"] = part;
  if (fd >= 0 || states > 0 || !part.empty()) c["type"] = "fsmc";
  const auto dir = make_run_dir(g, "channel");
  echo_config(g, cfg, dir);
  const auto ch = svs::channel_from_json(c);
  Json doc = svs::channel_to_json(ch);
  doc["seed"] = config_seed(cfg);
  svs::write_json((dir / "channel.json").string(), doc);
  std::cout << "channel_hash: " << svs::hex64(svs::channel_hash(ch)) << '\n';
  std::cout << std::setprecision(10) << "r_avg_bits_per_slot: " << ch.mean_delivered_bits() << '\n';
  std::cout << "channel_file: " << (dir / "channel.json").string() << '\n';
  return 0;
}

int cmd_mdp_solve(const Globals& g) {
  const Json cfg = resolve_config(g);
  const auto dir = make_run_dir(g, "mdp");
  echo_config(g, cfg, dir);
  const auto p = svs::profile_from_json(cfg["stream"]);
  const auto ch = svs::channel_from_json(cfg["channel"]);
  echo_hashes(p, ch);
  const auto s = solve(p, ch, cfg);
  Json doc = svs::policy_to_json(s.space, s.result);
  doc["seed"] = config_seed(cfg);
  svs::write_json((dir / "policy.json").string(), doc);
  std::cout << "manifest_hash: " << svs::hex64(s.space.manifest) << '\n';
  std::cout << "states: " << s.space.size() << " (window " << s.space.count(svs::StateKind::Window) << ", boundary "
            << s.space.count(svs::StateKind::Boundary) << ", interior " << s.space.count(svs::StateKind::Interior)
            << ")\n";
  std::cout << std::setprecision(10) << "lambda_mse: " << s.result.lambda << " [" << s.result.lambda_lo << ", "
            << s.result.lambda_hi << "] after " << s.result.iterations << " iterations\n";
  std::cout << "policy_file: " << (dir / "policy.json").string() << '\n';
  return 0;
}

int cmd_simulate(const Globals& g, const std::string& scheduler, const std::string& policy_path) {
  Json cfg = resolve_config(g);
  if (!scheduler.empty()) cfg["sim"]["scheduler"] = scheduler;
  if (!policy_path.empty()) cfg["sim"]["policy"] = policy_path;
  const auto dir = make_run_dir(g, "simulate");
  echo_config(g, cfg, dir);
  const auto p = svs::profile_from_json(cfg["stream"]);
  const auto ch = svs::channel_from_json(cfg["channel"]);
  echo_hashes(p, ch);
  const Json& sj = cfg["sim"];
  svs::SimConfig sc;
  sc.scheduler = svs::parse_scheduler(svs::json_get<std::string>(sj, "scheduler", "online"));
  sc.run_length = svs::json_get(sj, "run_length", sc.run_length);
  sc.replications = svs::json_get(sj, "replications", sc.replications);
  sc.seed = config_seed(cfg);
  sc.startup_delay = svs::json_get(sj, "startup_delay", sc.startup_delay);
  sc.partial_carryover = svs::json_get(sj, "partial_carryover", sc.partial_carryover);
  sc.threads = svs::json_get(sj, "threads", 0u);
  sc.record_trace = true;
  const Json& oj = cfg["online"];
  sc.online = svs::estimate_online_params(ch, svs::json_get<std::size_t>(oj, "pilot_slots", 20000),
                                          svs::derive_seed(sc.seed, 0x9170ULL),
                                          svs::json_get(oj, "i_preemption", true));
  if (oj.contains("rho")) sc.online.ar1 = svs::make_ar1(sc.online.ar1.r_avg, oj["rho"].get<double>());

  std::optional<svs::StateSpace> space;
  std::vector<int> policy;
  if (sc.scheduler == svs::SchedulerKind::Mdp) {
    const std::string pf = svs::json_get<std::string>(sj, "policy", "");
    if (pf.empty()) {
      auto s = solve(p, ch, cfg);
      space = std::move(s.space);
      policy = std::move(s.result.policy);
    } else {
      space = svs::enumerate_states(p, ch, mdp_config(cfg["mdp"]));
      policy = svs::load_policy(pf, *space);
    }
    std::cout << "manifest_hash: " << svs::hex64(space->manifest) << '\n';
    sc.space = &*space;
    sc.policy = &policy;
    sc.window = space->window;
  }
  const auto out = svs::run_simulation(p, ch, sc);
  {
    std::ofstream tr(dir / "trace.csv");
    svs::require(static_cast<bool>(tr), "io", "cannot write trace");
    svs::write_trace_csv(tr, out.trace, sc.seed);
  }
  svs::write_json((dir / "summary.json").string(), svs::summary_to_json(out.summary, p));
  const auto& s = out.summary;
  std::cout << std::setprecision(8) << "scheduler: " << s.scheduler << "\nmean_mse: " << s.mean_mse
            << " +- " << s.ci_half << "\nbound_mse: " << s.bound << "\nthroughput_bits_per_slot: " << s.throughput
            << '\n';
  if (s.policy_misses) std::cout << "policy_misses: " << s.policy_misses << '\n';
  std::cout << "summary_file: " << (dir / "summary.json").string() << '\n';
  return 0;
}

int cmd_bound(const Globals& g, double budget) {
  const Json cfg = resolve_config(g);
  const auto dir = make_run_dir(g, "bound");
  echo_config(g, cfg, dir);
  const auto p = svs::profile_from_json(cfg["stream"]);
  const auto ch = svs::channel_from_json(cfg["channel"]);
  echo_hashes(p, ch);
  const double r = budget >= 0 ? budget : ch.mean_delivered_bits();
  const auto b = svs::distortion_lower_bound(p, r);
  Json alloc = Json::object();
  for (int k = 0; k < p.num_frame_types(); ++k)
    alloc[svs::FrameType::from_index(k).name()] = b.allocation[static_cast<std::size_t>(k)];
  const Json doc = {{"schema_version", 1},  {"seed", config_seed(cfg)},     {"budget_bits_per_frame", r},
                    {"bound_mse", b.lower_bound}, {"budget_used", b.budget_used}, {"allocation_bits", alloc}};
  svs::write_json((dir / "bound.json").string(), doc);
  std::cout << std::setprecision(10) << "budget_bits_per_frame: " << r << "\nbound_mse: " << b.lower_bound << '\n';
  return 0;
}

int cmd_report(const Globals& g, const std::vector<std::string>& summaries, double budget) {
  const Json cfg = resolve_config(g);
  const auto dir = make_run_dir(g, "report");
  echo_config(g, cfg, dir);
  const auto p = svs::profile_from_json(cfg["stream"]);
  const auto ch = svs::channel_from_json(cfg["channel"]);
  echo_hashes(p, ch);
  std::vector<svs::RunSummary> rows;
  double matched = 0;
  for (const auto& path : summaries) {
    rows.push_back(svs::summary_from_json(svs::read_json(path)));
    matched += rows.back().budget_per_frame / static_cast<double>(summaries.size());
  }
  const double r = budget >= 0 ? budget : (rows.empty() ? ch.mean_delivered_bits() : matched);
  const auto rep = svs::compare(rows, svs::distortion_lower_bound(p, r));
  const std::string table = svs::render_report(rep);
  std::ostringstream doc;
  doc << "# schema_version=1 seed=" << config_seed(cfg) << " budget_bits_per_frame=" << std::setprecision(10) << r
      << '\n'
      << table;
  write_text(dir / "report.txt", doc.str());
  std::cout << table;
  return 0;
}

void print_error(const std::string& kind, const std::string& msg) {
  std::cerr << Json{{"error", kind}, {"message", msg}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive scheduling of stored scalable video over a fading channel"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_path, "JSON config with stream/channel/mdp/online/sim sections")
      ->check(CLI::ExistingFile);
  app.add_option("-s,--set", g.overrides, "Override a config value, e.g. sim.replications=50");
  app.add_option("--seed", g.seed, "Seed for every random stream (overrides sim.seed)");
  app.add_option("-o,--out", g.out_dir, std::string("Output root (default: $") + kOutEnv + " or ./runs)");
  app.add_flag("-q,--quiet", g.quiet, "Do not echo the resolved config");

  auto* channel = app.add_subcommand("channel", "Channel models");
  channel->require_subcommand(1);
  auto* build = channel->add_subcommand("build", "Build an FSMC and print its mean throughput");
  double fd = -1, snr = -1e10, fps = -1;
  int states = -1;
  std::string partition;
  build->add_option("--fd", fd, "Doppler frequency in Hz");
  build->add_option("--snr", snr, "Average SNR in dB");
  build->add_option("--states", states, "Number of channel states");
  build->add_option("--frame-rate", fps, "Frames (slots) per second");
  build->add_option("--partition", partition, "equal_probability | equal_duration");

  auto* mdp = app.add_subcommand("mdp", "Markov decision process");
  mdp->require_subcommand(1);
  auto* solve_cmd = mdp->add_subcommand("solve", "Solve the average-cost MDP and write the policy");

  auto* sim = app.add_subcommand("simulate", "Run Monte Carlo replications");
  std::string scheduler, policy_path;
  sim->add_option("--scheduler", scheduler, "mdp | online | online_no_isplit | sequential");
  sim->add_option("--policy", policy_path, "Policy file for the mdp scheduler")->check(CLI::ExistingFile);

  auto* bound = app.add_subcommand("bound", "Distortion lower bound");
  double budget = -1;
  bound->add_option("--budget", budget, "Bits per frame (default: channel mean delivered bits per slot)");

  auto* report = app.add_subcommand("report", "Compare simulation summaries against the bound");
  std::vector<std::string> summaries;
  double rbudget = -1;
  report->add_option("summaries", summaries, "summary.json files")->check(CLI::ExistingFile);
  report->add_option("--budget", rbudget, "Bits per frame for the bound (default: matched to the summaries)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) print_error("usage", e.what());
    return app.exit(e);
  }

  try {
    if (build->parsed()) return cmd_channel_build(g, fd, snr, states, fps, partition);
    if (solve_cmd->parsed()) return cmd_mdp_solve(g);
    if (sim->parsed()) return cmd_simulate(g, scheduler, policy_path);
    if (bound->parsed()) return cmd_bound(g, budget);
    if (report->parsed()) return cmd_report(g, summaries, rbudget);
  } catch (const svs::Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 1;
}
