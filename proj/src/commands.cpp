#include "ratchet/commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include "ratchet/format.hpp"
#include "ratchet/version.hpp"

namespace ratchet {
namespace fs = std::filesystem;

namespace {

// Auto searches draw from a stream that the final evaluation never uses.
constexpr std::uint64_t kSearchStream = 0x5ea2c4;

using Clock = std::chrono::steady_clock;

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  return out;
}

void write_manifest(const fs::path& dir, const RunConfig& cfg, Clock::time_point start,
                    const std::vector<std::string>& notes = {}) {
  auto out = open_output(dir / "manifest.txt");
  out << "# ratchet " << kVersion << '\n';
  out << "# wall_time_s=" << format_number(std::chrono::duration<double>(Clock::now() - start).count()) << '\n';
  for (const auto& note : notes) out << "# " << note << '\n';
  out << cfg.to_text();
}

std::string point_label(std::size_t n, double tau) {
  return "N=" + std::to_string(n) + " tau=" + format_number(tau);
}

struct BuiltPolicy {
  std::shared_ptr<const PolicySource> source;
  std::vector<std::string> notes;
  std::vector<EvalReport> search_reports;
};

// A baseline named by the "policy" key, running any requested auto search
// at (n, tau) with streams derived from `seed`.
BuiltPolicy build_baseline(const RunConfig& cfg, std::size_t n, double tau, std::uint64_t seed, unsigned threads) {
  const RatchetParams params = cfg.physics();
  const std::string& name = cfg.text("policy");
  EvalOptions budget;
  budget.ensemble = cfg.count("search_ensemble");
  budget.duration = cfg.real("search_duration");
  budget.seed = derive_seed(seed, kSearchStream);
  budget.threads = threads;
  BuiltPolicy built;
  if (name == "periodic") {
    built.source = std::make_shared<PeriodicSource>(PeriodicSchedule{cfg.real("t_on"), cfg.real("t_off")});
  } else if (name == "greedy") {
    built.source = std::make_shared<GreedySource>();
  } else if (name == "off" || name == "on") {
    built.source = std::make_shared<ConstantSource>(name == "on" ? 1 : 0);
  } else if (name == "mnd") {
    double x0 = 0.0;
    if (cfg.is_auto("x0")) {
      const auto grid = default_x0_grid();
      MndSearch search = optimize_mnd_x0(n, tau, params, grid, budget);
      x0 = search.x0;
      built.search_reports = std::move(search.reports);
      for (std::size_t i = 0; i < grid.size(); ++i) built.search_reports[i].policy = "mnd x0=" + format_number(grid[i]);
      built.notes.push_back("resolved x0=" + format_number(x0) + " for " + point_label(n, tau));
    } else {
      x0 = cfg.real("x0");
    }
    built.source = std::make_shared<MndSource>(x0);
  } else if (name == "threshold") {
    const auto grid_on = cfg.is_auto("u_on") ? default_threshold_grid(true) : std::vector<double>{cfg.real("u_on")};
    const auto grid_off =
        cfg.is_auto("u_off") ? default_threshold_grid(false) : std::vector<double>{cfg.real("u_off")};
    double u_on = grid_on.front();
    double u_off = grid_off.front();
    if (grid_on.size() > 1 || grid_off.size() > 1) {
      const ThresholdSearch search = optimize_threshold(n, tau, params, grid_on, grid_off, budget);
      u_on = search.u_on;
      u_off = search.u_off;
      built.notes.push_back("resolved u_on=" + format_number(u_on) + " u_off=" + format_number(u_off) + " for " +
                            point_label(n, tau));
    }
    built.source = std::make_shared<ThresholdSource>(u_on, u_off);
  } else {
    throw ConfigError("policy", "unknown policy '" + name + "'");
  }
  return built;
}

Checkpoint load_checkpoint_key(const RunConfig& cfg) {
  const fs::path path = cfg.text("checkpoint");
  if (!fs::exists(path)) throw ConfigError("checkpoint", "file not found: " + path.string());
  return load_checkpoint(path);
}

// Fills n/tau left at auto from the checkpoint (or N=1, tau=0 for baselines).
void resolve_auto(RunConfig& cfg, const Checkpoint* ckpt) {
  if (cfg.has("n") && cfg.is_auto("n")) cfg.set("n", std::to_string(ckpt ? ckpt->arch.n : 1));
  if (cfg.has("tau") && cfg.is_auto("tau")) cfg.set("tau", format_number(ckpt ? ckpt->tau : 0.0));
}

void log_report(std::ostream* log, const EvalReport& r) {
  if (!log) return;
  *log << r.policy << " " << point_label(r.n, r.tau) << ": current " << format_number(r.current_mean) << " +/- "
       << format_number(r.std_error()) << " (std " << format_number(r.current_std) << ", ensemble " << r.ensemble
       << ")\n";
}

void write_reports(const fs::path& path, std::span<const EvalReport> reports) {
  auto out = open_output(path);
  write_reports_csv(out, reports);
}

fs::path run_simulate(RunConfig cfg, const RunContext& ctx, Clock::time_point start) {
  resolve_auto(cfg, nullptr);
  const fs::path dir = unique_directory(cfg.text("out"));
  fs::create_directories(dir);
  const EvalOptions opt = cfg.eval_options(ctx.threads);
  BuiltPolicy built = build_baseline(cfg, opt.n, opt.tau, cfg.seed(), ctx.threads);
  const EvalReport report = evaluate(*built.source, cfg.physics(), opt);
  write_reports(dir / "report.csv", std::span(&report, 1));
  if (!built.search_reports.empty()) write_reports(dir / "search.csv", built.search_reports);
  log_report(ctx.log, report);
  write_manifest(dir, cfg, start, built.notes);
  return dir;
}

fs::path run_eval(RunConfig cfg, const RunContext& ctx, Clock::time_point start) {
  const Checkpoint ckpt = load_checkpoint_key(cfg);
  resolve_auto(cfg, &ckpt);
  const EvalOptions opt = cfg.eval_options(ctx.threads);
  const auto source = network_source(ckpt, std::string(to_string(ckpt.arch.kind)));
  source->check_compatible(opt.n, opt.tau);
  const fs::path dir = unique_directory(cfg.text("out"));
  fs::create_directories(dir);
  const EvalReport report = evaluate(*source, cfg.physics(), opt);
  write_reports(dir / "report.csv", std::span(&report, 1));
  log_report(ctx.log, report);
  write_manifest(dir, cfg, start);
  return dir;
}

fs::path run_sweep(RunConfig cfg, const RunContext& ctx, Clock::time_point start) {
  std::vector<SweepPoint> points;
  for (std::size_t n : cfg.counts("n_list")) {
    for (double tau : cfg.reals("tau_list")) points.push_back({n, tau});
  }
  std::shared_ptr<const PolicySource> network;
  if (!cfg.text("checkpoint").empty()) {
    const Checkpoint ckpt = load_checkpoint_key(cfg);
    network = network_source(ckpt, std::string(to_string(ckpt.arch.kind)));
    for (const auto& p : points) network->check_compatible(p.n, p.tau);
  }
  const fs::path dir = unique_directory(cfg.text("out"));
  fs::create_directories(dir);
  std::vector<std::string> notes;
  std::vector<EvalReport> search_reports;
  const PolicyFactory factory = [&](const SweepPoint& p, std::uint64_t point_seed) {
    if (network) return network;
    BuiltPolicy built = build_baseline(cfg, p.n, p.tau, point_seed, ctx.threads);
    notes.insert(notes.end(), built.notes.begin(), built.notes.end());
    search_reports.insert(search_reports.end(), built.search_reports.begin(), built.search_reports.end());
    return built.source;
  };
  const auto reports = sweep(factory, points, cfg.physics(), cfg.eval_options(ctx.threads));
  write_reports(dir / "sweep.csv", reports);
  if (!search_reports.empty()) write_reports(dir / "search.csv", search_reports);
  for (const auto& r : reports) log_report(ctx.log, r);
  write_manifest(dir, cfg, start, notes);
  return dir;
}

std::shared_ptr<const PolicySource> source_for(RunConfig& cfg, const RunContext& ctx, std::vector<std::string>& notes) {
  if (!cfg.text("checkpoint").empty()) {
    const Checkpoint ckpt = load_checkpoint_key(cfg);
    resolve_auto(cfg, &ckpt);
    return network_source(ckpt, std::string(to_string(ckpt.arch.kind)));
  }
  resolve_auto(cfg, nullptr);
  BuiltPolicy built = build_baseline(cfg, cfg.count("n"), cfg.real("tau"), cfg.seed(), ctx.threads);
  notes = std::move(built.notes);
  return built.source;
}

fs::path run_boundary(RunConfig cfg, const RunContext& ctx, Clock::time_point start) {
  std::vector<std::string> notes;
  const auto source = source_for(cfg, ctx, notes);
  const std::size_t n = cfg.count("n");
  if (n > 2) throw ConfigError("n", "decision boundaries are only defined for N = 1 or 2");
  const auto grid = boundary_grid(*source, n, cfg.count("resolution"), cfg.physics());
  const fs::path dir = unique_directory(cfg.text("out"));
  fs::create_directories(dir);
  {
    auto out = open_output(dir / "boundary.csv");
    write_boundary_csv(out, grid, n);
  }
  if (ctx.log) *ctx.log << "wrote " << grid.size() << " grid points to " << (dir / "boundary.csv").string() << '\n';
  write_manifest(dir, cfg, start, notes);
  return dir;
}

fs::path run_trace(RunConfig cfg, const RunContext& ctx, Clock::time_point start) {
  std::vector<std::string> notes;
  const auto source = source_for(cfg, ctx, notes);
  const auto trace =
      time_trace(*source, cfg.count("n"), cfg.real("tau"), cfg.real("duration"), cfg.physics(), cfg.seed());
  const fs::path dir = unique_directory(cfg.text("out"));
  fs::create_directories(dir);
  {
    auto out = open_output(dir / "trace.csv");
    write_trace_csv(out, trace);
  }
  if (ctx.log) *ctx.log << "wrote " << trace.size() << " steps to " << (dir / "trace.csv").string() << '\n';
  write_manifest(dir, cfg, start, notes);
  return dir;
}

fs::path run_train(RunConfig cfg, const RunContext& ctx, Clock::time_point start) {
  const fs::path parent = cfg.text("out");
  fs::create_directories(parent);
  const EnvSpec env{cfg.physics(), cfg.count("n"), cfg.real("tau")};
  const ArchConfig arch = cfg.arch();
  const PpoConfig ppo = cfg.ppo();
  const std::uint64_t first_seed = cfg.seed();
  const std::size_t seeds = cfg.count("seeds");
  for (std::size_t i = 0; i < seeds; ++i) {
    const auto run_start = i == 0 ? start : Clock::now();
    const std::uint64_t seed = first_seed + i;
    const fs::path dir = unique_directory(parent / (std::string(to_string(arch.kind)) + "-n" +
                                                    std::to_string(env.n) + "-tau" + format_number(env.tau) +
                                                    "-seed" + std::to_string(seed)));
    fs::create_directories(dir);
    auto metrics = open_output(dir / "metrics.csv");
    write_metrics_header(metrics);
    TrainOptions options;
    options.on_epoch = [&](const EpochMetrics& m) {
      write_metrics_row(metrics, m);
      metrics.flush();
      if (ctx.log && (m.epoch % 10 == 0 || m.epoch + 1 == ppo.epochs)) {
        *ctx.log << "seed " << seed << " epoch " << m.epoch << ": current estimate " << format_number(m.mean_current)
                 << ", policy steps " << m.policy_steps << ", value mse " << format_number(m.value_mse) << '\n';
      }
    };
    const TrainResult result = train(env, arch, ppo, seed, options);
    save_checkpoint(result.final_checkpoint, dir / "final.ckpt");
    save_checkpoint(result.best_checkpoint, dir / "best.ckpt");
    RunConfig run_cfg = cfg;
    run_cfg.set("seed", std::to_string(seed));
    run_cfg.set("seeds", "1");
    write_manifest(dir, run_cfg, run_start, {"run directory " + dir.filename().string()});
    if (ctx.log) *ctx.log << "finished " << dir.string() << '\n';
  }
  return parent;
}

std::vector<fs::path> expand_runs(const std::vector<std::string>& entries) {
  std::vector<fs::path> runs;
  for (const auto& entry : entries) {
    const fs::path p = entry;
    if (fs::exists(p / "final.ckpt")) {
      runs.push_back(p);
      continue;
    }
    if (!fs::is_directory(p)) throw ConfigError("runs", "not a run directory: " + entry);
    std::vector<fs::path> children;
    for (const auto& child : fs::directory_iterator(p)) {
      if (child.is_directory() && fs::exists(child.path() / "final.ckpt")) children.push_back(child.path());
    }
    if (children.empty()) throw ConfigError("runs", "no completed runs (final.ckpt) under " + entry);
    std::sort(children.begin(), children.end());
    runs.insert(runs.end(), children.begin(), children.end());
  }
  return runs;
}

fs::path run_best_of(RunConfig cfg, const RunContext& ctx, Clock::time_point start) {
  const auto runs = expand_runs(cfg.texts("runs"));
  const BestOf best = best_of_seeds(runs, cfg.physics(), cfg.eval_options(ctx.threads));
  const fs::path dir = unique_directory(cfg.text("out"));
  fs::create_directories(dir);
  {
    auto out = open_output(dir / "candidates.csv");
    out << "index,run,current,current_std\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
      out << i << ',' << runs[i].string() << ',' << format_number(best.reports[i].current_mean) << ','
          << format_number(best.reports[i].current_std) << '\n';
    }
  }
  save_checkpoint(best.checkpoint, dir / "best.ckpt");
  if (ctx.log) {
    for (const auto& r : best.reports) log_report(ctx.log, r);
    *ctx.log << "selected run " << best.index << ": " << best.dir.string() << '\n';
  }
  write_manifest(dir, cfg, start, {"selected " + best.dir.string()});
  return dir;
}

}  // namespace

fs::path unique_directory(const fs::path& base) {
  if (!fs::exists(base)) return base;
  for (std::size_t k = 1;; ++k) {
    fs::path candidate = base;
    candidate += "-" + std::to_string(k);
    if (!fs::exists(candidate)) return candidate;
  }
}

fs::path run_command(RunConfig cfg, const RunContext& ctx) {
  const auto start = Clock::now();
  cfg.validate();
  switch (cfg.command()) {
    case Command::simulate: return run_simulate(std::move(cfg), ctx, start);
    case Command::train: return run_train(std::move(cfg), ctx, start);
    case Command::eval: return run_eval(std::move(cfg), ctx, start);
    case Command::sweep: return run_sweep(std::move(cfg), ctx, start);
    case Command::boundary: return run_boundary(std::move(cfg), ctx, start);
    case Command::trace: return run_trace(std::move(cfg), ctx, start);
    case Command::best_of: return run_best_of(std::move(cfg), ctx, start);
  }
  throw std::logic_error("run_command: bad command");
}

RunConfig load_manifest(const fs::path& dir) {
  const fs::path file = fs::is_directory(dir) ? dir / "manifest.txt" : dir;
  const KeyValues values = read_key_values(file);
  const auto it = std::find_if(values.begin(), values.end(), [](const auto& kv) { return kv.first == "command"; });
  if (it == values.end()) throw ConfigError("command", "manifest " + file.string() + " names no command");
  return parse_config(parse_command(it->second), values, {});
}

}  // namespace ratchet
