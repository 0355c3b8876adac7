#include "ratchet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ratchet/format.hpp"
#include "ratchet/parallel.hpp"
#include "ratchet/rng.hpp"

namespace ratchet {
namespace {

std::int64_t steps_for(double duration, double dt) {
  return static_cast<std::int64_t>(std::llround(duration / dt));
}

}  // namespace

double EvalReport::std_error() const {
  return ensemble > 0 ? current_std / std::sqrt(static_cast<double>(ensemble)) : 0.0;
}

EvalReport evaluate(const PolicySource& policy, const RatchetParams& params, const EvalOptions& options) {
  params.validate();
  if (options.ensemble == 0) throw std::invalid_argument("evaluate: ensemble must be >= 1");
  if (!(options.duration > 0.0)) throw std::invalid_argument("evaluate: duration must be positive");
  if (options.n == 0) throw std::invalid_argument("evaluate: N must be >= 1");
  policy.check_compatible(options.n, options.tau);
  delay_steps(options.tau, params.dt);

  const std::int64_t burn = steps_for(options.burn_in, params.dt);
  const std::int64_t measure = steps_for(options.duration, params.dt);
  std::vector<double> currents(options.ensemble, 0.0);

  parallel_chunks(options.ensemble, options.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<Rng> rngs;
    std::vector<DelayedEnv> envs;
    rngs.reserve(end - begin);
    envs.reserve(end - begin);
    for (std::size_t m = begin; m < end; ++m) {
      rngs.emplace_back(options.seed, m);
      envs.emplace_back(params, uniform_state(options.n, params, rngs.back()), options.tau);
    }
    auto controller = policy.make_controller(params);
    controller->reset(envs);
    std::vector<Alpha> actions(envs.size());
    std::vector<double> displacement(envs.size(), 0.0);
    for (std::int64_t s = 0; s < burn + measure; ++s) {
      controller->act(envs, actions);
      for (std::size_t k = 0; k < envs.size(); ++k) {
        const double r = envs[k].step(actions[k], rngs[k]);
        if (s >= burn) displacement[k] += r;
      }
    }
    for (std::size_t k = 0; k < envs.size(); ++k) currents[begin + k] = displacement[k] / options.duration;
  });

  EvalReport report;
  report.policy = policy.name();
  report.n = options.n;
  report.tau = options.tau;
  report.ensemble = options.ensemble;
  report.duration = options.duration;
  report.seed = options.seed;
  double mean = 0.0;
  for (double c : currents) mean += c;
  mean /= static_cast<double>(currents.size());
  double var = 0.0;
  for (double c : currents) var += (c - mean) * (c - mean);
  report.current_mean = mean;
  report.current_std = currents.size() > 1 ? std::sqrt(var / static_cast<double>(currents.size() - 1)) : 0.0;
  report.currents = std::move(currents);
  return report;
}

std::vector<EvalReport> sweep(const PolicyFactory& factory, std::span<const SweepPoint> points,
                              const RatchetParams& params, const EvalOptions& base) {
  if (points.empty()) throw std::invalid_argument("sweep: empty point list");
  std::vector<EvalReport> out;
  for (std::size_t k = 0; k < points.size(); ++k) {
    EvalOptions opt = base;
    opt.n = points[k].n;
    opt.tau = points[k].tau;
    opt.seed = derive_seed(base.seed, k);
    auto policy = factory(points[k], opt.seed);
    out.push_back(evaluate(*policy, params, opt));
  }
  return out;
}

std::vector<EvalReport> sweep(const PolicySource& policy, std::span<const SweepPoint> points,
                              const RatchetParams& params, const EvalOptions& base) {
  // Non-owning alias; the caller keeps `policy` alive for the call.
  std::shared_ptr<const PolicySource> alias(std::shared_ptr<const PolicySource>{}, &policy);
  return sweep([&](const SweepPoint&, std::uint64_t) { return alias; }, points, params, base);
}

void write_reports_csv(std::ostream& os, std::span<const EvalReport> reports) {
  os << "policy,N,tau,current,current_std,ensemble,duration,seed\n";
  for (const auto& r : reports) {
    os << r.policy << ',' << r.n << ',' << format_number(r.tau) << ',' << format_number(r.current_mean) << ','
       << format_number(r.current_std) << ',' << r.ensemble << ',' << format_number(r.duration) << ',' << r.seed
       << '\n';
  }
}

std::vector<double> default_x0_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 25; ++i) grid.push_back(-0.25 + 0.01 * i);
  grid.back() = 0.0;
  return grid;
}

MndSearch optimize_mnd_x0(std::size_t n, double tau, const RatchetParams& params, std::span<const double> grid,
                          const EvalOptions& budget) {
  if (grid.empty()) throw std::invalid_argument("optimize_mnd_x0: empty x0 grid");
  MndSearch search;
  search.grid.assign(grid.begin(), grid.end());
  std::vector<double> scores;
  EvalOptions opt = budget;
  opt.n = n;
  opt.tau = tau;
  for (double x0 : grid) {
    search.reports.push_back(evaluate(MndSource(x0), params, opt));
    scores.push_back(search.reports.back().current_mean);
  }
  search.x0 = grid[select_best_offset(grid, scores)];
  return search;
}

std::vector<double> default_threshold_grid(bool on_side) {
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(on_side ? 0.5 * i : -10.0 + 0.5 * i);
  return grid;
}

ThresholdSearch optimize_threshold(std::size_t n, double tau, const RatchetParams& params,
                                   std::span<const double> grid_on, std::span<const double> grid_off,
                                   const EvalOptions& budget) {
  if (grid_on.empty() || grid_off.empty()) throw std::invalid_argument("optimize_threshold: empty grid");
  EvalOptions opt = budget;
  opt.n = n;
  opt.tau = tau;
  ThresholdSearch best;
  bool first = true;
  for (double on : grid_on) {
    for (double off : grid_off) {
      const double c = evaluate(ThresholdSource(on, off), params, opt).current_mean;
      if (first || c > best.current) {
        best = {on, off, c};
        first = false;
      }
    }
  }
  return best;
}

std::shared_ptr<NetworkSource> network_source(const Checkpoint& ckpt, std::string label) {
  auto policy = std::make_shared<const Network>(restore_network(ckpt, kPolicyPrefix));
  std::shared_ptr<const Network> value;
  if (has_network(ckpt, kValuePrefix)) value = std::make_shared<const Network>(restore_network(ckpt, kValuePrefix));
  return std::make_shared<NetworkSource>(std::move(policy), std::move(value), std::move(label));
}

BestOf best_of_seeds(std::span<const std::filesystem::path> run_dirs, const RatchetParams& params,
                     const EvalOptions& options) {
  if (run_dirs.empty()) throw std::invalid_argument("best_of_seeds: no runs given");
  BestOf best;
  for (std::size_t i = 0; i < run_dirs.size(); ++i) {
    Checkpoint ckpt = load_checkpoint(run_dirs[i] / "final.ckpt");
    EvalOptions opt = options;
    opt.n = ckpt.arch.n;
    opt.tau = ckpt.tau;
    auto source = network_source(ckpt, "run" + std::to_string(i));
    best.reports.push_back(evaluate(*source, params, opt));
    if (i == 0 || best.reports.back().current_mean > best.reports[best.index].current_mean) {
      best.index = i;
      best.dir = run_dirs[i];
      best.checkpoint = std::move(ckpt);
    }
  }
  return best;
}

std::vector<BoundaryPoint> boundary_grid(const PolicySource& policy, std::size_t n, std::size_t resolution,
                                         const RatchetParams& params) {
  if (n != 1 && n != 2) throw std::invalid_argument("boundary_grid: only N = 1 or N = 2 can be plotted");
  if (resolution == 0) throw std::invalid_argument("boundary_grid: resolution must be >= 1");
  policy.check_compatible(n, 0.0);
  const double h = params.length / static_cast<double>(resolution);
  std::vector<BoundaryPoint> points;
  std::vector<DelayedEnv> envs;
  for (std::size_t i = 0; i < resolution; ++i) {
    if (n == 1) {
      points.push_back({i * h, 0.0, 0.0});
      envs.emplace_back(params, SystemState{{i * h}, 0.0, 0}, 0.0);
      continue;
    }
    for (std::size_t j = 0; j < resolution; ++j) {
      points.push_back({i * h, j * h, 0.0});
      envs.emplace_back(params, SystemState{{i * h, j * h}, 0.0, 0}, 0.0);
    }
  }
  const auto p_on = policy.on_probability(envs, params);
  for (std::size_t k = 0; k < points.size(); ++k) points[k].p_on = p_on[k];
  return points;
}

void write_boundary_csv(std::ostream& os, std::span<const BoundaryPoint> points, std::size_t n) {
  os << (n == 1 ? "x1,p_on\n" : "x1,x2,p_on\n");
  for (const auto& p : points) {
    os << format_number(p.x1) << ',';
    if (n != 1) os << format_number(p.x2) << ',';
    os << format_number(p.p_on) << '\n';
  }
}

std::vector<TracePoint> time_trace(const PolicySource& policy, std::size_t n, double tau, double duration,
                                   const RatchetParams& params, std::uint64_t seed) {
  policy.check_compatible(n, tau);
  const std::int64_t steps = steps_for(duration, params.dt);
  if (steps <= 0) throw std::invalid_argument("time_trace: duration shorter than one step");
  Rng rng(seed, 0);
  std::vector<DelayedEnv> env;
  env.emplace_back(params, uniform_state(n, params, rng), tau);
  auto controller = policy.make_controller(params);
  controller->reset(env);
  std::vector<TracePoint> trace;
  trace.reserve(static_cast<std::size_t>(steps));
  Alpha decision = 0;
  for (std::int64_t s = 0; s < steps; ++s) {
    controller->act(env, std::span<Alpha>(&decision, 1));
    TracePoint p;
    p.t = env[0].state().t;
    p.alpha = env[0].next_applied(decision);
    if (policy.has_value()) p.value = policy.value(env)[0];
    trace.push_back(p);
    env[0].step(decision, rng);
  }
  return trace;
}

void write_trace_csv(std::ostream& os, std::span<const TracePoint> trace) {
  os << "t,alpha,value\n";
  for (const auto& p : trace) {
    os << format_number(p.t) << ',' << int(p.alpha) << ',';
    if (p.value) os << format_number(*p.value);
    os << '\n';
  }
}

}  // namespace ratchet
