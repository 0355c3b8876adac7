#pragma once

// Deterministic policy evaluation and the benchmark sweeps built on it.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ratchet/checkpoint.hpp"
#include "ratchet/policies.hpp"

namespace ratchet {

struct EvalOptions {
  std::size_t n = 1;
  double tau = 0.0;
  double duration = 50.0;  // measurement window, units of L^2/D
  std::size_t ensemble = 32;
  double burn_in = 0.0;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct EvalReport {
  std::string policy;
  std::size_t n = 0;
  double tau = 0.0;
  double current_mean = 0.0;  // D/L
  double current_std = 0.0;   // sample std over the ensemble
  std::size_t ensemble = 0;
  double duration = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> currents;  // per ensemble member

  double std_error() const;
};

/// Runs `ensemble` independent trajectories (member m uses stream (seed, m))
/// and reports the current = total mean displacement / duration. Results do
/// not depend on the thread count.
EvalReport evaluate(const PolicySource& policy, const RatchetParams& params, const EvalOptions& options);

struct SweepPoint {
  std::size_t n = 1;
  double tau = 0.0;
};

using PolicyFactory = std::function<std::shared_ptr<const PolicySource>(const SweepPoint&, std::uint64_t point_seed)>;

/// One report per point. Point k is evaluated with seed derive_seed(seed, k).
std::vector<EvalReport> sweep(const PolicyFactory& factory, std::span<const SweepPoint> points,
                              const RatchetParams& params, const EvalOptions& base);
std::vector<EvalReport> sweep(const PolicySource& policy, std::span<const SweepPoint> points,
                              const RatchetParams& params, const EvalOptions& base);

/// CSV: policy,N,tau,current,current_std,ensemble,duration,seed
void write_reports_csv(std::ostream& os, std::span<const EvalReport> reports);

/// 26 points evenly spaced over [-0.25, 0].
std::vector<double> default_x0_grid();

struct MndSearch {
  double x0 = 0.0;
  std::vector<double> grid;
  std::vector<EvalReport> reports;
};

/// Grid search over the MND offset; ties go to the smaller |x0|.
MndSearch optimize_mnd_x0(std::size_t n, double tau, const RatchetParams& params, std::span<const double> grid,
                          const EvalOptions& budget);

struct ThresholdSearch {
  double u_on = 0.0;
  double u_off = 0.0;
  double current = 0.0;
};

/// Grid search over (u_on, u_off); default grids are {0, 0.5, ..., 10} and
/// {-10, ..., 0}.
ThresholdSearch optimize_threshold(std::size_t n, double tau, const RatchetParams& params,
                                   std::span<const double> grid_on, std::span<const double> grid_off,
                                   const EvalOptions& budget);
std::vector<double> default_threshold_grid(bool on_side);

struct BestOf {
  std::size_t index = 0;
  std::filesystem::path dir;
  Checkpoint checkpoint;
  std::vector<EvalReport> reports;  // one per run, in input order
};

/// Loads final.ckpt from each run directory, evaluates each with the same
/// options and seed, and returns the best (ties: lowest index).
BestOf best_of_seeds(std::span<const std::filesystem::path> run_dirs, const RatchetParams& params,
                     const EvalOptions& options);

struct BoundaryPoint {
  double x1 = 0.0;
  double x2 = 0.0;
  double p_on = 0.0;
};

/// p_on on a uniform grid {i L / resolution} over [0, L) per axis, for N = 1
/// (x1 only) or N = 2 (row-major x1 outer, x2 inner).
std::vector<BoundaryPoint> boundary_grid(const PolicySource& policy, std::size_t n, std::size_t resolution,
                                         const RatchetParams& params);
void write_boundary_csv(std::ostream& os, std::span<const BoundaryPoint> points, std::size_t n);

struct TracePoint {
  double t = 0.0;
  Alpha alpha = 0;                // action applied during [t, t + dt)
  std::optional<double> value;    // value estimate at t, if available
};

/// One deterministic rollout of length duration/dt from stream (seed, 0).
std::vector<TracePoint> time_trace(const PolicySource& policy, std::size_t n, double tau, double duration,
                                   const RatchetParams& params, std::uint64_t seed);
void write_trace_csv(std::ostream& os, std::span<const TracePoint> trace);

/// Policy source backed by a checkpoint's policy (and value, when present)
/// networks.
std::shared_ptr<NetworkSource> network_source(const Checkpoint& ckpt, std::string label = "network");

}  // namespace ratchet
