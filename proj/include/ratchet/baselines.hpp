#pragma once

// Handcrafted feedback policies: periodic switching, greedy, threshold and
// maximal net displacement (MND).

#include <span>
#include <utility>

#include "ratchet/ratchet_core.hpp"

namespace ratchet {

struct PeriodicSchedule {
  double t_on = 0.03;
  double t_off = 0.04;
};

/// 1 while (t mod (T_on + T_off)) is in [0, T_on), else 0.
Alpha periodic_policy(double t, double t_on, double t_off);

/// Same rule for t = steps * dt evaluated on the integer step grid, so that
/// on-windows cover a fixed number of steps regardless of rounding in t.
Alpha periodic_policy_steps(std::int64_t steps, double dt, double t_on, double t_off);

/// f(s) = sum_i F(x_i) / N.
double mean_force(const SystemState& state, const RatchetParams& params);

/// Theta(f(s)) with Theta(0) = 0.
Alpha greedy_policy(const SystemState& state, const RatchetParams& params);

struct ThresholdState {
  double u_on = 0.0;   // >= 0
  double u_off = 0.0;  // <= 0
  double prev_f = 0.0;
  Alpha prev_alpha = 1;

  /// Initial state: prev_f = f at t = 0, prev_alpha = 1.
  static ThresholdState start(double u_on, double u_off, double f0);
};

/// Hysteretic switch: off when f is decreasing and f <= u_on, on when f is
/// increasing and f >= u_off, otherwise the previous action is held.
std::pair<Alpha, ThresholdState> threshold_policy(const ThresholdState& ts, double f_now);

struct MndParams {
  double x0 = 0.0;
  double x_max = 0.0;
  double x_min = 0.0;  // normalized into (x_max, x_max + L]

  static MndParams for_potential(const RatchetParams& params, double x0);
};

/// d(x) = x_min + x0 - x on (x_max, x_max + L], extended L-periodically.
double mnd_displacement(const MndParams& mp, double x, double length);

/// Theta(sum_i d(x_i)).
Alpha mnd_policy(const SystemState& state, const MndParams& mp, const RatchetParams& params);

/// Index of the best score in `scores`, ties going to the grid point with the
/// smallest |x0| (then the earliest). Throws std::invalid_argument on an
/// empty grid or mismatched sizes.
std::size_t select_best_offset(std::span<const double> grid, std::span<const double> scores);

}  // namespace ratchet
