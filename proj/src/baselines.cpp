#include "ratchet/baselines.hpp"

#include <cmath>
#include <stdexcept>

namespace ratchet {

Alpha periodic_policy(double t, double t_on, double t_off) {
  if (!(t_on > 0.0 && t_off > 0.0)) throw std::invalid_argument("periodic_policy: periods must be positive");
  if (t < 0.0) throw std::invalid_argument("periodic_policy: negative time");
  const double phase = std::fmod(t, t_on + t_off);
  return phase < t_on ? 1 : 0;
}

Alpha periodic_policy_steps(std::int64_t steps, double dt, double t_on, double t_off) {
  if (!(t_on > 0.0 && t_off > 0.0)) throw std::invalid_argument("periodic_policy: periods must be positive");
  if (steps < 0) throw std::invalid_argument("periodic_policy: negative time");
  const auto on = static_cast<std::int64_t>(std::llround(t_on / dt));
  const auto period = on + static_cast<std::int64_t>(std::llround(t_off / dt));
  if (period <= 0) return 0;
  return (steps % period) < on ? 1 : 0;
}

double mean_force(const SystemState& state, const RatchetParams& params) {
  double sum = 0.0;
  for (double x : state.x) sum += force(params, x);
  return sum / static_cast<double>(state.size());
}

Alpha greedy_policy(const SystemState& state, const RatchetParams& params) {
  return mean_force(state, params) > 0.0 ? 1 : 0;
}

ThresholdState ThresholdState::start(double u_on, double u_off, double f0) {
  if (u_on < 0.0 || u_off > 0.0) {
    throw std::invalid_argument("ThresholdState: need u_on >= 0 and u_off <= 0");
  }
  return {u_on, u_off, f0, 1};
}

std::pair<Alpha, ThresholdState> threshold_policy(const ThresholdState& ts, double f_now) {
  Alpha alpha = ts.prev_alpha;
  if (f_now < ts.prev_f && f_now <= ts.u_on) {
    alpha = 0;
  } else if (f_now > ts.prev_f && f_now >= ts.u_off) {
    alpha = 1;
  }
  ThresholdState next = ts;
  next.prev_f = f_now;
  next.prev_alpha = alpha;
  return {alpha, next};
}

MndParams MndParams::for_potential(const RatchetParams& params, double x0) {
  const CriticalPoints cp = critical_points(params);
  MndParams mp{x0, cp.x_max, cp.x_min};
  while (mp.x_min <= mp.x_max) mp.x_min += params.length;
  while (mp.x_min > mp.x_max + params.length) mp.x_min -= params.length;
  return mp;
}

double mnd_displacement(const MndParams& mp, double x, double length) {
  // Representative of x in (x_max, x_max + L].
  double y = mp.x_max + wrap_position(x - mp.x_max, length);
  if (y <= mp.x_max) y += length;
  return mp.x_min + mp.x0 - y;
}

Alpha mnd_policy(const SystemState& state, const MndParams& mp, const RatchetParams& params) {
  double sum = 0.0;
  for (double x : state.x) sum += mnd_displacement(mp, x, params.length);
  return sum > 0.0 ? 1 : 0;
}

std::size_t select_best_offset(std::span<const double> grid, std::span<const double> scores) {
  if (grid.empty()) throw std::invalid_argument("x0 grid is empty");
  if (grid.size() != scores.size()) throw std::invalid_argument("x0 grid and scores differ in size");
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (scores[i] > scores[best] ||
        (scores[i] == scores[best] && std::abs(grid[i]) < std::abs(grid[best]))) {
      best = i;
    }
  }
  return best;
}

}  // namespace ratchet
