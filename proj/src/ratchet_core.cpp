#include "ratchet/ratchet_core.hpp"

#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace ratchet {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) {
    throw std::invalid_argument(std::string(what) + ": non-finite position");
  }
}

// F(x) for the smooth potential with c = cos(2 pi x/L), using
// cos(4 pi x/L) = 2c^2 - 1.
inline double smooth_force_from_cos(double u0, double length, double c) {
  return -u0 * (kTwoPi / length) * (c + c * c - 0.5);
}

inline double sawtooth_force(double u0, double length, double x) {
  const double xr = wrap_position(x, length);
  if (xr > 0.0 && xr <= length / 3.0) return -3.0 * u0 / length;
  return 1.5 * u0 / length;
}

template <typename Noise>
double advance(SystemState& state, Alpha alpha, const RatchetParams& params, Noise&& noise) {
  if (alpha > 1) throw std::invalid_argument("step: alpha must be 0 or 1");
  const double drift = params.dt / params.friction();
  const double kick = std::sqrt(2.0 * params.diffusion * params.dt);
  const double n = static_cast<double>(state.size());
  double total = 0.0;
  bool finite = true;
  if (alpha == 0) {
    for (std::size_t i = 0; i < state.size(); ++i) {
      const double dx = kick * noise(i);
      state.x[i] += dx;
      total += dx;
    }
  } else if (params.potential == PotentialKind::smooth) {
    const double k = kTwoPi / params.length;
    for (std::size_t i = 0; i < state.size(); ++i) {
      const double f = smooth_force_from_cos(params.u0, params.length, std::cos(k * state.x[i]));
      const double dx = drift * f + kick * noise(i);
      state.x[i] += dx;
      total += dx;
    }
  } else {
    for (std::size_t i = 0; i < state.size(); ++i) {
      const double dx = drift * sawtooth_force(params.u0, params.length, state.x[i]) + kick * noise(i);
      state.x[i] += dx;
      total += dx;
    }
  }
  for (double xi : state.x) finite = finite && std::isfinite(xi);
  if (!finite) throw std::runtime_error("step: integration diverged (non-finite position)");
  state.steps += 1;
  state.t = static_cast<double>(state.steps) * params.dt;
  return total / n;
}

}  // namespace

std::string_view to_string(PotentialKind kind) {
  return kind == PotentialKind::smooth ? "smooth" : "sawtooth";
}

PotentialKind parse_potential_kind(std::string_view name) {
  if (name == "smooth") return PotentialKind::smooth;
  if (name == "sawtooth") return PotentialKind::sawtooth;
  throw std::invalid_argument("unknown potential '" + std::string(name) + "'");
}

void RatchetParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(std::isfinite(v) && v > 0.0)) {
      throw std::invalid_argument(std::string("RatchetParams: ") + name + " must be positive");
    }
  };
  positive(length, "L");
  positive(u0, "U0");
  positive(kt, "kT");
  positive(diffusion, "D");
  positive(dt, "dt");
}

double wrap_position(double x, double length) {
  double r = x - length * std::floor(x / length);
  // floor can leave r == length for tiny negative x.
  if (r >= length) r -= length;
  return r;
}

double potential(const RatchetParams& params, double x) {
  require_finite(x, "potential");
  if (params.potential == PotentialKind::smooth) {
    const double k = kTwoPi / params.length;
    return params.u0 * (std::sin(k * x) + 0.25 * std::sin(2.0 * k * x));
  }
  const double xr = wrap_position(x, params.length);
  const double third = params.length / 3.0;
  if (xr <= third) return 3.0 * params.u0 / params.length * xr;
  return params.u0 - 1.5 * params.u0 / params.length * (xr - third);
}

double force(const RatchetParams& params, double x) {
  require_finite(x, "force");
  if (params.potential == PotentialKind::smooth) {
    return smooth_force_from_cos(params.u0, params.length, std::cos(kTwoPi / params.length * x));
  }
  return sawtooth_force(params.u0, params.length, x);
}

CriticalPoints critical_points(const RatchetParams& params) {
  params.validate();
  if (params.potential == PotentialKind::sawtooth) {
    return {params.length / 3.0, 0.0};
  }
  // Scan for sign changes of F, then bisect each bracket. A maximum of U is
  // where F goes from negative to positive; a minimum the reverse.
  constexpr int kGrid = 1000;
  const double h = params.length / kGrid;
  CriticalPoints cp;
  bool have_max = false;
  bool have_min = false;
  auto f = [&](double x) { return force(params, x); };
  auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-10; };
  for (int i = 0; i < kGrid; ++i) {
    const double a = i * h;
    const double b = (i + 1) * h;
    const double fa = f(a);
    const double fb = f(b);
    if ((fa < 0.0) == (fb < 0.0)) continue;
    const auto [lo, hi] = boost::math::tools::bisect(f, a, b, tol);
    const double root = wrap_position(0.5 * (lo + hi), params.length);
    if (fa < 0.0) {
      cp.x_max = root;
      have_max = true;
    } else {
      cp.x_min = root;
      have_min = true;
    }
  }
  if (!have_max || !have_min) {
    throw std::runtime_error("critical_points: potential extrema not found");
  }
  return cp;
}

SystemState uniform_state(std::size_t n, const RatchetParams& params, Rng& rng) {
  if (n == 0) throw std::invalid_argument("uniform_state: N must be >= 1");
  SystemState s;
  s.x.resize(n);
  for (double& xi : s.x) xi = rng.uniform(0.0, params.length);
  return s;
}

void featurize_into(std::span<const double> x, const RatchetParams& params,
                    std::span<double> out) {
  if (out.size() != 2 * x.size()) throw std::invalid_argument("featurize_into: output size must be 2N");
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double theta = kTwoPi * wrap_position(x[i], params.length) / params.length;
    out[2 * i] = std::cos(theta);
    out[2 * i + 1] = std::sin(theta);
  }
}

Features featurize(const SystemState& state, const RatchetParams& params) {
  Features f;
  f.n = state.size();
  f.psi.resize(2 * f.n);
  featurize_into(state.x, params, f.psi);
  return f;
}

double step(SystemState& state, Alpha alpha, const RatchetParams& params, Rng& rng) {
  return advance(state, alpha, params, [&rng](std::size_t) { return rng.normal(); });
}

double step(SystemState& state, Alpha alpha, const RatchetParams& params,
            std::span<const double> noise) {
  if (noise.size() != state.size()) throw std::invalid_argument("step: need one noise draw per particle");
  return advance(state, alpha, params, [noise](std::size_t i) { return noise[i]; });
}

std::size_t delay_steps(double tau, double dt) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw std::invalid_argument("delay: tau must be >= 0");
  const double d = std::round(tau / dt);
  if (std::abs(tau - d * dt) > 1e-9) {
    throw std::invalid_argument("delay: tau is not an integer multiple of dt");
  }
  return static_cast<std::size_t>(d);
}

DelayedEnv::DelayedEnv(const RatchetParams& params, SystemState initial, double tau)
    : params_(params), state_(std::move(initial)), tau_(tau), delay_(delay_steps(tau, params.dt)),
      queue_(delay_, Alpha{0}) {
  params_.validate();
  if (state_.size() == 0) throw std::invalid_argument("DelayedEnv: empty state");
}

double DelayedEnv::step(Alpha new_alpha, Rng& rng) {
  if (new_alpha > 1) throw std::invalid_argument("DelayedEnv::step: alpha must be 0 or 1");
  if (delay_ == 0) return ratchet::step(state_, new_alpha, params_, rng);
  const Alpha applied = queue_.front();
  queue_.erase(queue_.begin());
  queue_.push_back(new_alpha);
  return ratchet::step(state_, applied, params_, rng);
}

}  // namespace ratchet
