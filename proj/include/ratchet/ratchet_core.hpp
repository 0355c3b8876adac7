#pragma once

// Physical model of the collective flashing ratchet: N non-interacting
// overdamped Brownian particles in a periodic asymmetric potential that is
// switched on (alpha = 1) or off (alpha = 0) by a controller.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ratchet/rng.hpp"

namespace ratchet {

/// On-off control symbol: 1 switches the potential on, 0 switches it off.
using Alpha = std::uint8_t;

enum class PotentialKind { smooth, sawtooth };

std::string_view to_string(PotentialKind kind);
PotentialKind parse_potential_kind(std::string_view name);

struct RatchetParams {
  double length = 1.0;     // spatial period L
  double u0 = 5.0;         // potential amplitude, units of kT
  double kt = 1.0;
  double diffusion = 1.0;  // D
  double dt = 1e-3;        // time step, units of L^2/D
  PotentialKind potential = PotentialKind::smooth;

  /// eta = kT / D.
  double friction() const { return kt / diffusion; }

  /// Throws std::invalid_argument if any constant is non-positive or
  /// non-finite.
  void validate() const;
};

/// U(x). Smooth: U0 [sin(2 pi x/L) + sin(4 pi x/L)/4]. Sawtooth: rises with
/// slope 3U0/L on [0, L/3], then falls with slope 3U0/(2L) back to 0 at L.
double potential(const RatchetParams& params, double x);

/// F(x) = -dU/dx. For the sawtooth, kinks (x = 0 or L/3 mod L) take the value
/// of the branch to their left.
double force(const RatchetParams& params, double x);

/// Wraps x into [0, L).
double wrap_position(double x, double length);

struct CriticalPoints {
  double x_max = 0.0;  // potential maximum, in [0, L)
  double x_min = 0.0;  // potential minimum, in [0, L)
};

CriticalPoints critical_points(const RatchetParams& params);

struct SystemState {
  std::vector<double> x;  // unwrapped positions
  double t = 0.0;
  std::int64_t steps = 0;

  std::size_t size() const { return x.size(); }
};

/// N particles i.i.d. uniform on [0, L) at t = 0.
SystemState uniform_state(std::size_t n, const RatchetParams& params, Rng& rng);

/// Row i is (cos(2 pi x_i/L), sin(2 pi x_i/L)).
struct Features {
  std::size_t n = 0;
  std::vector<double> psi;  // n x 2, row-major

  double cos_at(std::size_t i) const { return psi[2 * i]; }
  double sin_at(std::size_t i) const { return psi[2 * i + 1]; }
};

Features featurize(const SystemState& state, const RatchetParams& params);

/// Writes the n x 2 feature rows of `x` into `out` (size 2n).
void featurize_into(std::span<const double> x, const RatchetParams& params,
                    std::span<double> out);

/// One Euler-Maruyama step:
///   x_i <- x_i + (dt/eta) alpha F(x_i) + sqrt(2 D dt) g_i.
/// Returns the reward (mean displacement of the step). Throws
/// std::runtime_error if a position becomes non-finite.
double step(SystemState& state, Alpha alpha, const RatchetParams& params, Rng& rng);

/// Same update with caller-supplied standard-normal draws (one per particle).
double step(SystemState& state, Alpha alpha, const RatchetParams& params,
            std::span<const double> noise);

/// Number of queued steps for a feedback delay tau. Throws
/// std::invalid_argument if tau < 0 or tau is not a multiple of dt within 1e-9.
std::size_t delay_steps(double tau, double dt);

/// Environment with a feedback delay of d = tau/dt steps. Each decision is
/// queued and applied d steps later; the queue starts filled with zeros.
class DelayedEnv {
 public:
  DelayedEnv(const RatchetParams& params, SystemState initial, double tau);

  /// Applies the oldest queued action, then enqueues `new_alpha`. With d = 0
  /// this is step(new_alpha). Returns the reward.
  double step(Alpha new_alpha, Rng& rng);

  /// Pending actions, oldest first: (alpha_{t-tau}, ..., alpha_{t-dt}).
  std::span<const Alpha> history() const { return {queue_.data(), queue_.size()}; }

  /// The action that the next step() applies for a given decision.
  Alpha next_applied(Alpha new_alpha) const { return queue_.empty() ? new_alpha : queue_.front(); }

  const SystemState& state() const { return state_; }
  const RatchetParams& params() const { return params_; }
  std::size_t delay() const { return delay_; }
  double tau() const { return tau_; }

 private:
  RatchetParams params_;
  SystemState state_;
  double tau_ = 0.0;
  std::size_t delay_ = 0;
  // Oldest first; always holds delay_ entries.
  std::vector<Alpha> queue_;
};

}  // namespace ratchet
