#include "ratchet/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ratchet {
namespace {

enum Mask : unsigned {
  kSim = 1u << 0,
  kTrain = 1u << 1,
  kEval = 1u << 2,
  kSweep = 1u << 3,
  kBoundary = 1u << 4,
  kTrace = 1u << 5,
  kBest = 1u << 6,
  kAll = 0x7f,
};

enum class Kind {
  real,
  positive,
  nonneg,
  unit,       // (0, 1]
  count,      // >= 1
  count0,     // >= 0
  seed,
  text,
  potential,
  arch,
  policy,
  real_list,
  count_list,
  path_list,
  real_auto,
  count_auto,
  nonneg_auto,
};

struct KeySpec {
  std::string_view name;
  Kind kind;
  unsigned commands;
  std::string_view default_value;
  std::string_view help;
};

// Registry order is manifest order.
constexpr KeySpec kKeys[] = {
    {"potential", Kind::potential, kAll, "smooth", "potential shape: smooth or sawtooth"},
    {"u0", Kind::positive, kAll, "5", "potential amplitude (kT)"},
    {"length", Kind::positive, kAll, "1", "spatial period L"},
    {"kt", Kind::positive, kAll, "1", "thermal energy kT"},
    {"diffusion", Kind::positive, kAll, "1", "diffusion coefficient D"},
    {"dt", Kind::positive, kAll, "0.001", "integration time step"},
    {"policy", Kind::policy, kSim | kSweep | kBoundary | kTrace, "",
     "baseline: periodic, greedy, threshold, mnd, off or on"},
    {"checkpoint", Kind::text, kEval | kSweep | kBoundary | kTrace, "", "checkpoint file"},
    {"runs", Kind::path_list, kBest, "", "comma-separated run directories (or one parent directory)"},
    {"arch", Kind::arch, kTrain, "deepsets", "network architecture: mlp, deepsets or rnn"},
    {"n", Kind::count_auto, kSim | kTrain | kEval | kBoundary | kTrace, "1", "number of particles"},
    {"tau", Kind::nonneg_auto, kSim | kTrain | kEval | kBoundary | kTrace, "0", "feedback delay"},
    {"n_list", Kind::count_list, kSweep, "1", "comma-separated particle counts"},
    {"tau_list", Kind::real_list, kSweep, "0", "comma-separated delays"},
    {"seed", Kind::seed, kAll, "0", "master random seed"},
    {"seeds", Kind::count, kTrain, "1", "number of training runs (seeds seed, seed+1, ...)"},
    {"duration", Kind::positive, kSim | kEval | kSweep | kTrace | kBest, "50", "evaluation time per trajectory"},
    {"ensemble", Kind::count, kSim | kEval | kSweep | kBest, "32", "trajectories per evaluation"},
    {"burn_in", Kind::nonneg, kSim | kEval | kSweep | kBest, "0", "unmeasured time before the window"},
    {"resolution", Kind::count, kBoundary, "200", "grid points per axis"},
    {"t_on", Kind::positive, kSim | kSweep | kBoundary | kTrace, "0.03", "periodic policy on time"},
    {"t_off", Kind::positive, kSim | kSweep | kBoundary | kTrace, "0.04", "periodic policy off time"},
    {"x0", Kind::real_auto, kSim | kSweep | kBoundary | kTrace, "auto", "MND offset, or auto for a grid search"},
    {"u_on", Kind::real_auto, kSim | kSweep | kBoundary | kTrace, "auto", "threshold on level, or auto"},
    {"u_off", Kind::real_auto, kSim | kSweep | kBoundary | kTrace, "auto", "threshold off level, or auto"},
    {"search_ensemble", Kind::count, kSim | kSweep | kBoundary | kTrace, "16", "ensemble used by auto searches"},
    {"search_duration", Kind::positive, kSim | kSweep | kBoundary | kTrace, "20", "duration used by auto searches"},
    {"hidden", Kind::count, kTrain, "64", "hidden width H"},
    {"embed", Kind::count, kTrain, "16", "embedding width E"},
    {"epochs", Kind::count, kTrain, "400", "training epochs"},
    {"traj_len", Kind::count, kTrain, "2000", "steps per trajectory T"},
    {"trajectories", Kind::count_auto, kTrain, "auto", "trajectories per epoch M"},
    {"batch", Kind::count_auto, kTrain, "auto", "mini-batch size B"},
    {"gamma", Kind::unit, kTrain, "0.999", "discount factor"},
    {"lambda", Kind::unit, kTrain, "0.95", "GAE parameter"},
    {"clip_eps", Kind::positive, kTrain, "0.2", "clipping parameter"},
    {"d_targ", Kind::positive, kTrain, "0.01", "KL target for early stopping"},
    {"iters_pi", Kind::count, kTrain, "625", "policy steps per epoch"},
    {"iters_v", Kind::count, kTrain, "625", "value steps per epoch"},
    {"lr_pi", Kind::nonneg, kTrain, "0.0003", "policy learning rate"},
    {"lr_v", Kind::nonneg, kTrain, "0.001", "value learning rate"},
    {"out", Kind::text, kAll, "", "output directory"},
};

unsigned mask_of(Command c) { return 1u << static_cast<unsigned>(c); }

const KeySpec* find_spec(std::string_view key) {
  for (const auto& spec : kKeys) {
    if (spec.name == key) return &spec;
  }
  return nullptr;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.emplace_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void bad(std::string_view key, const std::string& why) { throw ConfigError(std::string(key), why); }

double parse_real(std::string_view key, std::string_view s) {
  double v = 0.0;
  const auto t = trim(s);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
    bad(key, "expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

std::uint64_t parse_unsigned(std::string_view key, std::string_view s) {
  std::uint64_t v = 0;
  const auto t = trim(s);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    bad(key, "expected a non-negative integer, got '" + std::string(s) + "'");
  }
  return v;
}

void check_value(const KeySpec& spec, const std::string& value) {
  const auto key = spec.name;
  const bool is_auto = value == "auto";
  switch (spec.kind) {
    case Kind::real: parse_real(key, value); break;
    case Kind::positive:
      if (!(parse_real(key, value) > 0.0)) bad(key, "must be positive, got " + value);
      break;
    case Kind::nonneg:
      if (!(parse_real(key, value) >= 0.0)) bad(key, "must be non-negative, got " + value);
      break;
    case Kind::unit: {
      const double v = parse_real(key, value);
      if (!(v > 0.0 && v <= 1.0)) bad(key, "must lie in (0, 1], got " + value);
      break;
    }
    case Kind::count:
      if (parse_unsigned(key, value) < 1) bad(key, "must be at least 1, got " + value);
      break;
    case Kind::count0:
    case Kind::seed: parse_unsigned(key, value); break;
    case Kind::text: break;
    case Kind::potential:
      try {
        parse_potential_kind(value);
      } catch (const std::exception& e) {
        bad(key, e.what());
      }
      break;
    case Kind::arch:
      try {
        parse_arch_kind(value);
      } catch (const std::exception& e) {
        bad(key, e.what());
      }
      break;
    case Kind::policy: {
      static constexpr std::string_view names[] = {"", "periodic", "greedy", "threshold", "mnd", "off", "on"};
      if (std::find(std::begin(names), std::end(names), value) == std::end(names)) {
        bad(key, "unknown policy '" + value + "' (periodic, greedy, threshold, mnd, off, on)");
      }
      break;
    }
    case Kind::real_list: {
      const auto items = split_list(value);
      if (items.empty()) bad(key, "list must not be empty");
      for (const auto& item : items) {
        if (!(parse_real(key, item) >= 0.0)) bad(key, "entries must be non-negative, got " + item);
      }
      break;
    }
    case Kind::count_list: {
      const auto items = split_list(value);
      if (items.empty()) bad(key, "list must not be empty");
      for (const auto& item : items) {
        if (parse_unsigned(key, item) < 1) bad(key, "entries must be at least 1, got " + item);
      }
      break;
    }
    case Kind::path_list: break;
    case Kind::real_auto:
      if (!is_auto) parse_real(key, value);
      break;
    case Kind::count_auto:
      if (!is_auto && parse_unsigned(key, value) < 1) bad(key, "must be at least 1 or auto, got " + value);
      break;
    case Kind::nonneg_auto:
      if (!is_auto && !(parse_real(key, value) >= 0.0)) bad(key, "must be non-negative or auto, got " + value);
      break;
  }
}

}  // namespace

std::string_view to_string(Command command) {
  switch (command) {
    case Command::simulate: return "simulate";
    case Command::train: return "train";
    case Command::eval: return "eval";
    case Command::sweep: return "sweep";
    case Command::boundary: return "boundary";
    case Command::trace: return "trace";
    case Command::best_of: return "best-of";
  }
  return "?";
}

Command parse_command(std::string_view name) {
  for (Command c : all_commands()) {
    if (to_string(c) == name) return c;
  }
  throw ConfigError("command", "unknown command '" + std::string(name) + "'");
}

std::vector<Command> all_commands() {
  return {Command::simulate, Command::train, Command::eval, Command::sweep,
          Command::boundary, Command::trace, Command::best_of};
}

ConfigError::ConfigError(std::string key, const std::string& message)
    : std::invalid_argument("config key '" + key + "': " + message), key_(std::move(key)) {}

std::vector<KeyInfo> command_keys(Command command) {
  std::vector<KeyInfo> out;
  for (const auto& spec : kKeys) {
    if (!(spec.commands & mask_of(command))) continue;
    std::string_view def = spec.default_value;
    if (spec.name == "n" && command == Command::eval) def = "auto";
    if (spec.name == "tau" && (command == Command::eval || command == Command::boundary || command == Command::trace)) {
      def = "auto";
    }
    if (spec.name == "policy" && command == Command::simulate) def = "periodic";
    if (spec.name == "out") def = command == Command::train ? "runs" : "results";
    out.push_back({spec.name, def, spec.help});
  }
  return out;
}

KeyValues parse_key_values(std::string_view text, std::string_view origin) {
  KeyValues out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const auto line = trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    ++line_no;
    if (!line.empty() && line.front() != '#') {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(std::string(trim(line)), std::string(origin) + ":" + std::to_string(line_no) +
                                                       ": expected key=value");
      }
      out.emplace_back(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

RunConfig::RunConfig(Command command) : command_(command) {
  for (const auto& info : command_keys(command)) values_.emplace_back(info.name, info.default_value);
}

void RunConfig::set(std::string_view key, std::string value) {
  for (auto& [k, v] : values_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  if (find_spec(key)) bad(key, "not used by the '" + std::string(to_string(command_)) + "' command");
  bad(key, "unknown key");
}

bool RunConfig::has(std::string_view key) const {
  return std::any_of(values_.begin(), values_.end(), [&](const auto& kv) { return kv.first == key; });
}

const std::string& RunConfig::raw(std::string_view key) const {
  for (const auto& [k, v] : values_) {
    if (k == key) return v;
  }
  throw std::logic_error("RunConfig: key '" + std::string(key) + "' not available for " +
                         std::string(to_string(command_)));
}

bool RunConfig::is_auto(std::string_view key) const { return raw(key) == "auto"; }
const std::string& RunConfig::text(std::string_view key) const { return raw(key); }
double RunConfig::real(std::string_view key) const { return parse_real(key, raw(key)); }
std::size_t RunConfig::count(std::string_view key) const {
  return static_cast<std::size_t>(parse_unsigned(key, raw(key)));
}
std::uint64_t RunConfig::seed() const { return parse_unsigned("seed", raw("seed")); }

std::vector<double> RunConfig::reals(std::string_view key) const {
  std::vector<double> out;
  for (const auto& item : split_list(raw(key))) out.push_back(parse_real(key, item));
  return out;
}

std::vector<std::size_t> RunConfig::counts(std::string_view key) const {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(raw(key))) out.push_back(static_cast<std::size_t>(parse_unsigned(key, item)));
  return out;
}

std::vector<std::string> RunConfig::texts(std::string_view key) const { return split_list(raw(key)); }

void RunConfig::validate() const {
  for (const auto& [k, v] : values_) check_value(*find_spec(k), v);
  if (has("ensemble") && count("ensemble") < 2) bad("ensemble", "needs at least 2 trajectories for a std");
  if (has("u_on") && !is_auto("u_on") && real("u_on") < 0.0) bad("u_on", "must be >= 0");
  if (has("u_off") && !is_auto("u_off") && real("u_off") > 0.0) bad("u_off", "must be <= 0");
  if (has("out") && text("out").empty()) bad("out", "must not be empty");
  const RatchetParams params = physics();
  auto check_tau = [&](std::string_view key, double tau) {
    try {
      (void)delay_steps(tau, params.dt);
    } catch (const std::exception& e) {
      bad(key, e.what());
    }
  };
  if (has("tau") && !is_auto("tau")) check_tau("tau", real("tau"));
  if (has("tau_list")) {
    for (double tau : reals("tau_list")) check_tau("tau_list", tau);
  }
  switch (command_) {
    case Command::simulate:
      if (text("policy").empty()) bad("policy", "a baseline policy is required");
      break;
    case Command::eval:
      if (text("checkpoint").empty()) bad("checkpoint", "a checkpoint file is required");
      break;
    case Command::sweep:
    case Command::boundary:
    case Command::trace:
      if (text("policy").empty() == text("checkpoint").empty()) {
        bad("policy", "give exactly one of policy or checkpoint");
      }
      break;
    case Command::best_of:
      if (texts("runs").empty()) bad("runs", "at least one run directory is required");
      break;
    case Command::train:
      if (parse_arch_kind(text("arch")) == ArchKind::rnn && !is_auto("tau") && !(real("tau") > 0.0)) {
        bad("tau", "the rnn architecture needs a positive delay");
      }
      if (is_auto("tau")) bad("tau", "must be a number for training");
      if (is_auto("n")) bad("n", "must be a number for training");
      break;
  }
  if (command_ == Command::boundary && !is_auto("n") && count("n") > 2) {
    bad("n", "decision boundaries are only defined for N = 1 or 2");
  }
}

RatchetParams RunConfig::physics() const {
  RatchetParams p;
  p.potential = parse_potential_kind(text("potential"));
  p.u0 = real("u0");
  p.length = real("length");
  p.kt = real("kt");
  p.diffusion = real("diffusion");
  p.dt = real("dt");
  return p;
}

PpoConfig RunConfig::ppo() const {
  PpoConfig cfg = PpoConfig::for_particles(count("n"));
  cfg.traj_len = count("traj_len");
  cfg.epochs = count("epochs");
  cfg.gamma = real("gamma");
  cfg.lambda = real("lambda");
  cfg.clip_eps = real("clip_eps");
  cfg.d_targ = real("d_targ");
  cfg.iters_pi = count("iters_pi");
  cfg.iters_v = count("iters_v");
  cfg.lr_pi = real("lr_pi");
  cfg.lr_v = real("lr_v");
  if (!is_auto("trajectories")) cfg.trajectories = count("trajectories");
  if (!is_auto("batch")) cfg.batch = count("batch");
  return cfg;
}

ArchConfig RunConfig::arch() const {
  ArchConfig a;
  a.kind = parse_arch_kind(text("arch"));
  a.n = count("n");
  a.hidden = count("hidden");
  a.embed = count("embed");
  return a;
}

EvalOptions RunConfig::eval_options(unsigned threads) const {
  EvalOptions opt;
  if (has("n") && !is_auto("n")) opt.n = count("n");
  if (has("tau") && !is_auto("tau")) opt.tau = real("tau");
  if (has("duration")) opt.duration = real("duration");
  if (has("ensemble")) opt.ensemble = count("ensemble");
  if (has("burn_in")) opt.burn_in = real("burn_in");
  opt.seed = seed();
  opt.threads = threads;
  return opt;
}

std::string RunConfig::to_text() const {
  std::string out = "command=" + std::string(to_string(command_)) + "\n";
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

RunConfig parse_config(Command command, const KeyValues& file_values, const KeyValues& flag_values) {
  RunConfig cfg(command);
  for (const auto* source : {&file_values, &flag_values}) {
    for (const auto& [k, v] : *source) {
      if (k == "command") {
        if (v != to_string(command)) {
          throw ConfigError("command", "file is for '" + v + "', not '" + std::string(to_string(command)) + "'");
        }
        continue;
      }
      cfg.set(k, v);
    }
  }
  cfg.validate();
  if (command == Command::train) {
    const BatchShape shape = batch_shape_for(cfg.count("n"));
    if (cfg.is_auto("trajectories")) cfg.set("trajectories", std::to_string(shape.trajectories));
    if (cfg.is_auto("batch")) cfg.set("batch", std::to_string(shape.batch));
  }
  return cfg;
}

}  // namespace ratchet
