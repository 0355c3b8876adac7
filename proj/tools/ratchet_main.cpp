// Command-line front end: one subcommand per experiment type.

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <map>
#include <optional>

#include "ratchet/commands.hpp"
#include "ratchet/parallel.hpp"
#include "ratchet/version.hpp"

namespace {

using namespace ratchet;

struct SubcommandArgs {
  Command command;
  CLI::App* app = nullptr;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::vector<std::string> runs;
  CLI::Option* runs_positional = nullptr;
  std::string config_file;
  std::optional<unsigned> threads;
};

std::string_view description(Command c) {
  switch (c) {
    case Command::simulate: return "Evaluate a baseline policy";
    case Command::train: return "Train policy and value networks with PPO";
    case Command::eval: return "Evaluate a trained checkpoint";
    case Command::sweep: return "Evaluate a policy over a grid of N and tau";
    case Command::boundary: return "Tabulate p_on over positions for N = 1 or 2";
    case Command::trace: return "Record one deterministic rollout";
    case Command::best_of: return "Pick the best of several training runs";
  }
  return "";
}

void add_subcommand(CLI::App& app, SubcommandArgs& args) {
  args.app = app.add_subcommand(std::string(to_string(args.command)), std::string(description(args.command)));
  args.app->add_option("--config", args.config_file, "key=value file (e.g. a previous manifest.txt)");
  args.app->add_option("--threads", args.threads, "worker threads (default: $RATCHET_THREADS or all cores)");
  for (const auto& key : command_keys(args.command)) {
    std::string name(key.name);
    std::string flags = "--" + name;
    std::string dashed = name;
    std::replace(dashed.begin(), dashed.end(), '_', '-');
    if (dashed != name) flags += ",--" + dashed;
    std::string help(key.help);
    if (!key.default_value.empty()) help += " [" + std::string(key.default_value) + "]";
    args.options[name] = args.app->add_option(flags, args.values[name], help);
  }
  if (args.command == Command::best_of) {
    args.runs_positional = args.app->add_option("run_dirs", args.runs, "run directories or their parent");
  }
}

KeyValues flag_values(const SubcommandArgs& args) {
  KeyValues out;
  for (const auto& key : command_keys(args.command)) {
    const std::string name(key.name);
    if (args.options.at(name)->count() > 0) out.emplace_back(name, args.values.at(name));
  }
  if (args.runs_positional && args.runs_positional->count() > 0) {
    std::string joined;
    for (const auto& r : args.runs) joined += (joined.empty() ? "" : ",") + r;
    out.emplace_back("runs", joined);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feedback control of a collective flashing ratchet"};
  app.set_version_flag("--version", std::string("ratchet ") + kVersion);
  app.require_subcommand(1);

  std::vector<SubcommandArgs> subs;
  for (Command c : all_commands()) {
    subs.emplace_back();
    subs.back().command = c;
  }
  for (auto& s : subs) add_subcommand(app, s);

  std::string replay_source;
  std::string replay_out;
  std::optional<unsigned> replay_threads;
  CLI::App* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("manifest", replay_source, "manifest.txt or the directory holding it")->required();
  replay->add_option("--out", replay_out, "output directory (default: the recorded one, made unique)");
  replay->add_option("--threads", replay_threads, "worker threads");

  CLI11_PARSE(app, argc, argv);

  try {
    if (replay->parsed()) {
      RunConfig cfg = load_manifest(replay_source);
      if (!replay_out.empty()) cfg.set("out", replay_out);
      const auto dir = run_command(cfg, {resolve_threads(replay_threads), &std::cerr});
      std::cout << dir.string() << '\n';
      return 0;
    }
    for (auto& s : subs) {
      if (!s.app->parsed()) continue;
      const KeyValues file = s.config_file.empty() ? KeyValues{} : read_key_values(s.config_file);
      const RunConfig cfg = parse_config(s.command, file, flag_values(s));
      const auto dir = run_command(cfg, {resolve_threads(s.threads), &std::cerr});
      std::cout << dir.string() << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
