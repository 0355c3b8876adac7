#pragma once

// Flat key=value run configuration shared by every subcommand.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ratchet/eval.hpp"
#include "ratchet/networks.hpp"
#include "ratchet/ppo.hpp"
#include "ratchet/ratchet_core.hpp"

namespace ratchet {

enum class Command { simulate, train, eval, sweep, boundary, trace, best_of };

std::string_view to_string(Command command);
Command parse_command(std::string_view name);
std::vector<Command> all_commands();

/// Raised for unknown keys and invalid values; key() names the offender.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& message);
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct KeyInfo {
  std::string_view name;
  std::string_view default_value;
  std::string_view help;
};

/// Keys accepted by `command`, in manifest order.
std::vector<KeyInfo> command_keys(Command command);

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Parses key=value lines. Blank lines and lines starting with '#' are
/// skipped; whitespace around keys and values is trimmed.
KeyValues parse_key_values(std::string_view text, std::string_view origin);
KeyValues read_key_values(const std::filesystem::path& path);

class RunConfig {
 public:
  explicit RunConfig(Command command);

  Command command() const { return command_; }

  /// Throws ConfigError if `key` does not apply to this command.
  void set(std::string_view key, std::string value);
  bool has(std::string_view key) const;
  bool is_auto(std::string_view key) const;

  const std::string& text(std::string_view key) const;
  double real(std::string_view key) const;
  std::size_t count(std::string_view key) const;
  std::uint64_t seed() const;
  std::vector<double> reals(std::string_view key) const;
  std::vector<std::size_t> counts(std::string_view key) const;
  std::vector<std::string> texts(std::string_view key) const;

  /// Checks every value and cross-key invariant; throws ConfigError.
  void validate() const;

  RatchetParams physics() const;
  PpoConfig ppo() const;
  ArchConfig arch() const;
  EvalOptions eval_options(unsigned threads) const;

  /// key=value lines for every applicable key, in registry order.
  std::string to_text() const;

 private:
  const std::string& raw(std::string_view key) const;

  Command command_;
  std::vector<std::pair<std::string, std::string>> values_;
};

/// Defaults, then file values, then flags. A "command" entry in the file must
/// match. (M, B) left at "auto" are replaced by the values for N.
RunConfig parse_config(Command command, const KeyValues& file_values, const KeyValues& flag_values);

}  // namespace ratchet
