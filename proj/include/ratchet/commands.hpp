#pragma once

#include <filesystem>
#include <ostream>

#include "ratchet/config.hpp"

namespace ratchet {

/// `base` if it does not exist yet, otherwise the first free `base-K`.
std::filesystem::path unique_directory(const std::filesystem::path& base);

struct RunContext {
  unsigned threads = 1;
  std::ostream* log = nullptr;  // progress and summaries; may be null
};

/// Executes one subcommand and returns the directory it wrote (for train,
/// the parent holding one directory per seed). Every output directory gets
/// a manifest.txt that can be passed back through --config.
std::filesystem::path run_command(RunConfig cfg, const RunContext& ctx);

/// Reads the manifest in `dir` and returns its config.
RunConfig load_manifest(const std::filesystem::path& dir);

}  // namespace ratchet
