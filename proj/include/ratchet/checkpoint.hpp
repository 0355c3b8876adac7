#pragma once

// Line-oriented text checkpoints:
//
//   RATCHET-CKPT v1
//   arch=deepsets
//   H=64
//   ...
//   param policy.phi1.weight 64x2
//   <row-major values, whitespace separated>
//
// Values are written with 17 significant digits so that a load reproduces
// every parameter bit-exactly.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ratchet/networks.hpp"

namespace ratchet {

inline constexpr std::string_view kCheckpointMagic = "RATCHET-CKPT v1";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct ParamBlock {
  std::string name;
  nn::Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  ArchConfig arch;  // out_dim is that of the policy network
  double tau = 0.0;
  std::uint64_t seed = 0;
  std::int64_t epoch = 0;
  std::vector<ParamBlock> params;

  const ParamBlock* find(std::string_view name) const;
};

inline constexpr std::string_view kPolicyPrefix = "policy";
inline constexpr std::string_view kValuePrefix = "value";

/// Snapshot of a policy and (optionally) a value network.
Checkpoint make_checkpoint(const Network& policy, const Network* value, double tau, std::uint64_t seed,
                           std::int64_t epoch);

bool has_network(const Checkpoint& ckpt, std::string_view prefix);

/// Rebuilds the network stored under `prefix` ("policy" or "value"). Throws
/// CheckpointShapeError if a block is missing or has the wrong shape.
Network restore_network(const Checkpoint& ckpt, std::string_view prefix);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view text);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ratchet
