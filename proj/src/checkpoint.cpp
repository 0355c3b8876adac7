#include "ratchet/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace ratchet {
namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view text, std::string_view what) {
  T value{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw CheckpointFormatError("checkpoint: cannot parse " + std::string(what) + " from '" + std::string(text) + "'");
  }
  return value;
}

nn::Shape parse_shape(std::string_view text) {
  nn::Shape shape;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t x = text.find('x', start);
    const std::string_view part = text.substr(start, x == std::string_view::npos ? text.npos : x - start);
    shape.push_back(parse_number<std::size_t>(part, "shape"));
    if (x == std::string_view::npos) break;
    start = x + 1;
  }
  return shape;
}

std::string join(std::string_view prefix, std::string_view name) {
  return std::string(prefix) + "." + std::string(name);
}

}  // namespace

const ParamBlock* Checkpoint::find(std::string_view name) const {
  for (const auto& p : params) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Checkpoint make_checkpoint(const Network& policy, const Network* value, double tau, std::uint64_t seed,
                           std::int64_t epoch) {
  Checkpoint ckpt;
  ckpt.arch = policy.config();
  ckpt.tau = tau;
  ckpt.seed = seed;
  ckpt.epoch = epoch;
  auto add = [&ckpt](std::string_view prefix, const Network& net) {
    for (const auto& p : net.named_parameters()) {
      ckpt.params.push_back({join(prefix, p.name), p.tensor.shape(),
                             {p.tensor.data().begin(), p.tensor.data().end()}});
    }
  };
  add(kPolicyPrefix, policy);
  if (value) add(kValuePrefix, *value);
  return ckpt;
}

bool has_network(const Checkpoint& ckpt, std::string_view prefix) {
  const std::string head = std::string(prefix) + ".";
  for (const auto& p : ckpt.params) {
    if (p.name.compare(0, head.size(), head) == 0) return true;
  }
  return false;
}

Network restore_network(const Checkpoint& ckpt, std::string_view prefix) {
  ArchConfig cfg = ckpt.arch;
  cfg.out_dim = prefix == kValuePrefix ? 1 : ckpt.arch.out_dim;
  Rng scratch(0);
  Network net(cfg, scratch);
  for (auto& p : net.named_parameters()) {
    const std::string name = join(prefix, p.name);
    const ParamBlock* block = ckpt.find(name);
    if (!block) throw CheckpointShapeError("checkpoint: missing parameter block '" + name + "'");
    if (block->shape != p.tensor.shape()) {
      throw CheckpointShapeError("checkpoint: block '" + name + "' has shape " + nn::shape_string(block->shape) +
                                 ", network expects " + nn::shape_string(p.tensor.shape()));
    }
    std::copy(block->values.begin(), block->values.end(), p.tensor.data().begin());
  }
  return net;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::ostringstream os;
  os << kCheckpointMagic << '\n';
  os << "arch=" << to_string(ckpt.arch.kind) << '\n';
  os << "H=" << ckpt.arch.hidden << '\n';
  os << "E=" << ckpt.arch.embed << '\n';
  os << "out_dim=" << ckpt.arch.out_dim << '\n';
  os << "n=" << ckpt.arch.n << '\n';
  os << "tau=" << format_double(ckpt.tau) << '\n';
  os << "seed=" << ckpt.seed << '\n';
  os << "epoch=" << ckpt.epoch << '\n';
  for (const auto& p : ckpt.params) {
    os << "param " << p.name << ' ';
    for (std::size_t i = 0; i < p.shape.size(); ++i) os << (i ? "x" : "") << p.shape[i];
    os << '\n';
    const std::size_t cols = p.shape.empty() ? 1 : p.shape.back();
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      os << format_double(p.values[i]) << ((i + 1) % cols == 0 ? '\n' : ' ');
    }
    if (p.values.size() % cols != 0) os << '\n';
  }
  return os.str();
}

Checkpoint parse_checkpoint(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw CheckpointTruncatedError("checkpoint: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCheckpointMagic) {
    throw CheckpointVersionError("checkpoint: unsupported header '" + line + "', expected '" +
                                 std::string(kCheckpointMagic) + "'");
  }

  std::map<std::string, std::string> keys;
  std::string token;
  // Header keys run until the first "param" token.
  while (in >> token) {
    if (token == "param") break;
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw CheckpointFormatError("checkpoint: malformed header line '" + token + "'");
    keys[token.substr(0, eq)] = token.substr(eq + 1);
  }
  for (const char* required : {"arch", "H", "E", "out_dim", "n", "tau", "seed", "epoch"}) {
    if (!keys.count(required)) {
      throw CheckpointTruncatedError(std::string("checkpoint: missing header key '") + required + "'");
    }
  }

  Checkpoint ckpt;
  try {
    ckpt.arch.kind = parse_arch_kind(keys["arch"]);
  } catch (const std::invalid_argument& e) {
    throw CheckpointFormatError(std::string("checkpoint: ") + e.what());
  }
  ckpt.arch.hidden = parse_number<std::size_t>(keys["H"], "H");
  ckpt.arch.embed = parse_number<std::size_t>(keys["E"], "E");
  ckpt.arch.out_dim = parse_number<std::size_t>(keys["out_dim"], "out_dim");
  ckpt.arch.n = parse_number<std::size_t>(keys["n"], "n");
  ckpt.tau = parse_number<double>(keys["tau"], "tau");
  ckpt.seed = parse_number<std::uint64_t>(keys["seed"], "seed");
  ckpt.epoch = parse_number<std::int64_t>(keys["epoch"], "epoch");

  if (token != "param") throw CheckpointTruncatedError("checkpoint: no parameter blocks");
  bool more = true;
  while (more) {
    ParamBlock block;
    std::string shape_text;
    if (!(in >> block.name >> shape_text)) throw CheckpointTruncatedError("checkpoint: truncated block header");
    block.shape = parse_shape(shape_text);
    const std::size_t count = nn::shape_numel(block.shape);
    block.values.reserve(count);
    while (block.values.size() < count) {
      if (!(in >> token) || token == "param") {
        throw CheckpointTruncatedError("checkpoint: block '" + block.name + "' has " +
                                       std::to_string(block.values.size()) + " of " + std::to_string(count) +
                                       " values");
      }
      block.values.push_back(parse_number<double>(token, "value"));
    }
    ckpt.params.push_back(std::move(block));
    more = false;
    if (in >> token) {
      if (token != "param") throw CheckpointShapeError("checkpoint: extra values after block '" + ckpt.params.back().name + "'");
      more = true;
    }
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << serialize_checkpoint(ckpt);
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace ratchet
