#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "ratchet/checkpoint.hpp"
#include "ratchet/config.hpp"

using namespace ratchet;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;  // stdout, trimmed
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(RATCHET_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 512> buf{};
  while (fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  while (!r.out.empty() && (r.out.back() == '\n' || r.out.back() == ' ')) r.out.pop_back();
  return r;
}

fs::path scratch() {
  static const fs::path root = [] {
    const auto dir = fs::temp_directory_path() / "ratchet_test_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
  }();
  return root;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// CSV content without comment lines and without a wall_time_s column.
std::string normalized_csv(const fs::path& file) {
  std::ifstream in(file);
  REQUIRE(in.good());
  std::string line, out;
  long drop = -1;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (header) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] == "wall_time_s") drop = static_cast<long>(i);
      }
      header = false;
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (static_cast<long>(i) != drop) out += cells[i] + ",";
    }
    out += "\n";
  }
  return out;
}

std::string manifest_body(const fs::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.rfind("#", 0) == 0 || line.rfind("out=", 0) == 0) continue;
    out += line + "\n";
  }
  return out;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs a command, replays its manifest into a fresh directory and compares
// every CSV it wrote.
fs::path check_replay(const std::string& args, const std::vector<std::string>& csvs) {
  const Run first = cli(args);
  REQUIRE(first.status == 0);
  const fs::path dir = first.out;
  REQUIRE(fs::exists(dir / "manifest.txt"));
  const fs::path again = dir.string() + "-replay";
  const Run second = cli("replay " + q(dir) + " --out " + q(again));
  REQUIRE(second.status == 0);
  CHECK(fs::path(second.out) == again);
  for (const auto& name : csvs) {
    CAPTURE(name);
    CHECK(normalized_csv(dir / name) == normalized_csv(again / name));
  }
  CHECK(manifest_body(dir) == manifest_body(again));
  return dir;
}

}  // namespace

TEST_CASE("config: defaults, file values and flags") {
  const auto cfg = parse_config(Command::train, {{"n", "64"}}, {});
  CHECK(cfg.count("trajectories") == 16);
  CHECK(cfg.count("batch") == 512);
  const auto one = parse_config(Command::train, {}, {});
  CHECK(one.count("trajectories") == 1024);
  CHECK(one.count("batch") == 4096);
  const auto flagged = parse_config(Command::train, {{"n", "64"}, {"epochs", "3"}}, {{"epochs", "5"}, {"batch", "100"}});
  CHECK(flagged.count("epochs") == 5);
  CHECK(flagged.count("batch") == 100);
  CHECK(flagged.ppo().epochs == 5);
  CHECK(flagged.ppo().gamma == 0.999);
}

TEST_CASE("config: invalid values name the key") {
  try {
    parse_config(Command::train, {}, {{"gamma", "1.5"}}).validate();
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "gamma");
    CHECK(std::string(e.what()).find("gamma") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(Command::train, {{"bogus", "1"}}, {}), ConfigError);
  CHECK_THROWS_AS(parse_config(Command::simulate, {{"epochs", "1"}}, {}), ConfigError);
  CHECK_THROWS_AS(parse_config(Command::simulate, {{"policy", "greedy"}, {"ensemble", "1"}}, {}).validate(),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(Command::simulate, {{"policy", "greedy"}, {"tau", "0.0015"}}, {}).validate(),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(Command::simulate, {{"policy", "teleport"}}, {}).validate(), ConfigError);
  CHECK_THROWS_AS(parse_config(Command::trace, {}, {}).validate(), ConfigError);
  CHECK_THROWS_AS(parse_config(Command::eval, {}, {}).validate(), ConfigError);
  CHECK_THROWS_AS(parse_config(Command::train, {{"arch", "rnn"}}, {}).validate(), ConfigError);
  CHECK_THROWS_AS(parse_config(Command::boundary, {{"policy", "greedy"}, {"n", "3"}}, {}).validate(), ConfigError);
  CHECK_THROWS_AS(parse_config(Command::simulate, {{"command", "train"}, {"policy", "greedy"}}, {}), ConfigError);
}

TEST_CASE("config: key=value parsing and round trip") {
  const auto kv = parse_key_values("# comment\n\n  n = 4 \nseed=7\n", "test");
  REQUIRE(kv.size() == 2);
  CHECK(kv[0] == std::pair<std::string, std::string>{"n", "4"});
  CHECK_THROWS_AS(parse_key_values("no equals sign\n", "test"), ConfigError);
  const auto cfg = parse_config(Command::sweep, {{"policy", "greedy"}, {"n_list", "1,2,4"}, {"tau_list", "0,0.01"}}, {});
  CHECK(cfg.counts("n_list") == std::vector<std::size_t>{1, 2, 4});
  CHECK(cfg.reals("tau_list") == std::vector<double>{0.0, 0.01});
  const auto again = parse_config(Command::sweep, parse_key_values(cfg.to_text(), "text"), {});
  CHECK(again.to_text() == cfg.to_text());
}

TEST_CASE("cli: version and usage errors") {
  const Run v = cli("--version");
  CHECK(v.status == 0);
  CHECK(v.out == "ratchet 1.0.0");
  CHECK(cli("").status != 0);
  CHECK(cli("simulate --bogus 1").status != 0);
  CHECK(cli("simulate --policy greedy --gamma 0.5").status != 0);
  CHECK(cli("train --gamma 1.5 --out " + q(scratch() / "bad")).status == 1);
  CHECK_FALSE(fs::exists(scratch() / "bad"));
  CHECK(cli("eval --checkpoint /nonexistent.ckpt --out " + q(scratch() / "bad")).status == 1);
  CHECK(cli("best-of --out " + q(scratch() / "bad")).status == 1);
}

TEST_CASE("cli: every command is reproducible from its manifest") {
  const fs::path root = scratch();
  const std::string quick = " --duration 0.2 --ensemble 4 --seed 3 --threads 2";

  SUBCASE("simulate") {
    for (const std::string policy : {"periodic", "greedy", "off", "on"}) {
      check_replay("simulate --policy " + policy + " --n 2" + quick + " --out " + q(root / ("sim-" + policy)),
                   {"report.csv"});
    }
    const auto dir = check_replay("simulate --policy mnd --n 2 --search-ensemble 2 --search-duration 0.1" + quick +
                                      " --out " + q(root / "sim-mnd"),
                                  {"report.csv", "search.csv"});
    CHECK(normalized_csv(dir / "search.csv").find("mnd") != std::string::npos);
    check_replay("simulate --policy threshold --u_on 1 --u_off -1 --n 2" + quick + " --out " + q(root / "sim-thr"),
                 {"report.csv"});
  }
  SUBCASE("sweep, boundary and trace") {
    check_replay("sweep --policy greedy --n_list 1,2 --tau_list 0,0.002" + quick + " --out " + q(root / "sweep"),
                 {"sweep.csv"});
    check_replay("boundary --policy greedy --n 2 --resolution 10 --out " + q(root / "boundary"), {"boundary.csv"});
    check_replay("trace --policy periodic --n 2 --duration 0.1 --seed 4 --out " + q(root / "trace"), {"trace.csv"});
  }
  SUBCASE("train, eval and best-of") {
    const std::string small =
        " --n 2 --epochs 2 --traj_len 20 --trajectories 4 --batch 16 --iters_pi 3 --iters_v 3 --hidden 8 --embed 4";
    const Run trained = cli("train --arch deepsets --seeds 2 --seed 10" + small + " --out " + q(root / "train"));
    REQUIRE(trained.status == 0);
    const fs::path run0 = root / "train" / "deepsets-n2-tau0-seed10";
    const fs::path run1 = root / "train" / "deepsets-n2-tau0-seed11";
    REQUIRE(fs::exists(run0 / "final.ckpt"));
    REQUIRE(fs::exists(run1 / "best.ckpt"));
    CHECK(slurp(run0 / "final.ckpt") != slurp(run1 / "final.ckpt"));

    const Run replayed = cli("replay " + q(run0) + " --out " + q(root / "train-replay"));
    REQUIRE(replayed.status == 0);
    const fs::path rerun = root / "train-replay" / "deepsets-n2-tau0-seed10";
    CHECK(slurp(rerun / "final.ckpt") == slurp(run0 / "final.ckpt"));
    CHECK(slurp(rerun / "best.ckpt") == slurp(run0 / "best.ckpt"));
    CHECK(normalized_csv(rerun / "metrics.csv") == normalized_csv(run0 / "metrics.csv"));

    // A deepsets policy trained at N=2 evaluated at N=4 under a delay.
    const auto eval_dir = check_replay("eval --checkpoint " + q(run0 / "final.ckpt") + " --n 4 --tau 0.02" + quick +
                                           " --out " + q(root / "eval"),
                                       {"report.csv"});
    CHECK(normalized_csv(eval_dir / "report.csv").find(",4,0.02,") != std::string::npos);
    check_replay("eval --checkpoint " + q(run0 / "final.ckpt") + " --n auto --tau auto" + quick + " --out " +
                     q(root / "eval-auto"),
                 {"report.csv"});
    check_replay("sweep --checkpoint " + q(run0 / "final.ckpt") + " --n_list 1,3" + quick + " --out " +
                     q(root / "sweep-net"),
                 {"sweep.csv"});
    check_replay("boundary --checkpoint " + q(run0 / "final.ckpt") + " --n 1 --resolution 16 --out " +
                     q(root / "boundary-net"),
                 {"boundary.csv"});

    const auto best = check_replay("best-of " + q(root / "train") + quick + " --out " + q(root / "best"),
                                   {"candidates.csv"});
    const auto candidates = normalized_csv(best / "candidates.csv");
    CHECK(candidates.find("seed10") != std::string::npos);
    CHECK(candidates.find("seed11") != std::string::npos);
    const auto ckpt = load_checkpoint(best / "best.ckpt");
    CHECK((ckpt.seed == 10 || ckpt.seed == 11));

    const Run mlp = cli("train --arch mlp --seed 1" + small + " --out " + q(root / "train-mlp"));
    REQUIRE(mlp.status == 0);
    CHECK(cli("eval --checkpoint " + q(root / "train-mlp" / "mlp-n2-tau0-seed1" / "final.ckpt") + " --n 3" + quick +
              " --out " + q(root / "eval-mlp"))
              .status == 1);
  }
}

TEST_CASE("cli: --config reads a manifest and flags override it") {
  const fs::path root = scratch();
  const Run first = cli("simulate --policy greedy --n 2 --duration 0.1 --ensemble 3 --out " + q(root / "cfg-a"));
  REQUIRE(first.status == 0);
  const Run second = cli("simulate --config " + q(fs::path(first.out) / "manifest.txt") + " --ensemble 5 --out " +
                         q(root / "cfg-b"));
  REQUIRE(second.status == 0);
  const auto body = manifest_body(second.out);
  CHECK(body.find("ensemble=5") != std::string::npos);
  CHECK(body.find("n=2") != std::string::npos);
  CHECK(body.find("policy=greedy") != std::string::npos);
}

TEST_CASE("cli: output directories are never overwritten") {
  const fs::path root = scratch();
  const std::string args = "trace --policy on --duration 0.01 --out " + q(root / "same");
  const Run a = cli(args), b = cli(args);
  CHECK(a.out == (root / "same").string());
  CHECK(b.out == (root / "same-1").string());
}
