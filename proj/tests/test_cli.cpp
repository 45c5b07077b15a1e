#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#ifndef NATPN_CLI_PATH
#error "NATPN_CLI_PATH must be defined by the build"
#endif

namespace {

const std::string kCli = NATPN_CLI_PATH;

int run(const std::string& args) {
  std::string cmd = kCli + " " + args + " >cli_stdout.txt 2>cli_stderr.txt";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

bool exists(const std::string& path) { return std::ifstream(path).good(); }

void write_manifest(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  os << j.dump(2);
}

nlohmann::json toy_manifest() {
  return nlohmann::json{
      {"dataset",
       {{"kind", "toy"}, {"toy", "two_moons"}, {"n", 300}, {"noise", 0.1}, {"split_seed", 1}}},
      {"model",
       {{"family", "categorical"},
        {"latent_dim", 4},
        {"encoder_hidden", {16}},
        {"flow", "radial-4"},
        {"entropy_weight", 1e-5},
        {"budget", "dimension_scaled"}}},
      {"train",
       {{"lr", 5e-3},
        {"batch_size", 128},
        {"max_epochs", 6},
        {"patience", 6},
        {"warmup_steps", 10},
        {"finetune_steps", 5}}},
      {"ood", {{{"kind", "oodom_scale"}, {"scale", 255.0}}}},
      {"seeds", {0}}};
}

}  // namespace

TEST_CASE("train command produces checkpoints and run logs") {
  std::system("rm -rf cli_out_train && mkdir -p cli_out_train");
  write_manifest("cli_manifest.json", toy_manifest());
  int rc = run("train --manifest cli_manifest.json --out cli_out_train --seed 0");
  INFO(slurp("cli_stderr.txt"));
  REQUIRE(rc == 0);
  CHECK(exists("cli_out_train/two_moons_seed0.ckpt"));
  CHECK(exists("cli_out_train/two_moons_seed0_run.json"));
  auto j = nlohmann::json::parse(slurp("cli_out_train/two_moons_seed0_run.json"));
  CHECK(j.contains("best_val_loss"));

  // byte-identical re-run
  std::string first = slurp("cli_out_train/two_moons_seed0.ckpt");
  std::system("rm -rf cli_out_train2 && mkdir -p cli_out_train2");
  REQUIRE(run("train --manifest cli_manifest.json --out cli_out_train2 --seed 0") == 0);
  CHECK(slurp("cli_out_train2/two_moons_seed0.ckpt") == first);
}

TEST_CASE("eval command writes a parsable report") {
  std::system("rm -rf cli_out_eval && mkdir -p cli_out_eval");
  int rc = run(
      "eval --manifest cli_manifest.json --checkpoint cli_out_train/two_moons_seed0.ckpt "
      "--out cli_out_eval");
  INFO(slurp("cli_stderr.txt"));
  REQUIRE(rc == 0);
  REQUIRE(exists("cli_out_eval/eval.json"));
  REQUIRE(exists("cli_out_eval/eval.csv"));
  auto j = nlohmann::json::parse(slurp("cli_out_eval/eval.json"));
  // classification report carries accuracy and brier, plus the OOD block
  const auto& rep = j.is_array() ? j.at(0) : j;
  CHECK(rep.contains("accuracy"));
  CHECK(rep.contains("brier"));
  CHECK(rep.contains("ood"));
  // csv header and row have matching arity
  std::istringstream csv(slurp("cli_out_eval/eval.csv"));
  std::string h, r;
  std::getline(csv, h);
  std::getline(csv, r);
  CHECK(std::count(h.begin(), h.end(), ',') == std::count(r.begin(), r.end(), ','));
}

TEST_CASE("plot command renders uncertainty maps for 2-d data") {
  std::system("rm -rf cli_out_plot && mkdir -p cli_out_plot");
  int rc = run(
      "plot --manifest cli_manifest.json --checkpoint cli_out_train/two_moons_seed0.ckpt "
      "--out cli_out_plot");
  INFO(slurp("cli_stderr.txt"));
  REQUIRE(rc == 0);
  CHECK(exists("cli_out_plot/aleatoric.ppm"));
  CHECK(exists("cli_out_plot/predictive.ppm"));
  CHECK(exists("cli_out_plot/evidence.ppm"));
  REQUIRE(exists("cli_out_plot/grid.csv"));
  std::istringstream csv(slurp("cli_out_plot/grid.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line.find("x0") != std::string::npos);
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 64 * 64);
}

TEST_CASE("ood-report command") {
  std::system("rm -rf cli_out_ood && mkdir -p cli_out_ood");
  int rc = run(
      "ood-report --manifest cli_manifest.json --checkpoint cli_out_train/two_moons_seed0.ckpt "
      "--out cli_out_ood");
  INFO(slurp("cli_stderr.txt"));
  REQUIRE(rc == 0);
  REQUIRE(exists("cli_out_ood/ood_report.json"));
  auto j = nlohmann::json::parse(slurp("cli_out_ood/ood_report.json"));
  CHECK(j.contains("ood"));
}

TEST_CASE("sweep command writes the leaderboard") {
  auto m = toy_manifest();
  m["train"]["max_epochs"] = 3;
  m["train"]["warmup_steps"] = 5;
  m["train"]["finetune_steps"] = 0;
  m["sweep"] = {{"latent_dims", {4}}, {"flows", {"radial-4"}}, {"lambdas", {0.0, 1e-5}},
                {"lrs", {5e-3}}};
  write_manifest("cli_manifest_sweep.json", m);
  std::system("rm -rf cli_out_sweep && mkdir -p cli_out_sweep");
  setenv("NATPN_WORKERS", "2", 1);
  int rc = run("sweep --manifest cli_manifest_sweep.json --out cli_out_sweep --seed 0");
  INFO(slurp("cli_stderr.txt"));
  REQUIRE(rc == 0);
  REQUIRE(exists("cli_out_sweep/sweep.csv"));
  std::istringstream csv(slurp("cli_out_sweep/sweep.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header.find("val_loss") != std::string::npos);
  int rows = 0;
  for (std::string line; std::getline(csv, line);)
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("bad inputs map to exit code 2") {
  CHECK(run("train --manifest no_such_manifest.json --out /tmp") == 2);
  CHECK(run("definitely-not-a-command") == 2);
  CHECK(run("train") == 2);  // missing required --manifest
  // malformed manifest JSON
  {
    std::ofstream os("cli_bad.json");
    os << "{ not json";
  }
  CHECK(run("train --manifest cli_bad.json --out /tmp") == 2);
  std::remove("cli_bad.json");
  // eval on a missing checkpoint
  CHECK(run("eval --manifest cli_manifest.json --checkpoint missing.ckpt --out /tmp") == 2);
}

TEST_CASE("ensemble evaluation accepts multiple checkpoints") {
  // train a second seed, then evaluate the pair as an ensemble
  auto m = toy_manifest();
  m["seeds"] = {0, 1};
  write_manifest("cli_manifest_ens.json", m);
  std::system("rm -rf cli_out_ens && mkdir -p cli_out_ens");
  REQUIRE(run("train --manifest cli_manifest_ens.json --out cli_out_ens") == 0);
  REQUIRE(exists("cli_out_ens/two_moons_seed0.ckpt"));
  REQUIRE(exists("cli_out_ens/two_moons_seed1.ckpt"));
  int rc = run(
      "eval --manifest cli_manifest_ens.json --ensemble "
      "--checkpoints cli_out_ens/two_moons_seed0.ckpt cli_out_ens/two_moons_seed1.ckpt "
      "--out cli_out_ens");
  INFO(slurp("cli_stderr.txt"));
  REQUIRE(rc == 0);
  CHECK(exists("cli_out_ens/eval.json"));
}
