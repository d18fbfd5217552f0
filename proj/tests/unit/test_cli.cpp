#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "rrl/relation/relation.hpp"
#include "rrl/synth/dataset.hpp"

using namespace rrl;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string("\"") + RRL_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rrl_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("relmat on perfectly coupled labels") {
  const fs::path dir = scratch("relmat");
  LabelMatrix y(4, 3);
  y << 1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0, 1;
  write_labels_csv(dir / "labels.csv", {"a", "b", "c", "d"}, y);
  REQUIRE(run("relmat --labels " + (dir / "labels.csv").string() + " --out " + (dir / "m.csv").string()) == 0);
  const RelationMatrix m = read_relation_csv(dir / "m.csv");
  CHECK(m.m(0, 1) == 1.0);
  CHECK(m.m(0, 2) == 0.0);
  fs::remove_all(dir);
}

TEST_CASE("sinkhorn-check passes on K=3") {
  const fs::path dir = scratch("sinkhorn");
  CHECK(run("sinkhorn-check --k 3 --epsilon 0.01 --trials 20 --seed 1 --out " + (dir / "r.csv").string()) == 0);
  CHECK(fs::exists(dir / "r.csv"));
  fs::remove_all(dir);
}

TEST_CASE("pretrain is reproducible from the command line") {
  const fs::path dir = scratch("pretrain");
  const std::string data = (dir / "data").string();
  REQUIRE(run("gen-data --out " + data + " --set train_subjects=1 --set test_subjects=1 --set per_subject=4") == 0);
  CHECK(fs::exists(dir / "data" / "train" / "labels.csv"));
  CHECK(fs::exists(dir / "data" / "config.txt"));
  const std::string tiny =
      " --data " + data + "/train --steps 2 --seed 7 --set batch_size=2 --set embed_dim=8 --set refiner_channels=8"
      " --set head_hidden=8 --set z_dim=4";
  REQUIRE(run("pretrain --out " + (dir / "a").string() + tiny) == 0);
  REQUIRE(run("pretrain --out " + (dir / "b").string() + tiny) == 0);
  CHECK(slurp(dir / "a" / "loss_log.csv") == slurp(dir / "b" / "loss_log.csv"));
  CHECK(slurp(dir / "a" / "config.txt") == slurp(dir / "b" / "config.txt"));
  for (const auto& e : fs::directory_iterator(dir / "a" / "checkpoint")) {
    CAPTURE(e.path());
    CHECK(slurp(e.path()) == slurp(dir / "b" / "checkpoint" / e.path().filename()));
  }

  const std::string ckpt = (dir / "a" / "checkpoint").string();
  const std::string head = (dir / "head.json").string();
  REQUIRE(run("probe --checkpoint " + ckpt + " --data " + data + "/train --out " + head +
              " --set probe_epochs=2") == 0);
  CHECK(fs::exists(head + ".config.txt"));
  REQUIRE(run("eval --checkpoint " + ckpt + " --probe " + head + " --data " + data + "/test --out " +
              (dir / "report.csv").string()) == 0);
  CHECK(slurp(dir / "report.csv").find("average,") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("exit codes") {
  CHECK(run("--help") == 0);
  CHECK(run("relmat --labels x.csv --out y.csv --bogus") == 1);
  CHECK(run("relmat --labels /nonexistent/labels.csv --out /tmp/rrl_unused.csv") == 2);
  CHECK(run("pretrain --data /nonexistent --out /tmp/rrl_unused --set no_such_key=1") == 1);
  CHECK(run("sinkhorn-check --k 7") == 1);
}
