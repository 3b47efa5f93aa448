#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "oblivion/checkpoints.hpp"
#include "test_support.hpp"

using oblivion::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string output;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(OBLIVION_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  const int status = ::pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string value_of(const std::string& text, const std::string& key) {
  const std::string needle = key + " = ";
  const auto pos = text.find(needle);
  if (pos == std::string::npos) return "";
  const auto end = text.find('\n', pos);
  return text.substr(pos + needle.size(), end - pos - needle.size());
}

// A trained store in a temp directory, driven through a config file.
struct Workspace {
  TempDir dir{"cli"};
  std::string base;

  Workspace() {
    const auto d = dir.path().string();
    REQUIRE(run("--seed 3 generate --points 300 --classes 3 --dim 4 -o " + d + "/train.csv").code == 0);
    REQUIRE(run("--seed 3 generate --points 150 --classes 3 --dim 4 --sample_seed 9 "
                "--first_id 5000 -o " + d + "/test.csv").code == 0);
    std::ofstream cfg(dir / "run.ini");
    cfg << "dataset = " << d << "/train.csv\nblocks = 8\nseed = 3\nhidden = 16\nepochs = 3\n"
        << "batch_size = 8\nstore = " << d << "/store\n";
    cfg.close();
    base = "--config " + d + "/run.ini";
  }

  fs::path store() const { return dir / "store"; }
  std::string test() const { return (dir / "test.csv").string(); }
};

}  // namespace

TEST_CASE("cli train writes B + 1 snapshots and is reproducible") {
  Workspace ws;
  const auto r = run(ws.base + " train");
  CHECK(r.code == 0);
  CHECK(r.output.find("train_accuracy = ") != std::string::npos);
  for (int i = 0; i <= 8; ++i) CHECK(fs::exists(ws.store() / ("snap_" + std::to_string(i) + ".dobl")));
  CHECK(fs::exists(ws.store() / "manifest.txt"));
  CHECK(fs::exists(ws.store() / "partition.txt"));
  const std::string first = slurp(ws.store() / "manifest.txt");
  REQUIRE(run(ws.base + " train").code == 0);
  CHECK(slurp(ws.store() / "manifest.txt") == first);
}

TEST_CASE("cli train errors") {
  TempDir dir("cli_err");
  const auto missing = (dir / "nope.csv").string();
  const auto r = run("--dataset " + missing + " --store " + (dir / "s").string() + " train");
  CHECK(r.code == 1);
  CHECK(r.output.find(missing) != std::string::npos);
  CHECK(run("--blocks 0 --dataset x.csv --store s train").code == 1);
  CHECK(run("--activation sigmoid --dataset x.csv --store s train").code == 1);
  CHECK(run("").code == 1);
}

TEST_CASE("cli refuses a locked store") {
  Workspace ws;
  REQUIRE(run(ws.base + " train").code == 0);
  oblivion::StoreLock lock(ws.store());
  const auto r = run(ws.base + " unlearn --ids 4");
  CHECK(r.code == 1);
  CHECK(r.output.find("locked") != std::string::npos);
}

TEST_CASE("cli unlearn and evaluate") {
  Workspace ws;
  REQUIRE(run(ws.base + " train").code == 0);
  CHECK(run(ws.base + " evaluate --test " + ws.test()).code == 1);  // nothing unlearned yet

  const auto r = run(ws.base + " --epsilon 0 unlearn --ids 42");
  REQUIRE(r.code == 0);
  const std::string report = slurp(ws.store() / "report.txt");
  CHECK(report == r.output);
  const int d = std::stoi(value_of(report, "d"));
  CHECK(std::stoi(value_of(report, "t")) == 8 - d);
  CHECK(value_of(report, "stitched") == "false");
  CHECK(!value_of(report, "speedup_blocks").empty());
  CHECK(slurp(ws.store() / "delta.csv").rfind("t,delta\n", 0) == 0);
  CHECK(slurp(ws.store() / "fit.csv").rfind("t,h,a,b,p\n", 0) == 0);

  CHECK(run(ws.base + " unlearn --ids 42").code == 1);  // already gone
  CHECK(run(ws.base + " unlearn --ids 999999").code == 1);
  CHECK(run(ws.base + " unlearn").code == 1);

  const auto e = run(ws.base + " evaluate --test " + ws.test());
  REQUIRE(e.code == 0);
  CHECK(value_of(e.output, "consistency") == "1.000000");
  CHECK(fs::exists(ws.store() / "evaluation.txt"));
  CHECK(slurp(ws.store() / "predictions.csv").rfind("id,label,naive,unlearned\n", 0) == 0);

  // Several blocks at once, ids from a file; per-block series files.
  std::ofstream ids(ws.dir / "ids.txt");
  ids << "7\n150 299\n";
  ids.close();
  const auto out = (ws.dir / "multi").string();
  REQUIRE(run(ws.base + " --out " + out + " unlearn --id-file " + (ws.dir / "ids.txt").string()).code == 0);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(out)) {
    files += entry.path().filename().string().rfind("delta_", 0) == 0;
  }
  CHECK(files >= 2);
}

TEST_CASE("cli evaluate without a store") {
  TempDir dir("cli_nostore");
  const auto r = run("--dataset " + (dir / "a.csv").string() + " --store " +
                     (dir / "s").string() + " evaluate --test t.csv");
  CHECK(r.code == 1);
}

TEST_CASE("cli verify-backdoor exit codes") {
  TempDir dir("cli_bd");
  const auto d = dir.path().string();
  REQUIRE(run("--seed 11 generate --points 1000 --classes 10 --dim 8 --sample_seed 12 -o " + d +
              "/clean.csv").code == 0);
  REQUIRE(run("--seed 11 generate --points 500 --classes 10 --dim 8 --sample_seed 13 "
              "--first_id 1000000 -o " + d + "/test.csv").code == 0);
  const std::string base = "--dataset " + d + "/clean.csv --seed 11 --hidden 32 --batch_size 8 --store " +
                           d + "/store verify-backdoor --test " + d + "/test.csv";
  const auto pass = run(base);
  CHECK(pass.code == 0);
  CHECK(pass.output.rfind("verdict = PASS", 0) == 0);
  CHECK(fs::exists(dir / "store" / "verification.txt"));
  CHECK(run(base + " --skip-unlearn").code == 2);
  CHECK(run(base + " --poison-count 0").code == 3);
  CHECK(run(base + " --trigger-indices 8").code == 1);
}

TEST_CASE("cli expected-retention") {
  const auto r = run("--blocks 100 expected-retention --cost 1 --k 1,3 --trials 50");
  CHECK(r.code == 0);
  CHECK(r.output == "per_block_cost,k,expected_fraction,standard_error\n"
                    "1,1,1.000000,0.000000\n1,3,1.000000,0.000000\n");
  CHECK(run("expected-retention --cost 0").code == 1);
}
