#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kCli = HDDEMBED_CLI_PATH;

fs::path scratch_root() { return fs::temp_directory_path() / ("hddembed_cli_test_" + std::to_string(::getpid())); }

struct ScratchCleanup : ::testing::Environment {
  void TearDown() override { fs::remove_all(scratch_root()); }
};
const auto* const kCleanup = ::testing::AddGlobalTestEnvironment(new ScratchCleanup);

fs::path scratch(const std::string& name) {
  fs::path p = scratch_root() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args) {
  std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<double>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

const std::string kSmall = " --M 2 --m 3 --ne 300 --D 40 ";

}  // namespace

TEST(CliSynth, GramGmmLayout) {
  auto dir = scratch("synth_layout");
  ASSERT_EQ(run("synth --kind gram-gmm --N 50 --n 2500 --seed 1 --out " + (dir / "ds").string()), 0);
  auto m = read_json(dir / "ds" / "manifest.json");
  EXPECT_EQ(m["N"], 50);
  EXPECT_EQ(m["n"], 2500);
  EXPECT_EQ(m["dim"], 2);
  ASSERT_EQ(m["samples"].size(), 50u);
  EXPECT_EQ(m["pdfs"].size(), 50u);
  for (const auto& f : {m["samples"][0], m["samples"][49]}) {
    auto rows = read_csv(dir / "ds" / f.get<std::string>());
    ASSERT_EQ(rows.size(), 2500u);
    for (const auto& r : rows) {
      ASSERT_EQ(r.size(), 2u);
      EXPECT_GE(r[0], 0.0);
      EXPECT_LE(r[1], 1.0);
    }
  }
}

TEST(CliSynth, ByteIdenticalReruns) {
  auto dir = scratch("synth_rerun");
  ASSERT_EQ(run("synth --N 4 --n 30 --seed 9 --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run("synth --N 4 --n 30 --seed 9 --out " + (dir / "b").string()), 0);
  ASSERT_EQ(run("synth --N 4 --n 30 --seed 10 --out " + (dir / "c").string()), 0);
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), dir / "a");
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / rel)) << rel;
  }
  EXPECT_NE(slurp(dir / "a" / "samples" / "sample_00000.csv"), slurp(dir / "c" / "samples" / "sample_00000.csv"));
}

TEST(CliSynth, MixtureCountTargets) {
  auto dir = scratch("synth_mc");
  ASSERT_EQ(run("synth --kind mixture-count --N 40 --n 20 --seed 3 --out " + dir.string()), 0);
  auto t = read_csv(dir / "targets.csv");
  ASSERT_EQ(t.size(), 40u);
  for (const auto& r : t) {
    EXPECT_EQ(r[0], std::round(r[0]));
    EXPECT_GE(r[0], 1.0);
    EXPECT_LE(r[0], 10.0);
  }
}

TEST(CliEmbed, ShapeNormAndReport) {
  auto dir = scratch("embed_shape");
  ASSERT_EQ(run("synth --N 5 --n 80 --seed 2 --out " + (dir / "ds").string()), 0);
  ASSERT_EQ(run("embed " + (dir / "ds").string() + kSmall + "--out " + (dir / "f.csv").string()), 0);
  auto rows = read_csv(dir / "f.csv");
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& r : rows) {
    ASSERT_EQ(r.size(), 40u);
    double sq = 0.0;
    for (double v : r) sq += v * v;
    EXPECT_NEAR(sq, 1.0, 1e-12);
  }
  auto rep = read_json(dir / "f.report.json");
  EXPECT_EQ(rep["metrics"]["rows"], 5);
  EXPECT_TRUE(std::isfinite(rep["metrics"]["sigma_k"].get<double>()));
  EXPECT_GT(rep["metrics"]["sigma_k"].get<double>(), 0.0);
  EXPECT_EQ(rep["metrics"]["imaginary_blocks_zero"], false);
  EXPECT_TRUE(fs::exists(dir / "f.report.timings.json"));
}

TEST(CliEmbed, SameSeedSameBytesAcrossThreadCounts) {
  auto dir = scratch("embed_det");
  ASSERT_EQ(run("synth --N 6 --n 60 --seed 4 --out " + (dir / "ds").string()), 0);
  const std::string base = "embed " + (dir / "ds").string() + kSmall + "--seed 5 ";
  ASSERT_EQ(run("--threads 1 " + base + "--out " + (dir / "a.csv").string()), 0);
  ASSERT_EQ(run("--threads 3 " + base + "--out " + (dir / "b.csv").string()), 0);
  ASSERT_EQ(run("--threads 1 embed " + (dir / "ds").string() + kSmall + "--seed 6 --out " + (dir / "c.csv").string()),
            0);
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  EXPECT_NE(slurp(dir / "a.csv"), slurp(dir / "c.csv"));
}

TEST(CliEmbed, HellingerHasZeroImaginaryBlocks) {
  auto dir = scratch("embed_h2");
  ASSERT_EQ(run("synth --N 3 --n 60 --seed 5 --out " + (dir / "ds").string()), 0);
  ASSERT_EQ(run("embed " + (dir / "ds").string() + kSmall + "--divergence hellinger --out " +
                (dir / "f.csv").string()),
            0);
  auto rep = read_json(dir / "f.report.json");
  EXPECT_EQ(rep["metrics"]["imaginary_blocks_zero"], true);
  for (double l : rep["metrics"]["lambdas"]) EXPECT_EQ(l, 0.0);
}

TEST(CliExitCodes, UserErrorsGiveTwo) {
  auto dir = scratch("exit_user");
  ASSERT_EQ(run("synth --N 3 --n 40 --seed 1 --out " + (dir / "ds").string()), 0);
  const std::string ds = (dir / "ds").string();
  EXPECT_EQ(run("embed " + (dir / "missing").string() + " --out " + (dir / "x.csv").string()), 2);
  EXPECT_EQ(run("embed " + ds + " --D 7 --out " + (dir / "x.csv").string()), 2);
  EXPECT_EQ(run("embed " + ds + " --sigma -1 --out " + (dir / "x.csv").string()), 2);
  EXPECT_EQ(run("embed " + ds + " --no-such-flag --out " + (dir / "x.csv").string()), 2);
  EXPECT_EQ(run("synth --N 0 --n 5 --out " + (dir / "y").string()), 2);
}

TEST(CliExitCodes, DimensionMismatchBetweenTrainAndTest) {
  auto dir = scratch("exit_dim");
  ASSERT_EQ(run("synth --kind mixture-count --N 12 --n 30 --seed 1 --out " + (dir / "train").string()), 0);
  ASSERT_EQ(run("synth --kind mixture-count --N 6 --n 30 --seed 2 --out " + (dir / "test").string()), 0);
  // rewrite the test set as three-dimensional
  auto m = read_json(dir / "test" / "manifest.json");
  m["dim"] = 3;
  m.erase("pdfs");
  std::ofstream(dir / "test" / "manifest.json") << m.dump(2);
  for (const auto& f : m["samples"]) {
    auto rows = read_csv(dir / "test" / f.get<std::string>());
    std::ofstream out(dir / "test" / f.get<std::string>());
    out.precision(17);
    for (const auto& r : rows) out << r[0] << ',' << r[1] << ",0.5\n";
  }
  EXPECT_EQ(run("regress --train " + (dir / "train").string() + " --test " + (dir / "test").string() + kSmall +
                "--sigma-grid 1"),
            2);
}

TEST(CliExitCodes, NumericalFailureGivesThree) {
  auto dir = scratch("exit_num");
  ASSERT_EQ(run("synth --kind mixture-count --N 12 --n 30 --seed 1 --out " + (dir / "train").string()), 0);
  ASSERT_EQ(run("synth --kind mixture-count --N 6 --n 30 --seed 2 --out " + (dir / "test").string()), 0);
  // unregularized ridge with more features than training rows is singular
  EXPECT_EQ(run("regress --train " + (dir / "train").string() + " --test " + (dir / "test").string() + kSmall +
                "--regs 0 --sigma-grid 1"),
            3);
}

TEST(CliRegress, ReportIsFinite) {
  auto dir = scratch("regress");
  ASSERT_EQ(run("synth --kind mixture-count --N 40 --n 40 --seed 1 --out " + (dir / "train").string()), 0);
  ASSERT_EQ(run("synth --kind mixture-count --N 10 --n 40 --seed 2 --out " + (dir / "test").string()), 0);
  ASSERT_EQ(run("regress --train " + (dir / "train").string() + " --test " + (dir / "test").string() + kSmall +
                "--report " + (dir / "r.json").string()),
            0);
  auto rep = read_json(dir / "r.json");
  const auto& m = rep.contains("metrics") ? rep["metrics"] : rep;
  for (const char* key : {"test_rmse", "val_rmse", "best_reg", "best_sigma_k"}) {
    ASSERT_TRUE(m.contains(key)) << key;
    EXPECT_TRUE(std::isfinite(m[key].get<double>())) << key;
  }
  EXPECT_EQ(m["n_test"], 10);
}
