#include "expadv/cli.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

using expadv::Index;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "expadv");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = expadv::cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_split(const fs::path& dir, const std::string& prefix, const expadv::mnist::Dataset& data) {
  std::ofstream images(dir / (prefix + "-images-idx3-ubyte"), std::ios::binary);
  put_u32(images, 0x803);
  put_u32(images, static_cast<std::uint32_t>(data.size()));
  put_u32(images, 28);
  put_u32(images, 28);
  for (Index i = 0; i < data.size(); ++i)
    for (Index p = 0; p < 784; ++p) images.put(static_cast<char>(std::lround(data.pixels()(i, p) * 255.0)));
  std::ofstream labels(dir / (prefix + "-labels-idx1-ubyte"), std::ios::binary);
  put_u32(labels, 0x801);
  put_u32(labels, static_cast<std::uint32_t>(data.size()));
  for (int l : data.labels()) labels.put(static_cast<char>(l));
}

/// A tiny IDX dataset so the pipeline tests never depend on the real files.
const fs::path& fake_mnist() {
  static const fs::path dir = [] {
    auto d = testing_support::scratch_dir("cli_data");
    write_split(d, "train", testing_support::synthetic_dataset(120, 1));
    write_split(d, "t10k", testing_support::synthetic_dataset(40, 2));
    return d;
  }();
  return dir;
}

std::size_t data_rows(const std::string& csv) {
  return static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) - 1;
}

}  // namespace

TEST(Cli, ShowConfigSucceeds) {
  const auto r = run({"show-config", "--epsilon", "0.2"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("epsilon=0.2\n"), std::string::npos) << r.out;
}

TEST(Cli, MissingDataDirIsUsageError) {
  const char* saved = std::getenv("EXPADV_DATA_DIR");
  const std::string keep = saved ? saved : "";
  unsetenv("EXPADV_DATA_DIR");
  const auto r = run({"train", "--out", testing_support::scratch_dir("cli_nodata").string()});
  if (saved) setenv("EXPADV_DATA_DIR", keep.c_str(), 1);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("data_dir"), std::string::npos) << r.err;
}

TEST(Cli, BadInvocationsExitOne) {
  EXPECT_EQ(run({"show-config", "--no-such-flag", "1"}).code, 1);
  EXPECT_EQ(run({"show-config", "--set", "no_such_key=1"}).code, 1);
  EXPECT_EQ(run({"show-config", "--config", "/nonexistent.cfg"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
}

TEST(Cli, PrecedenceFileThenSetThenFlag) {
  const auto dir = testing_support::scratch_dir("cli_prec");
  std::ofstream(dir / "run.cfg") << "# comment\nepsilon = 0.2\nlambda=3\n";
  const std::string cfg = (dir / "run.cfg").string();
  auto r = run({"show-config", "-c", cfg});
  EXPECT_NE(r.out.find("epsilon=0.2\n"), std::string::npos);
  EXPECT_NE(r.out.find("lambda=3\n"), std::string::npos);
  r = run({"show-config", "-c", cfg, "--set", "epsilon=0.25"});
  EXPECT_NE(r.out.find("epsilon=0.25\n"), std::string::npos);
  r = run({"show-config", "-c", cfg, "--set", "epsilon=0.25", "--epsilon", "0.27"});
  EXPECT_NE(r.out.find("epsilon=0.27\n"), std::string::npos);
  EXPECT_NE(r.out.find("lambda=3\n"), std::string::npos);
}

TEST(Cli, EnvironmentSuppliesDataDir) {
  setenv("EXPADV_DATA_DIR", fake_mnist().c_str(), 1);
  const auto r = run({"show-config"});
  unsetenv("EXPADV_DATA_DIR");
  EXPECT_NE(r.out.find("data_dir=" + fake_mnist().string()), std::string::npos) << r.out;
}

TEST(Cli, TrainSweepPipelineIsDeterministic) {
  const auto out = testing_support::scratch_dir("cli_pipe");
  const std::string data = fake_mnist().string();
  auto train = [&](const std::string& sub) {
    return run({"train", "--data", data, "--out", (out / sub).string(), "--objective", "exp_integral", "--epsilon",
                "0.1", "--k", "2", "--batch-size", "20", "--epoch-eval-limit", "10", "--attack-steps", "2"});
  };
  const auto first = train("a");
  ASSERT_EQ(first.code, 0) << first.err;
  ASSERT_EQ(train("b").code, 0);
  for (const char* f : {"metrics.csv", "epochs.csv", "resolved.cfg"}) {
    EXPECT_TRUE(fs::exists(out / "a" / f)) << f;
    EXPECT_EQ(slurp(out / "a" / f).empty(), false) << f;
  }
  EXPECT_EQ(slurp(out / "a" / "metrics.csv"), slurp(out / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(out / "a" / "epochs.csv"), slurp(out / "b" / "epochs.csv"));
  EXPECT_EQ(data_rows(slurp(out / "a" / "metrics.csv")), 6u);

  auto sweep = [&](const std::string& sub) {
    return run({"sweep", "--data", data, "--model", (out / "a" / "model.ckpt").string(), "--out",
                (out / sub).string(), "--eps", "0:1:0.05", "--limit", "10"});
  };
  const auto s = sweep("s1");
  ASSERT_EQ(s.code, 0) << s.err;
  ASSERT_EQ(sweep("s2").code, 0);
  const std::string csv = slurp(out / "s1" / "sweep.csv");
  EXPECT_EQ(data_rows(csv), 21u);
  EXPECT_EQ(csv, slurp(out / "s2" / "sweep.csv"));
  EXPECT_TRUE(fs::exists(out / "s1" / "sweep.csv.meta"));
}

TEST(Cli, EvalAndMissingCheckpoint) {
  const auto out = testing_support::scratch_dir("cli_eval");
  const std::string data = fake_mnist().string();
  ASSERT_EQ(run({"train", "--data", data, "--out", (out / "m").string(), "--objective", "natural",
                 "--epoch-eval-limit", "-1"})
                .code,
            0);
  const auto e = run({"eval", "--data", data, "--model", (out / "m" / "model.ckpt").string(), "--out",
                      (out / "e").string(), "--epsilon", "0.1", "--attack-steps", "3"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(data_rows(slurp(out / "e" / "eval.csv")), 2u);
  EXPECT_EQ(run({"eval", "--data", data, "--model", (out / "none.ckpt").string(), "--out", (out / "x").string()}).code,
            1);
}

TEST(Cli, ValidateLaplaceWritesCsv) {
  const auto out = testing_support::scratch_dir("cli_laplace");
  const auto r = run({"validate-laplace", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(out / "laplace.csv");
  EXPECT_EQ(csv.rfind("landscape,case,lambda,quadrature,estimate,ratio\n", 0), 0u);
  EXPECT_NE(csv.find("linear_slope_1,boundary,10,"), std::string::npos);
}
