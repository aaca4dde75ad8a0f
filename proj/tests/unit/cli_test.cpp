// cli_test.cpp - config resolution, exit codes and end-to-end subcommands.

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"
#include "tabdpt/cli.hpp"
#include "tabdpt/scalefit.hpp"

using namespace tabdpt;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

Result run_cli(const std::string& sub, const fs::path& out_dir, const std::vector<std::string>& sets) {
  std::vector<std::string> args{sub, "--set", "out_dir=" + out_dir.string()};
  for (const auto& s : sets) {
    args.push_back("--set");
    args.push_back(s);
  }
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

}  // namespace

TEST(Config, ParseFlatFile) {
  const auto c = cli::parse_config("# comment\nseed = 4\n\nsteps=10  # trailing\n");
  EXPECT_EQ(c.at("seed"), "4");
  EXPECT_EQ(c.at("steps"), "10");
  EXPECT_THROW(cli::parse_config("a=1\na=2\n"), Error);
}

TEST(Config, OverridesWinAndUnknownKeysFail) {
  const auto c = cli::resolve_config("eval", {{"bootstrap_iters", "10"}}, {{"bootstrap_iters", "20"}});
  EXPECT_EQ(c.at("bootstrap_iters"), "20");
  EXPECT_THROW(cli::resolve_config("eval", {}, {{"no_such_key", "1"}}), Error);
}

TEST(ExitCodes, KindsMapToCodes) {
  EXPECT_EQ(cli::exit_code(ErrorKind::config), cli::kExitConfig);
  EXPECT_EQ(cli::exit_code(ErrorKind::data), cli::kExitData);
  EXPECT_EQ(cli::exit_code(ErrorKind::numeric), cli::kExitNumeric);
}

TEST(Run, UnknownKeyIsConfigError) {
  const auto dir = tabdpt::testing::scratch_dir("cli_unknown");
  const auto r = run_cli("eval", dir, {"bogus=1"});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_EQ(r.err.rfind("error[config]:", 0), 0u);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST(Run, UnknownSubcommand) {
  std::ostringstream out, err;
  EXPECT_EQ(cli::run({"frobnicate"}, out, err), cli::kExitConfig);
}

class CliRuns : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = tabdpt::testing::scratch_dir("cli_runs");
    tabdpt::testing::spit(dir_ / "train.csv", synthetic::to_csv(synthetic::two_gaussian(40, 3, 1)));
    tabdpt::testing::spit(dir_ / "test.csv", synthetic::to_csv(synthetic::two_gaussian(20, 3, 2)));
    tabdpt::testing::spit(dir_ / "corpus.csv", synthetic::to_csv(synthetic::desk_corpus(3, 120)[0]));
  }
  fs::path dir_;
};

TEST_F(CliRuns, TrainZeroStepsIsInit) {
  const auto out = dir_ / "train0";
  const auto r = run_cli("train", out, {"corpus=" + (dir_ / "corpus.csv").string(), "steps=0", "seed=3", "dim=16"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ck = load_checkpoint(out / "model.ckpt");
  EXPECT_EQ(ck.train_step, 0u);
  const auto init = init_params<float>(ck.config, 3);
  const auto a = ck.params.tensors();
  const auto b = init.tensors();
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].size; ++i) ASSERT_EQ(a[t].data[i], b[t].data[i]) << a[t].name;
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
}

TEST_F(CliRuns, PredictContextTooLargeRollsBack) {
  const auto out = dir_ / "predict";
  ASSERT_EQ(run_cli("train", dir_ / "m", {"corpus=" + (dir_ / "corpus.csv").string(), "steps=0", "dim=16"}).code, 0);
  fs::create_directories(out);
  tabdpt::testing::spit(out / "keep.txt", "unrelated");
  const auto r = run_cli("predict", out,
                         {"checkpoint=" + (dir_ / "m" / "model.ckpt").string(), "train_table=" + (dir_ / "train.csv").string(),
                          "test_table=" + (dir_ / "test.csv").string(), "target=label", "context_size=500"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("context_size"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("N_train"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(out / "predictions.csv"));
  EXPECT_FALSE(fs::exists(out / "manifest.json"));
  EXPECT_EQ(tabdpt::testing::slurp(out / "keep.txt"), "unrelated");
}

TEST_F(CliRuns, MissingInputIsReported) {
  const auto r = run_cli("scaling-fit", dir_ / "sf", {"points=" + (dir_ / "absent.csv").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(r.err.rfind("error[", 0), 0u);
}

TEST_F(CliRuns, ScalingFitRecoversTruth) {
  const ScalingFit truth{2, 3, 0.5, 0.4, 0.35, 0};
  std::ostringstream pts;
  pts.precision(17);
  pts << "P,D,loss\n";
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const double P = std::pow(10.0, 3.0 + 1.5 * i), D = std::pow(10.0, 4.0 + 1.5 * j);
      pts << P << ',' << D << ',' << predict_loss(truth, P, D) << '\n';
    }
  tabdpt::testing::spit(dir_ / "points.csv", pts.str());
  const auto out = dir_ / "sf";
  const auto r = run_cli("scaling-fit", out, {"points=" + (dir_ / "points.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(tabdpt::testing::slurp(out / "fit.csv"));
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "A,B_coef,E_irr,alpha,beta,objective");
  std::vector<double> v;
  std::istringstream rs(row);
  for (std::string cell; std::getline(rs, cell, ',');) v.push_back(std::stod(cell));
  const double want[] = {2, 3, 0.5, 0.4, 0.35};
  for (int k = 0; k < 5; ++k) EXPECT_LT(std::abs(v[k] - want[k]) / want[k], 0.05) << header;
  EXPECT_TRUE(fs::exists(out / "excess.csv"));
}
