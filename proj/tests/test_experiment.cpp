#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "seven/error.hpp"
#include "seven/experiment.hpp"
#include "support.hpp"

namespace seven {
namespace {

namespace fs = std::filesystem;

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

class ExperimentTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("seven_exp_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  RunConfig base() const {
    RunConfig c = parse_config_text(
        "method = seven_pre\nsparsity = 0.5\nT = 6\nK = 4\nseeds = 1,2\n"
        "layers = 1\nd_model = 8\nheads = 2\nffn_dim = 8\nseq_len = 4\n"
        "train_size = 32\nval_size = 16\nbatch_size = 8\n");
    c.output_dir = dir_.string();
    return c;
  }

  fs::path dir_;
};

TEST(Params, RoundTripIsExact) {
  TransformerConfig c;
  c.layers = 1;
  c.d_model = 8;
  c.heads = 2;
  const ParamStore p = init_model(c, 3);
  std::stringstream buf;
  write_params(buf, p);
  EXPECT_EQ(read_params(buf), p);
  std::istringstream bad("SEVENPARAMS v1 1\nw 1 1 2 0x1p+0\n");
  EXPECT_THROW(read_params(bad), IoError);
}

TEST_F(ExperimentTest, RunWritesArtifactsAndTable) {
  const RunConfig c = base();
  const auto outcomes = run_jobs(expand_seeds(c), 1);
  ASSERT_EQ(outcomes.size(), 2u);
  for (const auto& o : outcomes) {
    EXPECT_TRUE(o.ok) << o.error;
    for (const char* f : {run_files::config, run_files::metrics, run_files::mask,
                          run_files::initial, run_files::final_params, run_files::events})
      EXPECT_TRUE(fs::exists(o.dir / f)) << f;
    EXPECT_EQ(parse_config(o.dir / run_files::config), o.config);
    const auto records = read_metrics(o.dir / run_files::metrics);
    EXPECT_EQ(records.size(), 7u);
    for (std::size_t i = 1; i < records.size(); ++i)
      EXPECT_GT(records[i].iteration, records[i - 1].iteration);
  }
  write_summaries(dir_, outcomes);
  const std::string table = read_file(dir_ / "table.tsv");
  EXPECT_EQ(count_lines(table), 2u);
  EXPECT_NE(table.find("seven_pre\tseven\t0.5\t0\t2\t0\t"), std::string::npos);
  EXPECT_EQ(count_lines(read_file(dir_ / "plot.tsv")), 2u);
}

TEST_F(ExperimentTest, TableNumbersComeFromRecords) {
  const auto outcomes = run_jobs(expand_seeds(base()), 1);
  double sum = 0.0;
  for (const auto& o : outcomes) {
    const auto records = read_metrics(o.dir / run_files::metrics);
    sum += records.back().eval_accuracy;
  }
  std::ostringstream table;
  write_table(table, outcomes);
  char expected[32];
  std::snprintf(expected, sizeof expected, "%.4f", sum / 2.0);
  EXPECT_NE(table.str().find(expected), std::string::npos) << table.str();
}

TEST_F(ExperimentTest, JobExpansionShapes) {
  RunConfig c = base();
  EXPECT_EQ(variant_jobs(c, {0.6, 0.7}).size(), 16u);
  EXPECT_EQ(resurrection_jobs(c, {0.6, 0.7}).size(), 8u);
  const auto sweep = sweep_jobs(c, {Method::Dense, Method::Random, Method::Snip}, {0.5, 0.7});
  EXPECT_EQ(sweep.size(), 10u);
  EXPECT_THROW(sweep_jobs(c, {}, {0.5}), ConfigError);
}

TEST_F(ExperimentTest, FailedRunsAreMarked) {
  RunConfig c = base();
  c.optimizer.lr = 1e300;
  c.optimizer.kind = OptimizerKind::Sgd;
  c.seeds = {1};
  const auto outcomes = run_jobs(expand_seeds(c), 1);
  ASSERT_EQ(outcomes.size(), 1u);
  EXPECT_FALSE(outcomes[0].ok);
  EXPECT_TRUE(fs::exists(outcomes[0].dir / run_files::failure));
  std::ostringstream table;
  write_table(table, outcomes);
  EXPECT_NE(table.str().find("FAILED"), std::string::npos);
}

TEST_F(ExperimentTest, ReportMarksMissingDiagnostics) {
  const auto outcomes = run_jobs(expand_seeds(base()), 1);
  EXPECT_EQ(report(dir_), 2u);
  const std::string rep = read_file(dir_ / "diagnostics_report.tsv");
  EXPECT_NE(rep.find("not collected"), std::string::npos);

  const RunDiagnostics d = diagnose_run(outcomes[0].dir);
  EXPECT_EQ(d.rgv.size(), 8u);
  EXPECT_EQ(d.grad_change.size(), 7u);
  EXPECT_TRUE(fs::exists(outcomes[0].dir / run_files::diagnostics));
  report(dir_);
  const std::string rep2 = read_file(dir_ / "diagnostics_report.tsv");
  EXPECT_NE(rep2.find("collected\t"), std::string::npos);
  EXPECT_GT(count_lines(read_file(dir_ / "rgv_plot.tsv")), 1u);
}

TEST_F(ExperimentTest, DiagnosticsDoNotTouchSavedParameters) {
  RunConfig c = base();
  c.diagnostics = true;
  c.seeds = {3};
  const auto outcomes = run_jobs(expand_seeds(c), 1);
  ASSERT_TRUE(outcomes[0].ok) << outcomes[0].error;
  const auto path = outcomes[0].dir / run_files::initial;
  const std::string before = read_file(path);
  diagnose_run(outcomes[0].dir);
  EXPECT_EQ(read_file(path), before);
  EXPECT_TRUE(fs::exists(outcomes[0].dir / run_files::diagnostics));
}

TEST_F(ExperimentTest, ParallelWorkersMatchSerial) {
  RunConfig c = base();
  const auto serial = run_jobs(expand_seeds(c), 1);
  c.output_dir = (dir_ / "par").string();
  const auto parallel = run_jobs(expand_seeds(c), 2);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(read_file(serial[i].dir / run_files::mask), read_file(parallel[i].dir / run_files::mask));
    EXPECT_EQ(serial[i].final_record->eval_loss, parallel[i].final_record->eval_loss);
  }
}

TEST(Workers, FromEnvironment) {
  ::setenv("SEVEN_WORKERS", "3", 1);
  EXPECT_EQ(worker_count(), 3u);
  ::setenv("SEVEN_WORKERS", "zero", 1);
  EXPECT_THROW(worker_count(), ConfigError);
  ::unsetenv("SEVEN_WORKERS");
  EXPECT_EQ(worker_count(), 1u);
}

}  // namespace
}  // namespace seven
