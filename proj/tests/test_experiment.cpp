#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "resadmm/experiment.hpp"

using namespace resadmm;
namespace ex = resadmm::experiment;

namespace {

const char* kBase = R"(# small l1 run
task = l1
data.d = 2
data.n_samples = 200
data.seed = 3
network.N = 3
network.activation = sigmoid
trainer.kind = admm2_pg
trainer.iterations = 30
)";

std::string field_of(const std::string& text) {
  try {
    ex::parse_config_text(text);
  } catch (const ex::ConfigError& e) {
    return e.field;
  }
  return "<no error>";
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("resadmm_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(ConfigParse, PresetsFilledFromTrainer) {
  const auto c = ex::parse_config_text(kBase);
  EXPECT_EQ(c.trainer, ex::Trainer::admm2_pg);
  EXPECT_EQ(c.h2.beta, 1.0);
  EXPECT_EQ(c.h2.mu, 0.1);
  EXPECT_EQ(c.h2.lambda, 1e-3);
  EXPECT_EQ(c.h2.tau.at(5), 1.0);
  const auto c3 = ex::parse_config_text("trainer.kind = admm3_pg\nnetwork.N = 4\n");
  ASSERT_EQ(c3.h3.beta.size(), 4u);
  EXPECT_EQ(c3.h3.beta[3], 100.0);
  EXPECT_EQ(c3.h3.mu, 1.0);
  EXPECT_EQ(c3.h3.lambda, 1e-4);
  EXPECT_EQ(c3.h3.tau.at(0), 10.0);
  const auto ca = ex::parse_config_text("trainer.kind = adam\n");
  EXPECT_EQ(ca.opt.lr, 1e-3);
}

TEST(ConfigParse, ExplicitValuesOverridePreset) {
  const auto c = ex::parse_config_text(std::string(kBase) + "hyper.beta = 2.5\nhyper.tau = 1:3:10\n");
  EXPECT_EQ(c.h2.beta, 2.5);
  EXPECT_EQ(c.h2.tau.at(5), 2.0);
  const auto c3 = ex::parse_config_text("trainer.kind = admm3_pp\nnetwork.N = 3\nhyper.beta = 10, 20, 30\n");
  EXPECT_EQ(c3.h3.beta, (std::vector<double>{10, 20, 30}));
}

TEST(ConfigParse, FieldLevelErrors) {
  EXPECT_EQ(field_of(std::string(kBase) + "hyper.gamma = 1\n"), "hyper.gamma");
  EXPECT_EQ(field_of(std::string(kBase) + "hyper.lr = 0.1\n"), "hyper.lr");  // baseline key on an ADMM trainer
  EXPECT_EQ(field_of(std::string(kBase) + "hyper.omega = 1\n"), "hyper.omega");  // prox-point key on prox-grad
  EXPECT_EQ(field_of(std::string(kBase) + "hyper.beta = -1\n"), "hyper.beta");
  EXPECT_EQ(field_of(std::string(kBase) + "hyper.tau = 1:2\n"), "hyper.tau");
  EXPECT_EQ(field_of(std::string(kBase) + "data.d = 2\n"), "data.d");  // duplicate
  EXPECT_EQ(field_of("trainer.kind = sgd\ntrainer.executor = parallel\n"), "trainer.executor");
  EXPECT_EQ(field_of("trainer.kind = lbfgs\n"), "trainer.kind");
  EXPECT_EQ(field_of("task = oscillation\ndata.d = 1\n"), "data.d");
  EXPECT_EQ(field_of("network.activation = swish\n"), "network.activation");
  EXPECT_EQ(field_of("just some words\n"), "line 1");
}

TEST(ConfigParse, CommentsAndBlankLines) {
  const auto c = ex::parse_config_text("\n# comment\n  task = oscillation   # trailing\n\n");
  EXPECT_EQ(c.task, "oscillation");
}

TEST(Run, HundredIterationsGiveHundredTraceRows) {
  auto c = ex::parse_config_text("data.n_samples = 1000\ntrainer.kind = admm2_pg\ntrainer.iterations = 100\n");
  const auto r = ex::execute(c);
  ASSERT_EQ(r.trace.size(), 100u);
  EXPECT_EQ(r.trace.front().k, 1);
  EXPECT_EQ(r.trace.back().k, 100);
  EXPECT_TRUE(std::isfinite(r.final_test_mse));
  EXPECT_EQ(r.train.n(), 800u);
  EXPECT_EQ(r.test.n(), 200u);
}

TEST(Run, TraceCsvByteIdenticalAcrossRuns) {
  const auto c = ex::parse_config_text(kBase);
  const auto a = scratch("det_a"), b = scratch("det_b");
  ex::write_artifacts(ex::execute(c), a.string(), false);
  ex::write_artifacts(ex::execute(c), b.string(), false);
  const auto ta = slurp(a / "trace.csv");
  EXPECT_EQ(ta.substr(0, ta.find('\n')), trace_csv_header());
  EXPECT_EQ(ta, slurp(b / "trace.csv"));
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST(Run, ParallelExecutorReportsDiffInSummary) {
  for (const char* kind : {"admm2_pg", "admm3_pg"}) {
    auto c = ex::parse_config_text(std::string("trainer.kind = ") + kind +
                                   "\ntrainer.executor = parallel\nnetwork.N = 4\ndata.n_samples = 100\n"
                                   "trainer.iterations = 12\n");
    const auto r = ex::execute(c);
    ASSERT_TRUE(r.parallel_diff.has_value());
    EXPECT_LE(*r.parallel_diff, 1e-12) << kind;
    ASSERT_TRUE(r.pipeline.has_value());
    std::ostringstream s;
    ex::write_summary(s, r);
    EXPECT_NE(s.str().find("parallel_vs_serial_max_abs_diff"), std::string::npos);
  }
}

TEST(Run, AllTrainersFinite) {
  for (const char* kind : {"admm2_pp", "admm2_pg", "admm3_pp", "admm3_pg", "sgd", "sgdm", "adam"}) {
    const auto r = ex::execute(ex::parse_config_text(std::string("trainer.kind = ") + kind +
                                                     "\ndata.n_samples = 100\ntrainer.iterations = 5\n"));
    EXPECT_TRUE(std::isfinite(r.final_test_mse)) << kind;
    EXPECT_EQ(r.trace.size(), 5u) << kind;
  }
}

TEST(Run, BatchedAdmmSharesWeights) {
  const auto r = ex::execute(ex::parse_config_text(
      "trainer.kind = admm2_pp\ntrainer.batching = batched\ntrainer.batch_size = 40\ndata.n_samples = 100\n"
      "trainer.iterations = 6\n"));
  EXPECT_EQ(r.trace.size(), 6u);
  EXPECT_TRUE(std::isfinite(r.final_objective));
}

TEST(Run, WeightDumpRoundTripReproducesObjective) {
  const auto c = ex::parse_config_text(kBase);
  const auto r = ex::execute(c);
  const auto dir = scratch("weights");
  ex::write_artifacts(r, dir.string(), true);
  std::ifstream f(dir / "weights.bin", std::ios::binary);
  const auto [W, shape] = ex::read_weights(f);
  EXPECT_EQ(shape.N, 3);
  EXPECT_EQ(shape.act(1).name(), "sigmoid");
  EXPECT_EQ(W, r.W);
  EXPECT_NEAR(objective(W, shape, r.train.X, r.train.Y, ex::objective_lambda(c)), r.final_objective, 1e-10);
  std::filesystem::remove_all(dir);
}

TEST(Run, DatasetArtifactsWhenRequested) {
  const auto c = ex::parse_config_text(std::string(kBase) + "output.dataset = true\n");
  const auto dir = scratch("dataset");
  const auto r = ex::execute(c);
  ex::write_artifacts(r, dir.string(), false);
  EXPECT_EQ(read_dataset_csv((dir / "train.csv").string()).X, r.train.X);
  EXPECT_EQ(read_dataset_csv((dir / "test.csv").string()).Y, r.test.Y);
  std::filesystem::remove_all(dir);
}

TEST(Compare, SingleRepeatHasZeroSpread) {
  const auto row = ex::compare_one(ex::parse_config_text(kBase), "base", 1);
  EXPECT_EQ(row.repeats, 1);
  EXPECT_EQ(row.wall_std, 0.0);
  EXPECT_EQ(row.mse_std, 0.0);
  EXPECT_TRUE(std::isfinite(row.mse_mean));
}

TEST(Compare, TwoTrainersBothRowsPopulated) {
  std::vector<ex::CompareRow> rows{
      ex::compare_one(ex::parse_config_text(kBase), "admm", 2),
      ex::compare_one(ex::parse_config_text("trainer.kind = sgd\ndata.n_samples = 200\ntrainer.iterations = 30\n"),
                      "sgd", 2)};
  std::ostringstream csv;
  ex::write_compare_csv(csv, rows);
  const auto text = csv.str();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "config,trainer,executor,repeats,wall_s_mean,wall_s_std,test_mse_mean,test_mse_std");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  for (const auto& r : rows) {
    EXPECT_TRUE(std::isfinite(r.mse_mean));
    EXPECT_TRUE(std::isfinite(r.mse_std));
    EXPECT_GT(r.wall_mean, 0.0);
  }
  EXPECT_EQ(rows[1].trainer, "sgd");
}

TEST(MeanStd, SampleStandardDeviation) {
  const auto [m, s] = ex::mean_std({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(m, 2.0);
  EXPECT_DOUBLE_EQ(s, 1.0);
}
