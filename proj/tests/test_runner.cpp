#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "seven/error.hpp"
#include "seven/runner.hpp"
#include "seven/schedule.hpp"
#include "support.hpp"

namespace seven {
namespace {

TransformerConfig small_model() {
  TransformerConfig c;
  c.layers = 1;
  c.d_model = 8;
  c.heads = 2;
  c.ffn_dim = 10;
  c.seq_len = 4;
  return c;
}

DataSplit parity_split() { return {make_parity(64, 4, 1), make_parity(32, 4, 2)}; }

RunPlan plan_for(Method m, double s, std::size_t K, std::size_t T) {
  RunPlan p;
  p.method = m;
  p.sparsity = s;
  p.prune_steps = K;
  p.iterations = T;
  p.batch_size = 8;
  p.seed = 5;
  p.run_id = "test";
  return p;
}

std::size_t expected_pruned(double rate, std::size_t total) {
  return static_cast<std::size_t>(std::floor(rate * static_cast<double>(total)));
}

TEST(Runner, PrePruningFollowsExponentialScheduleByCount) {
  const auto cfg = small_model();
  const auto data = parity_split();
  const RunPlan plan = plan_for(Method::SevenPre, 0.6, 12, 16);
  const ParamStore init = prepare_initial(cfg, data.train, plan);
  const std::size_t total = PrunableLayout(init).total();
  const RunResult r = run_seven_pre(cfg, data, plan, init);
  ASSERT_EQ(r.prune_events.size(), 12u);
  for (const auto& e : r.prune_events)
    EXPECT_EQ(e.kept, total - expected_pruned(rate_exponential(0.6, e.iteration, 12), total));
  EXPECT_EQ(r.mask.pruned(), expected_pruned(0.6, total));
  ASSERT_EQ(r.metrics.size(), 17u);
  EXPECT_EQ(r.metrics[12].phase, Phase::Pruning);
  EXPECT_EQ(r.metrics[13].phase, Phase::FineTune);
  for (std::size_t t = 13; t <= 16; ++t) EXPECT_EQ(r.metrics[t].kept, r.mask.kept());
}

TEST(Runner, DynamicPruningFollowsCubicScheduleByCount) {
  const auto cfg = small_model();
  const auto data = parity_split();
  RunPlan plan = plan_for(Method::SevenDyn, 0.5, 10, 20);
  plan.prune_start = 5;
  const ParamStore init = prepare_initial(cfg, data.train, plan);
  const std::size_t total = PrunableLayout(init).total();
  const RunResult r = run_seven_dyn(cfg, data, plan, init);
  ASSERT_EQ(r.prune_events.size(), 10u);
  EXPECT_EQ(r.prune_events.front().iteration, 6u);
  for (const auto& e : r.prune_events)
    EXPECT_EQ(e.kept, total - expected_pruned(rate_cubic(0.5, e.iteration, 5, 10), total));
  for (std::size_t t = 1; t <= 5; ++t) {
    EXPECT_EQ(r.metrics[t].phase, Phase::Dense);
    EXPECT_EQ(r.metrics[t].kept, total);
  }
  EXPECT_EQ(r.metrics[20].phase, Phase::FineTune);
}

TEST(Runner, PrunedSetsNestAndPrunedWeightsStayZero) {
  const auto cfg = small_model();
  const auto data = parity_split();
  const RunPlan plan = plan_for(Method::SevenPre, 0.7, 10, 15);
  const ParamStore init = prepare_initial(cfg, data.train, plan);
  const PrunableLayout layout(init);
  Mask prev(layout);
  RunObserver obs;
  obs.on_mask = [&](std::size_t, const Mask& m) {
    EXPECT_TRUE(prev.pruned_subset_of(m));
    prev = m;
  };
  obs.on_step = [&](std::size_t, const ParamStore& p, const Mask& m) {
    const auto flat = layout.flatten(p);
    for (std::size_t j = 0; j < flat.size(); ++j) {
      if (!m.keeps(j)) {
        ASSERT_EQ(flat[j], 0.0);
      }
    }
  };
  run_seven_pre(cfg, data, plan, init, obs);
}

TEST(Runner, RunsAreBitIdentical) {
  const auto cfg = small_model();
  const auto data = parity_split();
  RunPlan plan = plan_for(Method::SevenPre, 0.5, 6, 10);
  plan.pretrain_steps = 5;
  const RunResult a = run_plan(cfg, data, plan);
  const RunResult b = run_plan(cfg, data, plan);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.final_params, b.final_params);
  EXPECT_EQ(a.final_loss, b.final_loss);
  plan.seed = 6;
  const RunResult c = run_plan(cfg, data, plan);
  EXPECT_FALSE(c.final_params == a.final_params);
}

TEST(Runner, SevenAndProductShareMomentTraces) {
  const auto cfg = small_model();
  const auto data = parity_split();
  RunPlan plan = plan_for(Method::SevenPre, 0.5, 4, 4);
  const ParamStore init = prepare_initial(cfg, data.train, plan);
  std::vector<double> mean_seven, sq_seven, mean_product, sq_product;
  RunObserver a, b;
  a.on_score = [&](std::size_t t, const ScoreState& s) {
    if (t == 1) mean_seven = s.mean_grad(), sq_seven = s.mean_sq_grad();
  };
  b.on_score = [&](std::size_t t, const ScoreState& s) {
    if (t == 1) mean_product = s.mean_grad(), sq_product = s.mean_sq_grad();
  };
  run_seven_pre(cfg, data, plan, init, a);
  plan.variant = ScoreVariant::Product;
  run_seven_pre(cfg, data, plan, init, b);
  EXPECT_EQ(mean_seven, mean_product);
  EXPECT_EQ(sq_seven, sq_product);
}

TEST(Runner, SingleShotPrunesOnceAtFullRate) {
  const auto cfg = small_model();
  const auto data = parity_split();
  for (Method m : {Method::Snip, Method::Magnitude, Method::Random}) {
    const RunPlan plan = plan_for(m, 0.6, 1, 8);
    const ParamStore init = prepare_initial(cfg, data.train, plan);
    const std::size_t total = PrunableLayout(init).total();
    const RunResult r = run_single_shot(cfg, data, plan, init);
    ASSERT_EQ(r.prune_events.size(), 1u);
    EXPECT_EQ(r.prune_events[0].iteration, 1u);
    EXPECT_EQ(r.mask.kept(), total - expected_pruned(0.6, total));
    EXPECT_EQ(r.metrics.back().variant, "-");
  }
}

TEST(Runner, MagnitudePrunesSmallestInitialWeights) {
  const auto cfg = small_model();
  const auto data = parity_split();
  const RunPlan plan = plan_for(Method::Magnitude, 0.5, 1, 1);
  const ParamStore init = prepare_initial(cfg, data.train, plan);
  const PrunableLayout layout(init);
  const auto theta = layout.flatten(init);
  const RunResult r = run_single_shot(cfg, data, plan, init);
  double max_pruned = 0.0, min_kept = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < theta.size(); ++j) {
    if (r.mask.keeps(j))
      min_kept = std::min(min_kept, std::abs(theta[j]));
    else
      max_pruned = std::max(max_pruned, std::abs(theta[j]));
  }
  EXPECT_LE(max_pruned, min_kept);
}

TEST(Runner, DenseKeepsEverything) {
  const auto cfg = small_model();
  const auto data = parity_split();
  const RunResult r = run_plan(cfg, data, plan_for(Method::Dense, 0.0, 1, 6));
  EXPECT_TRUE(r.prune_events.empty());
  for (const auto& m : r.metrics) {
    EXPECT_EQ(m.density, 1.0);
    EXPECT_EQ(m.phase, Phase::Dense);
  }
  EXPECT_FALSE(std::isnan(r.metrics.back().eval_accuracy));
  EXPECT_FALSE(std::isnan(r.metrics.front().eval_accuracy));
}

TEST(Runner, NonFiniteLossRaisesWithPartialMetrics) {
  const auto cfg = small_model();
  const auto data = parity_split();
  const RunPlan plan = plan_for(Method::SevenPre, 0.5, 3, 5);
  ParamStore init = prepare_initial(cfg, data.train, plan);
  init.value("head.bias")[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    run_seven_pre(cfg, data, plan, init);
    FAIL();
  } catch (const RunFailure& e) {
    ASSERT_FALSE(e.partial().empty());
    EXPECT_TRUE(std::isnan(e.partial().back().loss));
  } catch (const NumericError&) {
    // Evaluation at iteration 0 may trip first; both are explicit failures.
  }
}

TEST(Runner, PlanValidation) {
  EXPECT_THROW(plan_for(Method::SevenPre, 0.5, 20, 10).validate(), ConfigError);
  EXPECT_THROW(plan_for(Method::SevenPre, 1.0, 5, 10).validate(), ConfigError);
  RunPlan dyn = plan_for(Method::SevenDyn, 0.5, 10, 20);
  dyn.prune_start = 15;
  EXPECT_THROW(dyn.validate(), ConfigError);
  dyn.prune_start = 20;
  EXPECT_NO_THROW(dyn.validate());
  RunPlan bad = plan_for(Method::SevenPre, 0.5, 5, 10);
  bad.variant = ScoreVariant::Snip;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(run_seven_dyn(small_model(), parity_split(), plan_for(Method::SevenPre, 0.5, 5, 10),
                             init_model(small_model(), 1)),
               ConfigError);
}

TEST(Runner, DynamicWindowAtOrPastTrainingEndTrainsDensely) {
  const auto cfg = small_model();
  const auto data = parity_split();
  RunPlan plan = plan_for(Method::SevenDyn, 0.5, 10, 6);
  plan.prune_start = 6;
  const RunResult r = run_plan(cfg, data, plan);
  EXPECT_TRUE(r.prune_events.empty());
  EXPECT_EQ(r.mask.density(), 1.0);
}

TEST(Runner, MethodNames) {
  for (Method m : {Method::Dense, Method::SevenPre, Method::SevenDyn, Method::Snip,
                   Method::Magnitude, Method::Random})
    EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_THROW(parse_method("grasp"), ConfigError);
}

}  // namespace
}  // namespace seven
