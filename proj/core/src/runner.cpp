#include "seven/runner.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <optional>

#include "seven/rng.hpp"
#include "seven/schedule.hpp"

namespace seven {

namespace {
// Independent random streams derived from the run seed.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kBatchStream = 1;
constexpr std::uint64_t kRandomScoreStream = 2;
constexpr std::uint64_t kPretrainStream = 3;

constexpr Method kMethods[] = {Method::Dense, Method::SevenPre, Method::SevenDyn,
                               Method::Snip,  Method::Magnitude, Method::Random};

ScoreVariant single_shot_variant(Method m) {
  switch (m) {
    case Method::Snip: return ScoreVariant::Snip;
    case Method::Magnitude: return ScoreVariant::Magnitude;
    default: return ScoreVariant::Random;
  }
}

struct ScoreSummary {
  double min = kMissing, median = kMissing, max = kMissing;
};

ScoreSummary summarize(std::vector<double> s) {
  ScoreSummary out;
  if (s.empty()) return out;
  const auto mid = s.begin() + static_cast<std::ptrdiff_t>(s.size() / 2);
  std::nth_element(s.begin(), mid, s.end());
  out.median = *mid;
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  out.min = *lo;
  out.max = *hi;
  return out;
}

class Engine {
 public:
  Engine(const TransformerConfig& cfg, const DataSplit& data, const RunPlan& plan,
         const ParamStore& initial, const RunObserver& observer)
      : cfg_(cfg), data_(data), plan_(plan), observer_(observer) {
    result_.initial = initial;
    params_ = initial;
    layout_ = PrunableLayout(params_);
    mask_ = Mask(layout_);
  }

  RunResult run() {
    const std::size_t begin = plan_.window_begin(), end = plan_.window_end();
    std::optional<ScoreState> state;
    if (plan_.method == Method::SevenPre || plan_.method == Method::SevenDyn)
      state.emplace(layout_.total(), plan_.hyper, plan_.variant);
    std::optional<SparsitySchedule> schedule;
    if (plan_.method == Method::SevenPre)
      schedule = SparsitySchedule{ScheduleKind::Exponential, plan_.sparsity,
                                  plan_.prune_steps, 0};
    else if (plan_.method == Method::SevenDyn)
      schedule = SparsitySchedule{ScheduleKind::Cubic, plan_.sparsity, plan_.prune_steps,
                                  plan_.prune_start};

    Optimizer opt(plan_.optimizer, params_);
    BatchStream stream(data_.train, plan_.batch_size, derive_seed(plan_.seed, kBatchStream));

    MetricsRecord start = base_record(0, Phase::Dense);
    evaluate_into(start);
    result_.metrics.push_back(start);

    for (std::size_t t = 1; t <= plan_.iterations; ++t) {
      const Phase phase = plan_.method == Method::Dense ? Phase::Dense
                          : t <= begin                  ? Phase::Dense
                          : t <= end                    ? Phase::Pruning
                                                        : Phase::FineTune;
      MetricsRecord rec = base_record(t, phase);
      const Batch batch = stream.next();
      LossAndGrad lg;
      try {
        lg = loss_and_grad(cfg_, params_, batch);
      } catch (const NumericError& e) {
        rec.density = mask_.density();
        rec.kept = mask_.kept();
        result_.metrics.push_back(rec);
        throw RunFailure(plan_.run_id + ": iteration " + std::to_string(t) + ": " + e.what(),
                         result_.metrics);
      }
      rec.loss = lg.loss;

      if (t > begin && t <= end) {
        const std::vector<double> theta = layout_.flatten(params_);
        const std::vector<double> grad = layout_.flatten(lg.grads);
        std::vector<double> scores;
        double rate = plan_.sparsity;
        if (state) {
          state->update(grad);
          state->accumulate(theta, grad);
          if (observer_.on_score) observer_.on_score(t, *state);
          scores = state->score();
          rate = schedule->rate(t);
        } else {
          scores = baseline_score(single_shot_variant(plan_.method), theta, grad,
                                  derive_seed(plan_.seed, kRandomScoreStream));
        }
        const ScoreSummary summary = summarize(scores);
        rec.score_min = summary.min;
        rec.score_median = summary.median;
        rec.score_max = summary.max;

        BuiltMask built = build_mask(layout_, scores, rate, &mask_, plan_.resurrection);
        if (built.clamped)
          std::clog << "warning: " << plan_.run_id << " iteration " << t << ": rate " << rate
                    << " below the already pruned fraction; mask kept\n";
        mask_ = std::move(built.mask);
        apply_mask(params_, mask_);
        opt.on_mask(mask_);
        result_.prune_events.push_back(
            PruneEvent{t, rate, mask_.kept(), built.tau, built.clamped});
        if (observer_.on_mask) observer_.on_mask(t, mask_);
      }

      try {
        opt.step(params_, std::move(lg.grads), &mask_);
      } catch (const NumericError& e) {
        result_.metrics.push_back(rec);
        throw RunFailure(plan_.run_id + ": iteration " + std::to_string(t) + ": " + e.what(),
                         result_.metrics);
      }
      if (observer_.on_step) observer_.on_step(t, params_, mask_);

      rec.density = mask_.density();
      rec.kept = mask_.kept();
      const bool boundary = (begin > 0 && t == begin) || (end > 0 && t == end) ||
                            t == plan_.iterations;
      const bool cadence = plan_.eval_every > 0 && t % plan_.eval_every == 0;
      if (stream.epoch_finished() || boundary || cadence) evaluate_into(rec);
      result_.metrics.push_back(rec);
    }

    const MetricsRecord& last = result_.metrics.back();
    result_.final_loss = last.eval_loss;
    result_.final_accuracy = last.eval_accuracy;
    result_.final_params = std::move(params_);
    result_.mask = std::move(mask_);
    return std::move(result_);
  }

 private:
  MetricsRecord base_record(std::size_t t, Phase phase) const {
    MetricsRecord r;
    r.run_id = plan_.run_id;
    r.seed = plan_.seed;
    r.method = std::string(to_string(plan_.method));
    r.variant = plan_.method == Method::SevenPre || plan_.method == Method::SevenDyn
                    ? std::string(to_string(plan_.variant))
                    : "-";
    r.sparsity = plan_.sparsity;
    r.resurrection = plan_.resurrection;
    r.iteration = t;
    r.phase = phase;
    r.density = mask_.density();
    r.kept = mask_.kept();
    return r;
  }

  void evaluate_into(MetricsRecord& rec) const {
    const Evaluation ev = evaluate(cfg_, params_, data_.validation);
    rec.eval_loss = ev.loss;
    rec.eval_accuracy = ev.accuracy;
  }

  const TransformerConfig& cfg_;
  const DataSplit& data_;
  const RunPlan& plan_;
  const RunObserver& observer_;
  ParamStore params_;
  PrunableLayout layout_;
  Mask mask_;
  RunResult result_;
};

RunResult execute(const TransformerConfig& cfg, const DataSplit& data, const RunPlan& plan,
                  const ParamStore& initial, const RunObserver& observer) {
  cfg.validate();
  plan.validate();
  if (data.validation.size() == 0) throw ConfigError("val_size", "validation set is empty");
  return Engine(cfg, data, plan, initial, observer).run();
}

void expect_method(const RunPlan& plan, std::initializer_list<Method> allowed,
                   const char* runner) {
  for (Method m : allowed)
    if (plan.method == m) return;
  throw ConfigError("method", std::string(runner) + " cannot run method " +
                                  std::string(to_string(plan.method)));
}
}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Dense: return "dense";
    case Method::SevenPre: return "seven_pre";
    case Method::SevenDyn: return "seven_dyn";
    case Method::Snip: return "snip";
    case Method::Magnitude: return "magnitude";
    case Method::Random: return "random";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : kMethods)
    if (to_string(m) == name) return m;
  throw ConfigError("method", "unknown method '" + std::string(name) + "'");
}

void RunPlan::validate() const {
  if (iterations == 0) throw ConfigError("T", "must be at least 1");
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw ConfigError("sparsity", "must lie in [0, 1)");
  hyper.validate();
  optimizer.validate();
  if (!(pretrain_lr >= 0.0) || !std::isfinite(pretrain_lr))
    throw ConfigError("pretrain_lr", "must be non-negative");
  switch (method) {
    case Method::SevenPre:
      if (prune_steps == 0) throw ConfigError("K", "must be at least 1");
      if (prune_steps > iterations) throw ConfigError("K", "must not exceed T");
      if (!is_accumulated(variant))
        throw ConfigError("variant", "seven_pre needs an accumulated score variant");
      break;
    case Method::SevenDyn:
      if (prune_steps == 0) throw ConfigError("K", "must be at least 1");
      if (prune_start < iterations && prune_start + prune_steps > iterations)
        throw ConfigError("K", "t_i + K must not exceed T");
      if (!is_accumulated(variant))
        throw ConfigError("variant", "seven_dyn needs an accumulated score variant");
      break;
    default:
      break;
  }
}

std::size_t RunPlan::window_begin() const {
  return method == Method::SevenDyn ? prune_start : 0;
}

std::size_t RunPlan::window_end() const {
  switch (method) {
    case Method::Dense: return 0;
    case Method::SevenPre: return prune_steps;
    case Method::SevenDyn:
      return prune_start >= iterations ? prune_start : prune_start + prune_steps;
    default: return 1;
  }
}

ParamStore prepare_initial(const TransformerConfig& cfg, const Dataset& train,
                           const RunPlan& plan) {
  ParamStore params = init_model(cfg, derive_seed(plan.seed, kInitStream));
  if (plan.pretrain_steps == 0) return params;
  OptimizerConfig oc = plan.optimizer;
  if (plan.pretrain_lr > 0.0) oc.lr = plan.pretrain_lr;
  Optimizer opt(oc, params);
  BatchStream stream(train, plan.batch_size, derive_seed(plan.seed, kPretrainStream));
  for (std::size_t t = 0; t < plan.pretrain_steps; ++t) {
    LossAndGrad lg = loss_and_grad(cfg, params, stream.next());
    opt.step(params, std::move(lg.grads), nullptr);
  }
  return params;
}

RunResult run_seven_pre(const TransformerConfig& cfg, const DataSplit& data,
                        const RunPlan& plan, const ParamStore& initial,
                        const RunObserver& observer) {
  expect_method(plan, {Method::SevenPre}, "run_seven_pre");
  return execute(cfg, data, plan, initial, observer);
}

RunResult run_seven_dyn(const TransformerConfig& cfg, const DataSplit& data,
                        const RunPlan& plan, const ParamStore& initial,
                        const RunObserver& observer) {
  expect_method(plan, {Method::SevenDyn}, "run_seven_dyn");
  return execute(cfg, data, plan, initial, observer);
}

RunResult run_single_shot(const TransformerConfig& cfg, const DataSplit& data,
                          const RunPlan& plan, const ParamStore& initial,
                          const RunObserver& observer) {
  expect_method(plan, {Method::Snip, Method::Magnitude, Method::Random}, "run_single_shot");
  return execute(cfg, data, plan, initial, observer);
}

RunResult run_dense(const TransformerConfig& cfg, const DataSplit& data, const RunPlan& plan,
                    const ParamStore& initial, const RunObserver& observer) {
  expect_method(plan, {Method::Dense}, "run_dense");
  return execute(cfg, data, plan, initial, observer);
}

RunResult run_plan(const TransformerConfig& cfg, const DataSplit& data, const RunPlan& plan,
                   const ParamStore* initial, const RunObserver& observer) {
  plan.validate();
  ParamStore prepared;
  if (!initial) {
    prepared = prepare_initial(cfg, data.train, plan);
    initial = &prepared;
  }
  switch (plan.method) {
    case Method::SevenPre: return run_seven_pre(cfg, data, plan, *initial, observer);
    case Method::SevenDyn: return run_seven_dyn(cfg, data, plan, *initial, observer);
    case Method::Dense: return run_dense(cfg, data, plan, *initial, observer);
    default: return run_single_shot(cfg, data, plan, *initial, observer);
  }
}

}  // namespace seven
