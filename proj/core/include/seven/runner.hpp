#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "seven/data.hpp"
#include "seven/error.hpp"
#include "seven/mask.hpp"
#include "seven/metrics.hpp"
#include "seven/model.hpp"
#include "seven/optimizer.hpp"
#include "seven/score.hpp"

namespace seven {

enum class Method { Dense, SevenPre, SevenDyn, Snip, Magnitude, Random };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

struct RunPlan {
  Method method = Method::SevenPre;
  ScoreVariant variant = ScoreVariant::Seven;
  double sparsity = 0.0;
  std::size_t prune_steps = 100;  // K
  std::size_t prune_start = 0;    // t_i, dynamic pruning only
  std::size_t iterations = 1000;  // T
  bool resurrection = false;
  std::uint64_t seed = 0;
  ScoreHyper hyper;
  OptimizerConfig optimizer;
  std::size_t batch_size = 32;
  // Dense steps taken before iteration 1 to produce the starting model.
  std::size_t pretrain_steps = 0;
  // Learning rate for those steps; 0 uses optimizer.lr.
  double pretrain_lr = 0.0;
  // Extra evaluation every n iterations; 0 evaluates at epoch ends and
  // phase boundaries only.
  std::size_t eval_every = 0;
  std::string run_id;

  void validate() const;
  // Pruning window (first, last] in iteration numbers; empty for Dense.
  std::size_t window_begin() const;
  std::size_t window_end() const;
};

struct PruneEvent {
  std::size_t iteration = 0;
  double rate = 0.0;
  std::size_t kept = 0;
  double tau = 0.0;
  bool clamped = false;
};

struct RunResult {
  ParamStore initial;
  ParamStore final_params;
  Mask mask;
  std::vector<MetricsRecord> metrics;
  std::vector<PruneEvent> prune_events;
  double final_loss = 0.0;
  double final_accuracy = 0.0;
};

// Hooks for tests and instrumentation; all optional.
struct RunObserver {
  std::function<void(std::size_t t, const ScoreState&)> on_score;
  std::function<void(std::size_t t, const Mask&)> on_mask;
  std::function<void(std::size_t t, const ParamStore&, const Mask&)> on_step;
};

// Raised when training hits a non-finite loss or gradient. Carries the
// metrics gathered so far, ending with a record whose loss is NaN.
class RunFailure : public Error {
 public:
  RunFailure(const std::string& what, std::vector<MetricsRecord> partial)
      : Error(what), partial_(std::move(partial)) {}
  const std::vector<MetricsRecord>& partial() const noexcept { return partial_; }

 private:
  std::vector<MetricsRecord> partial_;
};

// Seeded initialisation followed by plan.pretrain_steps of dense training.
ParamStore prepare_initial(const TransformerConfig& cfg, const Dataset& train,
                           const RunPlan& plan);

// Pre-pruning: score, exponential-rate masking and an optimizer step at each
// t <= K, then plain training on the fixed mask up to T.
RunResult run_seven_pre(const TransformerConfig& cfg, const DataSplit& data,
                        const RunPlan& plan, const ParamStore& initial,
                        const RunObserver& observer = {});
// Dynamic pruning: dense up to t_i, cubic-rate masking on (t_i, t_i + K],
// fine-tuning afterwards.
RunResult run_seven_dyn(const TransformerConfig& cfg, const DataSplit& data,
                        const RunPlan& plan, const ParamStore& initial,
                        const RunObserver& observer = {});
// Snip, Magnitude or Random: one mask at t = 1 at the full rate.
RunResult run_single_shot(const TransformerConfig& cfg, const DataSplit& data,
                          const RunPlan& plan, const ParamStore& initial,
                          const RunObserver& observer = {});
RunResult run_dense(const TransformerConfig& cfg, const DataSplit& data,
                    const RunPlan& plan, const ParamStore& initial,
                    const RunObserver& observer = {});

// Dispatches on plan.method; prepares the initial model when none is given.
RunResult run_plan(const TransformerConfig& cfg, const DataSplit& data, const RunPlan& plan,
                   const ParamStore* initial = nullptr, const RunObserver& observer = {});

}  // namespace seven
