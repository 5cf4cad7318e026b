#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace seven {

// SEVEN and its ablations differ only in the correction multiplier applied
// to each batch gradient. Snip, Magnitude and Random are one-shot baselines.
enum class ScoreVariant { Seven, FirstOnly, SecondOnly, Product, Snip, Magnitude, Random };

std::string_view to_string(ScoreVariant v);
ScoreVariant parse_score_variant(std::string_view name);
bool is_accumulated(ScoreVariant v);

struct ScoreHyper {
  double alpha1 = 0.8;
  double alpha2 = 0.9;
  double epsilon = 1e-8;

  // Throws ConfigError unless both alphas lie in (0, 1) and epsilon > 0.
  void validate() const;

  friend bool operator==(const ScoreHyper&, const ScoreHyper&) = default;
};

// Bias-corrected moments of the gradient sequence.
struct Moments {
  std::vector<double> first;   // mean_grad / (1 - alpha1^i)
  std::vector<double> second;  // sqrt(mean_sq_grad / (1 - alpha2^i) + epsilon)
};

// Polyak-averaged gradient statistics and the accumulated sensitivity score
// over the prunable weights.
//
//   mean    <- alpha1 * mean    + (1 - alpha1) * g
//   mean_sq <- alpha2 * mean_sq + (1 - alpha2) * g^2
//   mu      =  first / second              (variant dependent)
//   score   += |theta * g * mu|
//
// All vectors start at zero; step() counts completed updates.
class ScoreState {
 public:
  ScoreState(std::size_t size, ScoreHyper hyper, ScoreVariant variant = ScoreVariant::Seven);

  // Folds one batch gradient into the running averages.
  void update(std::span<const double> grad);

  Moments moments() const;
  // Multiplier for the current step according to the variant.
  std::vector<double> correction() const;
  // Adds |theta * grad * correction()| to the score. Call after update(grad).
  void accumulate(std::span<const double> theta, std::span<const double> grad);

  std::size_t size() const noexcept { return mean_.size(); }
  std::size_t step() const noexcept { return step_; }
  const ScoreHyper& hyper() const noexcept { return hyper_; }
  ScoreVariant variant() const noexcept { return variant_; }
  const std::vector<double>& mean_grad() const noexcept { return mean_; }
  const std::vector<double>& mean_sq_grad() const noexcept { return mean_sq_; }
  const std::vector<double>& score() const noexcept { return score_; }

  // Text checkpoint: header `SEVENSCORE v1 <size> <step> <variant> <alpha1>
  // <alpha2> <epsilon>` then the mean, mean_sq and score vectors, one line
  // each, as hexadecimal floats.
  void save(std::ostream& out) const;
  static ScoreState load(std::istream& in);

  friend bool operator==(const ScoreState&, const ScoreState&) = default;

 private:
  void check_length(std::size_t n, const char* what) const;

  ScoreHyper hyper_;
  ScoreVariant variant_;
  std::size_t step_ = 0;
  std::vector<double> mean_;
  std::vector<double> mean_sq_;
  std::vector<double> score_;
};

// One-shot criteria: Magnitude |theta|, Snip |theta * grad| on a single batch
// gradient, Random a seeded uniform draw in [0, 1).
std::vector<double> baseline_score(ScoreVariant variant, std::span<const double> theta,
                                   std::span<const double> grad, std::uint64_t seed);

}  // namespace seven
