#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "seven/mask.hpp"
#include "seven/param_store.hpp"

namespace seven {

enum class OptimizerKind { Sgd, Adam };

std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

// Plain SGD or bias-corrected Adam over every parameter of a store.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, const ParamStore& params);

  // Zeroes gradients at pruned coordinates, applies the update, then
  // re-applies the mask so pruned weights stay exactly zero. Throws
  // NumericError on non-finite gradients.
  void step(ParamStore& params, GradientSet grads, const Mask* mask);

  // Clears Adam moments at pruned coordinates.
  void on_mask(const Mask& mask);

  std::size_t steps() const noexcept { return steps_; }
  const OptimizerConfig& config() const noexcept { return config_; }
  const GradientSet& first_moment() const noexcept { return m_; }
  const GradientSet& second_moment() const noexcept { return v_; }

 private:
  OptimizerConfig config_;
  std::size_t steps_ = 0;
  GradientSet m_;
  GradientSet v_;
};

}  // namespace seven
