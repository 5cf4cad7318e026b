#include "seven/optimizer.hpp"

#include <cmath>
#include <string>

#include "seven/error.hpp"

namespace seven {

std::string_view to_string(OptimizerKind k) {
  return k == OptimizerKind::Sgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("optimizer", "unknown optimizer '" + std::string(name) + "'");
}

void OptimizerConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr", "must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam_beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam_beta2", "must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam_eps", "must be positive");
}

Optimizer::Optimizer(OptimizerConfig config, const ParamStore& params) : config_(config) {
  config_.validate();
  if (config_.kind == OptimizerKind::Adam) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.shape(), 0.0);
      v_.emplace_back(p.value.shape(), 0.0);
    }
  }
}

void Optimizer::step(ParamStore& params, GradientSet grads, const Mask* mask) {
  if (grads.size() != params.size())
    throw ShapeError("optimizer: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params[i].value.shape())
      throw ShapeError("optimizer: gradient shape mismatch for " + params[i].name);
    if (!grads[i].all_finite())
      throw NumericError("optimizer: non-finite gradient for " + params[i].name);
  }
  if (mask) apply_mask(grads, *mask);
  ++steps_;
  if (config_.kind == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      auto& w = params[i].value.data();
      const auto& g = grads[i].data();
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= config_.lr * g[j];
    }
  } else {
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      auto& w = params[i].value.data();
      auto& m = m_[i].data();
      auto& v = v_[i].data();
      const auto& g = grads[i].data();
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
        v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
        w[j] -= config_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
      }
    }
  }
  if (mask) apply_mask(params, *mask);
}

void Optimizer::on_mask(const Mask& mask) {
  if (config_.kind != OptimizerKind::Adam) return;
  apply_mask(m_, mask);
  apply_mask(v_, mask);
}

}  // namespace seven
