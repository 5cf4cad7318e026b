#include "seven/schedule.hpp"

#include <cmath>
#include <string>

#include "seven/error.hpp"

namespace seven {

namespace {
void check_common(double sparsity, std::size_t steps) {
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    throw ConfigError("sparsity", "must lie in [0, 1)");
  if (steps == 0) throw ConfigError("K", "must be at least 1");
}
}  // namespace

double rate_exponential(double sparsity, std::size_t t, std::size_t steps) {
  check_common(sparsity, steps);
  if (t < 1 || t > steps)
    throw Error("schedule: step " + std::to_string(t) + " outside [1, " +
                std::to_string(steps) + "]");
  if (t == steps) return sparsity;
  const double frac = static_cast<double>(t) / static_cast<double>(steps);
  return 1.0 - std::pow(1.0 - sparsity, frac);
}

double rate_cubic(double sparsity, std::size_t t, std::size_t start, std::size_t steps) {
  check_common(sparsity, steps);
  if (t <= start || t > start + steps)
    throw Error("schedule: step " + std::to_string(t) + " outside (" + std::to_string(start) +
                ", " + std::to_string(start + steps) + "]");
  // s - s(1 - x^3) simplifies to s x^3.
  const double x = static_cast<double>(t - start) / static_cast<double>(steps);
  return sparsity * (x * x * x);
}

void SparsitySchedule::validate() const {
  check_common(sparsity, steps);
  if (kind == ScheduleKind::Exponential && start != 0)
    throw ConfigError("t_i", "the exponential schedule starts at iteration 0");
}

double SparsitySchedule::rate(std::size_t t) const {
  return kind == ScheduleKind::Exponential ? rate_exponential(sparsity, t, steps)
                                           : rate_cubic(sparsity, t, start, steps);
}

}  // namespace seven
