#pragma once

#include <cstddef>

namespace seven {

// Fraction of prunable weights removed after pruning step t of K, growing
// geometrically in the kept fraction: 1 - (1 - s)^(t/K), for 1 <= t <= K.
// Returns s exactly at t == K.
double rate_exponential(double sparsity, std::size_t t, std::size_t steps);

// Cubic ramp over the window (start, start + K]: s * ((t - start) / K)^3.
double rate_cubic(double sparsity, std::size_t t, std::size_t start, std::size_t steps);

enum class ScheduleKind { Exponential, Cubic };

struct SparsitySchedule {
  ScheduleKind kind = ScheduleKind::Exponential;
  double sparsity = 0.0;
  std::size_t steps = 1;
  std::size_t start = 0;  // cubic only; exponential windows start at 0

  void validate() const;
  // True for iterations inside the pruning window.
  bool active(std::size_t t) const { return t > start && t <= start + steps; }
  double rate(std::size_t t) const;
};

}  // namespace seven
