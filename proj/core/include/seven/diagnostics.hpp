#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "seven/data.hpp"
#include "seven/mask.hpp"
#include "seven/model.hpp"

namespace seven {

inline constexpr double kRgvFloor = 1e-12;

// A flat gradient over the prunable layout, taken without updating the model.
struct GradSnapshot {
  std::vector<double> grad;
  std::size_t batch_id = 0;
  std::size_t iteration = 0;
  double density = 1.0;
};

struct DistributionSummary {
  std::size_t count = 0;
  double l1 = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  // Values outside [q1 - 1.5 IQR, q3 + 1.5 IQR].
  std::size_t outliers = 0;
};

// Quartiles use linear interpolation between order statistics.
DistributionSummary summarize(std::span<const double> values);
double quantile(std::span<const double> sorted, double q);

struct RgvResult {
  std::vector<double> values;
  // Coordinates where |g| < floor; their denominator is floor with g's sign.
  std::size_t floored_count = 0;
  DistributionSummary summary;
};

// Relative gradient variation (g_i - g) / g, elementwise.
RgvResult rgv(std::span<const double> g_i, std::span<const double> g,
              double floor = kRgvFloor);
RgvResult rgv(const GradSnapshot& g_i, const GradSnapshot& g_full, double floor = kRgvFloor);

// Stochastic gradient noise g_i - g.
std::vector<double> sgn(std::span<const double> g_i, std::span<const double> g);

struct NoiseVariance {
  std::size_t batches = 0;
  double batch_size = 0.0;
  double mean_sq_norm = 0.0;  // (1/N) sum g_i'g_i
  double full_sq_norm = 0.0;  // g'g
  double rgv_quadratic = 0.0; // (1/N) sum (r.g)'(r.g)
  double rgv_cross = 0.0;     // (1/N) sum 2 (r.g)'g
  double sigma = 0.0;         // (mean_sq_norm - full_sq_norm) / S
  double sigma_rgv = 0.0;     // (rgv_quadratic + rgv_cross) / S
};

NoiseVariance sgn_variance(std::span<const GradSnapshot> snapshots, const GradSnapshot& g_full,
                           double batch_size, double floor = kRgvFloor);

GradSnapshot mean_snapshot(std::span<const GradSnapshot> snapshots);

// Gradients of params (with mask applied to a copy) on each batch, flattened
// over the prunable layout. params is never modified.
std::vector<GradSnapshot> capture_snapshots(const TransformerConfig& cfg,
                                            const ParamStore& params, const Mask& mask,
                                            std::span<const Batch> batches,
                                            std::size_t iteration = 0);

// Entries of v at coordinates the mask keeps.
std::vector<double> kept_coordinates(std::span<const double> v, const Mask& mask);

// L1 norms of gradient differences between consecutive batches, on kept
// coordinates only. n + 1 batches give n values.
std::vector<double> retained_grad_change(const TransformerConfig& cfg, const ParamStore& params,
                                         const Mask& mask, std::span<const Batch> batches);
std::vector<double> retained_grad_change(const TransformerConfig& cfg, const ParamStore& params,
                                         const Mask& mask, BatchStream& stream, std::size_t n);

}  // namespace seven
