#include "seven/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "seven/error.hpp"

namespace seven {

namespace {
void require_same_length(std::size_t a, std::size_t b, const char* op) {
  if (a != b)
    throw ShapeError(std::string(op) + ": length mismatch " + std::to_string(a) + " vs " +
                     std::to_string(b));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

void check_layout(const Mask& mask, const ParamStore& params, const char* op) {
  if (!(mask.layout() == PrunableLayout(params)))
    throw ShapeError(std::string(op) + ": mask does not match the parameter store");
}
}  // namespace

double quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error("quantile: empty input");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

DistributionSummary summarize(std::span<const double> values) {
  DistributionSummary s;
  s.count = values.size();
  if (values.empty()) return s;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  for (double v : sorted) s.l1 += std::abs(v);
  s.q1 = quantile(sorted, 0.25);
  s.median = quantile(sorted, 0.5);
  s.q3 = quantile(sorted, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo = s.q1 - 1.5 * iqr, hi = s.q3 + 1.5 * iqr;
  for (double v : sorted)
    if (v < lo || v > hi) ++s.outliers;
  return s;
}

RgvResult rgv(std::span<const double> g_i, std::span<const double> g, double floor) {
  require_same_length(g_i.size(), g.size(), "rgv");
  if (!(floor > 0.0)) throw Error("rgv: floor must be positive");
  RgvResult out;
  out.values.resize(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    double denom = g[j];
    if (std::abs(denom) < floor) {
      denom = std::signbit(denom) ? -floor : floor;
      ++out.floored_count;
    }
    out.values[j] = (g_i[j] - g[j]) / denom;
  }
  out.summary = summarize(out.values);
  return out;
}

RgvResult rgv(const GradSnapshot& g_i, const GradSnapshot& g_full, double floor) {
  return rgv(g_i.grad, g_full.grad, floor);
}

std::vector<double> sgn(std::span<const double> g_i, std::span<const double> g) {
  require_same_length(g_i.size(), g.size(), "sgn");
  std::vector<double> out(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) out[j] = g_i[j] - g[j];
  return out;
}

NoiseVariance sgn_variance(std::span<const GradSnapshot> snapshots, const GradSnapshot& g_full,
                           double batch_size, double floor) {
  if (snapshots.size() < 2) throw Error("sgn_variance: needs at least two snapshots");
  if (!(batch_size > 0.0)) throw Error("sgn_variance: batch size must be positive");
  const std::span<const double> g = g_full.grad;
  NoiseVariance out;
  out.batches = snapshots.size();
  out.batch_size = batch_size;
  out.full_sq_norm = dot(g, g);
  std::vector<double> rg(g.size());
  for (const auto& snap : snapshots) {
    require_same_length(snap.grad.size(), g.size(), "sgn_variance");
    out.mean_sq_norm += dot(snap.grad, snap.grad);
    const RgvResult r = rgv(snap.grad, g, floor);
    for (std::size_t j = 0; j < g.size(); ++j) rg[j] = r.values[j] * g[j];
    out.rgv_quadratic += dot(rg, rg);
    out.rgv_cross += 2.0 * dot(rg, g);
  }
  const double n = static_cast<double>(snapshots.size());
  out.mean_sq_norm /= n;
  out.rgv_quadratic /= n;
  out.rgv_cross /= n;
  out.sigma = (out.mean_sq_norm - out.full_sq_norm) / batch_size;
  out.sigma_rgv = (out.rgv_quadratic + out.rgv_cross) / batch_size;
  return out;
}

GradSnapshot mean_snapshot(std::span<const GradSnapshot> snapshots) {
  if (snapshots.empty()) throw Error("mean_snapshot: no snapshots");
  GradSnapshot out;
  out.grad.assign(snapshots.front().grad.size(), 0.0);
  out.iteration = snapshots.front().iteration;
  out.density = snapshots.front().density;
  for (const auto& s : snapshots) {
    require_same_length(s.grad.size(), out.grad.size(), "mean_snapshot");
    for (std::size_t j = 0; j < out.grad.size(); ++j) out.grad[j] += s.grad[j];
  }
  const double n = static_cast<double>(snapshots.size());
  for (double& v : out.grad) v /= n;
  return out;
}

std::vector<GradSnapshot> capture_snapshots(const TransformerConfig& cfg,
                                            const ParamStore& params, const Mask& mask,
                                            std::span<const Batch> batches,
                                            std::size_t iteration) {
  check_layout(mask, params, "capture_snapshots");
  ParamStore masked = params;
  apply_mask(masked, mask);
  const PrunableLayout layout(masked);
  std::vector<GradSnapshot> out;
  out.reserve(batches.size());
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const LossAndGrad lg = loss_and_grad(cfg, masked, batches[b]);
    out.push_back(GradSnapshot{layout.flatten(lg.grads), b, iteration, mask.density()});
  }
  return out;
}

std::vector<double> kept_coordinates(std::span<const double> v, const Mask& mask) {
  require_same_length(v.size(), mask.total(), "kept_coordinates");
  std::vector<double> out;
  out.reserve(mask.kept());
  for (std::size_t j = 0; j < v.size(); ++j)
    if (mask.keeps(j)) out.push_back(v[j]);
  return out;
}

std::vector<double> retained_grad_change(const TransformerConfig& cfg, const ParamStore& params,
                                         const Mask& mask, std::span<const Batch> batches) {
  if (batches.size() < 2) throw Error("retained_grad_change: needs at least one sample");
  const auto snaps = capture_snapshots(cfg, params, mask, batches);
  std::vector<double> out;
  out.reserve(snaps.size() - 1);
  for (std::size_t t = 0; t + 1 < snaps.size(); ++t) {
    double norm = 0.0;
    for (std::size_t j = 0; j < mask.total(); ++j)
      if (mask.keeps(j)) norm += std::abs(snaps[t + 1].grad[j] - snaps[t].grad[j]);
    out.push_back(norm);
  }
  return out;
}

std::vector<double> retained_grad_change(const TransformerConfig& cfg, const ParamStore& params,
                                         const Mask& mask, BatchStream& stream, std::size_t n) {
  if (n < 1) throw Error("retained_grad_change: samples must be at least 1");
  std::vector<Batch> batches;
  batches.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) batches.push_back(stream.next());
  return retained_grad_change(cfg, params, mask, batches);
}

}  // namespace seven
