#include <gtest/gtest.h>

#include <cmath>

#include "seven/diagnostics.hpp"
#include "seven/error.hpp"
#include "support.hpp"

namespace seven {
namespace {

TEST(Rgv, IdentityAndDoubling) {
  const std::vector<double> g = {1.0, -2.0, 0.5};
  const RgvResult same = rgv(g, g);
  for (double v : same.values) EXPECT_EQ(v, 0.0);
  const std::vector<double> twice = {2.0, -4.0, 1.0};
  for (double v : rgv(twice, g).values) EXPECT_EQ(v, 1.0);
}

TEST(Rgv, ZeroCoordinateIsFlooredAndCounted) {
  const RgvResult r = rgv(std::vector<double>{1.0, 3.0}, std::vector<double>{0.0, 1.0}, 1e-12);
  EXPECT_EQ(r.floored_count, 1u);
  EXPECT_TRUE(std::isfinite(r.values[0]));
  EXPECT_EQ(r.values[0], 1e12);
  EXPECT_EQ(r.values[1], 2.0);
}

TEST(Rgv, ScaleInvariant) {
  Rng rng(1);
  const auto g = testing::random_vector(20, rng, 0.1, 2.0);
  const auto gi = testing::random_vector(20, rng, -2.0, 2.0);
  for (double c : {-3.0, 0.25, 7.0}) {
    std::vector<double> cg(g), cgi(gi);
    for (auto& v : cg) v *= c;
    for (auto& v : cgi) v *= c;
    const auto a = rgv(gi, g, 1e-12).values;
    const auto b = rgv(cgi, cg, 1e-12 * std::abs(c)).values;
    for (std::size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(a[j], b[j], 1e-12 * std::abs(a[j]) + 1e-15);
  }
}

TEST(Rgv, LengthMismatch) {
  EXPECT_THROW(rgv(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), ShapeError);
  EXPECT_THROW(rgv(std::vector<double>{1.0}, std::vector<double>{1.0}, 0.0), Error);
}

TEST(Summary, QuartilesAndOutliers) {
  const std::vector<double> v = {1, 2, 3, 4, 5, 6, 7, 8, 100};
  const DistributionSummary s = summarize(v);
  EXPECT_EQ(s.count, 9u);
  EXPECT_EQ(s.median, 5.0);
  EXPECT_EQ(s.q1, 3.0);
  EXPECT_EQ(s.q3, 7.0);
  EXPECT_EQ(s.outliers, 1u);
  EXPECT_EQ(s.l1, 136.0);
}

GradSnapshot snap(std::vector<double> g) { return GradSnapshot{std::move(g), 0, 0, 1.0}; }

TEST(NoiseVariance, IdenticalSnapshotsGiveZero) {
  const std::vector<GradSnapshot> s = {snap({1, 2}), snap({1, 2}), snap({1, 2})};
  const NoiseVariance n = sgn_variance(s, snap({1, 2}), 8.0);
  EXPECT_EQ(n.sigma, 0.0);
  EXPECT_EQ(n.sigma_rgv, 0.0);
}

TEST(NoiseVariance, PlusMinusDelta) {
  const std::vector<double> g = {0.5, -1.0, 2.0};
  const std::vector<double> delta = {0.1, 0.3, -0.2};
  std::vector<double> up(g), down(g);
  for (std::size_t j = 0; j < g.size(); ++j) up[j] += delta[j], down[j] -= delta[j];
  const double S = 16.0;
  const NoiseVariance n = sgn_variance(std::vector<GradSnapshot>{snap(up), snap(down)}, snap(g), S);
  const double dd = 0.01 + 0.09 + 0.04;
  EXPECT_NEAR(n.sigma, dd / S, 1e-15);
  EXPECT_NEAR(n.sigma_rgv, dd / S, 1e-15);
}

TEST(NoiseVariance, DirectAndRelativeFormsAgree) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(6), dim = 1 + rng.below(30);
    std::vector<GradSnapshot> s;
    for (std::size_t i = 0; i < n; ++i) s.push_back(snap(testing::random_vector(dim, rng, -3, 3)));
    GradSnapshot g = mean_snapshot(s);
    for (auto& v : g.grad)
      if (std::abs(v) < 1e-3) v = 1e-3;
    const NoiseVariance nv = sgn_variance(s, g, 32.0);
    EXPECT_NEAR(nv.sigma, nv.sigma_rgv, 1e-10 * std::max(1.0, std::abs(nv.sigma)));
  }
}

TEST(NoiseVariance, Errors) {
  EXPECT_THROW(sgn_variance(std::vector<GradSnapshot>{snap({1})}, snap({1}), 1.0), Error);
  EXPECT_THROW(sgn_variance(std::vector<GradSnapshot>{snap({1}), snap({1, 2})}, snap({1}), 1.0),
               ShapeError);
}

TransformerConfig tiny() {
  TransformerConfig c;
  c.layers = 1;
  c.d_model = 8;
  c.heads = 2;
  c.ffn_dim = 8;
  c.seq_len = 4;
  return c;
}

TEST(GradChange, IdenticalBatchesGiveZeroAndParamsAreUntouched) {
  const TransformerConfig c = tiny();
  const ParamStore p = init_model(c, 2);
  const ParamStore before = p;
  Rng rng(4);
  const Batch b = testing::random_batch(c, 4, rng);
  const Mask m{PrunableLayout(p)};
  const auto v = retained_grad_change(c, p, m, std::vector<Batch>{b, b, b});
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0], 0.0);
  EXPECT_EQ(v[1], 0.0);
  EXPECT_EQ(p, before);
}

TEST(GradChange, RestrictedToKeptCoordinates) {
  const TransformerConfig c = tiny();
  const ParamStore p = init_model(c, 2);
  Rng rng(5);
  const std::vector<Batch> batches = {testing::random_batch(c, 4, rng), testing::random_batch(c, 4, rng)};
  const PrunableLayout layout(p);
  const Mask dense(layout);
  std::vector<std::uint8_t> none(layout.total(), 0);
  const Mask empty(layout, none);
  EXPECT_GT(retained_grad_change(c, p, dense, batches)[0], 0.0);
  EXPECT_EQ(retained_grad_change(c, p, empty, batches)[0], 0.0);
  const Dataset d = make_parity(16, 4, 1);
  BatchStream s(d, 4, 1);
  EXPECT_THROW(retained_grad_change(c, p, dense, s, 0), Error);
  EXPECT_EQ(retained_grad_change(c, p, dense, s, 3).size(), 3u);
}

}  // namespace
}  // namespace seven
