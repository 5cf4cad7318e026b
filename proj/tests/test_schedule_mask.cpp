#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "seven/error.hpp"
#include "seven/mask.hpp"
#include "seven/model.hpp"
#include "seven/schedule.hpp"
#include "support.hpp"

namespace seven {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(Schedule, ExponentialEndpointsAndShape) {
  for (double s : {0.0, 0.3, 0.6, 0.9, 0.99}) {
    for (std::size_t k : {1u, 7u, 100u}) {
      EXPECT_EQ(rate_exponential(s, k, k), s);
      double prev = 0.0;
      for (std::size_t t = 1; t <= k; ++t) {
        const double r = rate_exponential(s, t, k);
        EXPECT_GE(r, prev);
        EXPECT_LE(r, s);
        // Kept fraction shrinks geometrically.
        EXPECT_NEAR(1.0 - r, std::pow(1.0 - s, static_cast<double>(t) / k), 1e-15);
        prev = r;
      }
    }
  }
}

TEST(Schedule, CubicEndpointsAndShape) {
  for (double s : {0.0, 0.5, 0.8}) {
    EXPECT_EQ(rate_cubic(s, 800, 200, 600), s);
    EXPECT_NEAR(rate_cubic(s, 500, 200, 600), s * 0.125, 1e-15);
    double prev = 0.0;
    for (std::size_t t = 201; t <= 800; ++t) {
      const double r = rate_cubic(s, t, 200, 600);
      EXPECT_GE(r, prev);
      prev = r;
    }
  }
}

TEST(Schedule, RejectsOutOfRange) {
  EXPECT_THROW(rate_exponential(0.5, 0, 10), Error);
  EXPECT_THROW(rate_exponential(0.5, 11, 10), Error);
  EXPECT_THROW(rate_exponential(1.0, 1, 10), ConfigError);
  EXPECT_THROW(rate_exponential(-0.1, 1, 10), ConfigError);
  EXPECT_THROW(rate_exponential(0.5, 1, 0), ConfigError);
  EXPECT_THROW(rate_cubic(0.5, 200, 200, 600), Error);
  EXPECT_THROW(rate_cubic(0.5, 801, 200, 600), Error);
  SparsitySchedule sch{ScheduleKind::Cubic, 0.5, 600, 200};
  EXPECT_FALSE(sch.active(200));
  EXPECT_TRUE(sch.active(201));
  EXPECT_TRUE(sch.active(800));
  EXPECT_FALSE(sch.active(801));
}

PrunableLayout layout_of(std::vector<std::size_t> sizes) {
  std::vector<Segment> segs;
  for (std::size_t i = 0; i < sizes.size(); ++i)
    segs.push_back(Segment{i, "w" + std::to_string(i), Shape{sizes[i]}, 0, 0});
  return PrunableLayout(std::move(segs));
}

TEST(Threshold, PrunesExactCountLowestFirstWithStableTies) {
  const std::vector<double> s = {0.5, 0.1, 0.5, 0.5, 0.9};
  const ThresholdResult t = threshold(s, 0.6);
  EXPECT_EQ(t.pruned, 3u);
  // 0.1, then ties on 0.5 by index: 0 and 2. Index 3 survives.
  EXPECT_EQ(std::vector<std::size_t>(t.order.begin(), t.order.begin() + 3),
            (std::vector<std::size_t>{1, 0, 2}));
  EXPECT_EQ(t.tau, 0.5);
  EXPECT_EQ(threshold(s, 0.0).tau, -kInf);
  EXPECT_EQ(threshold(s, 1.0).tau, kInf);
  EXPECT_EQ(threshold(s, 1.0).pruned, 5u);
}

TEST(Threshold, AllEqualScoresPruneLowestIndices) {
  const std::vector<double> s(10, 1.0);
  const ThresholdResult t = threshold(s, 0.4);
  for (std::size_t k = 0; k < t.pruned; ++k) EXPECT_EQ(t.order[k], k);
}

TEST(Threshold, RejectsBadScores) {
  EXPECT_THROW(threshold(std::vector<double>{}, 0.5), Error);
  EXPECT_THROW(threshold(std::vector<double>{1.0, std::nan("")}, 0.5), NumericError);
  EXPECT_THROW(threshold(std::vector<double>{1.0, kInf}, 0.5), NumericError);
  EXPECT_NO_THROW(threshold(std::vector<double>{1.0, -kInf}, 0.5));
}

TEST(Mask, KeepsHighScores) {
  const PrunableLayout lay = layout_of({4});
  const std::vector<double> s = {3.0, 1.0, 4.0, 2.0};
  const BuiltMask m = build_mask(lay, s, 0.5, nullptr, false);
  EXPECT_EQ(std::vector<std::uint8_t>(m.mask.bits().begin(), m.mask.bits().end()),
            (std::vector<std::uint8_t>{1, 0, 1, 0}));
  EXPECT_EQ(m.mask.kept(), 2u);
  EXPECT_DOUBLE_EQ(m.mask.density(), 0.5);
}

TEST(Mask, WithoutResurrectionPrunedSetsNest) {
  Rng rng(3);
  const PrunableLayout lay = layout_of({30, 20});
  Mask mask(lay);
  for (std::size_t t = 1; t <= 20; ++t) {
    const auto scores = testing::random_vector(50, rng, 0, 1);
    const BuiltMask next = build_mask(lay, scores, rate_exponential(0.8, t, 20), &mask, false);
    EXPECT_TRUE(mask.pruned_subset_of(next.mask)) << "step " << t;
    mask = next.mask;
  }
  EXPECT_EQ(mask.pruned(), 40u);
}

TEST(Mask, WithResurrectionPrunedWeightsCanReturn) {
  const PrunableLayout lay = layout_of({4});
  const BuiltMask first = build_mask(lay, std::vector<double>{1, 2, 3, 4}, 0.5, nullptr, true);
  const BuiltMask second =
      build_mask(lay, std::vector<double>{4, 3, 2, 1}, 0.5, &first.mask, true);
  EXPECT_TRUE(second.mask.keeps(0));
  EXPECT_FALSE(first.mask.pruned_subset_of(second.mask));
  const BuiltMask frozen =
      build_mask(lay, std::vector<double>{4, 3, 2, 1}, 0.5, &first.mask, false);
  EXPECT_EQ(frozen.mask, first.mask);
}

TEST(Mask, LowerRateWithoutResurrectionKeepsPreviousMask) {
  const PrunableLayout lay = layout_of({10});
  const std::vector<double> s = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const BuiltMask a = build_mask(lay, s, 0.5, nullptr, false);
  const BuiltMask b = build_mask(lay, s, 0.3, &a.mask, false);
  EXPECT_TRUE(b.clamped);
  EXPECT_EQ(b.mask, a.mask);
}

TEST(Mask, ApplyZeroesPrunedCoordinatesOnly) {
  TransformerConfig c;
  c.layers = 1;
  c.d_model = 4;
  c.heads = 2;
  c.ffn_dim = 4;
  c.seq_len = 2;
  ParamStore p = init_model(c, 1);
  const PrunableLayout lay(p);
  Rng rng(2);
  const BuiltMask m = build_mask(lay, testing::random_vector(lay.total(), rng), 0.5, nullptr, false);
  const ParamStore before = p;
  apply_mask(p, m.mask);
  const auto flat = lay.flatten(p);
  const auto orig = lay.flatten(before);
  for (std::size_t j = 0; j < flat.size(); ++j)
    EXPECT_EQ(flat[j], m.mask.keeps(j) ? orig[j] : 0.0);
  EXPECT_EQ(p.value("layer0.ln1.gain"), before.value("layer0.ln1.gain"));
}

TEST(Mask, CheckpointRoundTrip) {
  const PrunableLayout lay = layout_of({13, 8, 1});
  Rng rng(5);
  const BuiltMask m = build_mask(lay, testing::random_vector(22, rng), 0.45, nullptr, false);
  std::stringstream buf;
  write_mask(buf, m.mask);
  const std::string text = buf.str();
  EXPECT_EQ(text.rfind("SEVENMASK v1 22 ", 0), 0u);
  const Mask back = read_mask(buf);
  EXPECT_EQ(back.total(), m.mask.total());
  EXPECT_EQ(std::vector<std::uint8_t>(back.bits().begin(), back.bits().end()),
            std::vector<std::uint8_t>(m.mask.bits().begin(), m.mask.bits().end()));
  EXPECT_TRUE(back.layout() == lay);
}

TEST(Mask, CheckpointBitPacking) {
  const PrunableLayout lay = layout_of({5});
  const Mask m(lay, {1, 0, 1, 1, 0});
  std::stringstream buf;
  write_mask(buf, m);
  // 10110 padded to 1011 0000.
  EXPECT_EQ(buf.str(), "SEVENMASK v1 5 3\nw0 1 5 b0\n");
}

TEST(Mask, CorruptCheckpointsAreRejected) {
  std::istringstream bad_header("SEVENMASK v2 5 3\nw0 1 5 b0\n");
  EXPECT_THROW(read_mask(bad_header), IoError);
  std::istringstream bad_hex("SEVENMASK v1 5 3\nw0 1 5 z0\n");
  EXPECT_THROW(read_mask(bad_hex), IoError);
  std::istringstream bad_count("SEVENMASK v1 5 4\nw0 1 5 b0\n");
  EXPECT_THROW(read_mask(bad_count), IoError);
  std::istringstream short_bits("SEVENMASK v1 5 3\nw0 1 5 b\n");
  EXPECT_THROW(read_mask(short_bits), IoError);
}

TEST(Mask, LayoutMismatchIsAnError) {
  const PrunableLayout a = layout_of({4});
  const PrunableLayout b = layout_of({5});
  EXPECT_THROW(build_mask(a, std::vector<double>(5, 1.0), 0.5, nullptr, false), ShapeError);
  const Mask prev(b);
  EXPECT_THROW(build_mask(a, std::vector<double>(4, 1.0), 0.5, &prev, false), ShapeError);
}

}  // namespace
}  // namespace seven
