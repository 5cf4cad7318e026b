#include "seven/mask.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "seven/error.hpp"

namespace seven {

Mask::Mask(PrunableLayout layout)
    : layout_(std::move(layout)), keep_(layout_.total(), 1), kept_(layout_.total()) {}

Mask::Mask(PrunableLayout layout, std::vector<std::uint8_t> keep)
    : layout_(std::move(layout)), keep_(std::move(keep)) {
  if (keep_.size() != layout_.total())
    throw ShapeError("mask: " + std::to_string(keep_.size()) + " flags for " +
                     std::to_string(layout_.total()) + " prunable weights");
  for (auto& b : keep_) {
    if (b > 1) throw Error("mask: flags must be 0 or 1");
    kept_ += b;
  }
}

double Mask::density() const {
  return total() == 0 ? 1.0 : static_cast<double>(kept_) / static_cast<double>(total());
}

bool Mask::pruned_subset_of(const Mask& later) const {
  if (later.total() != total()) return false;
  for (std::size_t j = 0; j < total(); ++j)
    if (!keep_[j] && later.keep_[j]) return false;
  return true;
}

ThresholdResult threshold(std::span<const double> scores, double fraction) {
  if (scores.empty()) throw Error("threshold: empty score vector");
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw Error("threshold: fraction must lie in [0, 1]");
  for (double s : scores)
    if (std::isnan(s) || s == std::numeric_limits<double>::infinity())
      throw NumericError("threshold: scores must be finite");
  ThresholdResult r;
  r.order.resize(scores.size());
  std::iota(r.order.begin(), r.order.end(), std::size_t{0});
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  r.pruned = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(scores.size())));
  r.tau = r.pruned == 0 ? -std::numeric_limits<double>::infinity()
          : r.pruned == scores.size() ? std::numeric_limits<double>::infinity()
                                      : scores[r.order[r.pruned]];
  return r;
}

BuiltMask build_mask(const PrunableLayout& layout, std::span<const double> scores,
                     double fraction, const Mask* previous, bool resurrection) {
  if (scores.size() != layout.total())
    throw ShapeError("build_mask: " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(layout.total()) + " prunable weights");
  if (previous && !(previous->layout() == layout))
    throw ShapeError("build_mask: previous mask has a different layout");

  std::vector<double> effective(scores.begin(), scores.end());
  if (previous && !resurrection) {
    const auto want =
        static_cast<std::size_t>(std::floor(fraction * static_cast<double>(scores.size())));
    if (want < previous->pruned()) return BuiltMask{*previous, 0.0, true};
    for (std::size_t j = 0; j < effective.size(); ++j)
      if (!previous->keeps(j)) effective[j] = -std::numeric_limits<double>::infinity();
  }
  const ThresholdResult t = threshold(effective, fraction);
  std::vector<std::uint8_t> keep(scores.size(), 1);
  for (std::size_t k = 0; k < t.pruned; ++k) keep[t.order[k]] = 0;
  return BuiltMask{Mask(layout, std::move(keep)), t.tau, false};
}

namespace {
template <typename Fn>
void for_each_segment(const Mask& mask, std::size_t store_size, Fn&& fn) {
  for (const auto& s : mask.layout().segments()) {
    if (s.param_index >= store_size)
      throw ShapeError("apply_mask: mask refers to missing parameter " + s.name);
    fn(s);
  }
}
}  // namespace

void apply_mask(ParamStore& params, const Mask& mask) {
  mask.layout().check_aligned(params);
  for (const auto& s : mask.layout().segments()) {
    auto& d = params.value(s.name).data();
    for (std::size_t i = 0; i < s.size; ++i)
      if (!mask.keeps(s.offset + i)) d[i] = 0.0;
  }
}

void apply_mask(GradientSet& grads, const Mask& mask) {
  for_each_segment(mask, grads.size(), [&](const Segment& s) {
    auto& d = grads[s.param_index].data();
    if (d.size() != s.size) throw ShapeError("apply_mask: gradient misaligned for " + s.name);
    for (std::size_t i = 0; i < s.size; ++i)
      if (!mask.keeps(s.offset + i)) d[i] = 0.0;
  });
}

Mask rebind(const Mask& mask, const ParamStore& params) {
  mask.layout().check_aligned(params);
  return Mask(PrunableLayout(params), std::vector<std::uint8_t>(mask.bits().begin(), mask.bits().end()));
}

void write_mask(std::ostream& out, const Mask& mask) {
  static constexpr char digits[] = "0123456789abcdef";
  out << "SEVENMASK v1 " << mask.total() << ' ' << mask.kept() << '\n';
  for (const auto& s : mask.layout().segments()) {
    out << s.name << ' ' << s.shape.size();
    for (auto e : s.shape) out << ' ' << e;
    out << ' ';
    for (std::size_t i = 0; i < s.size; i += 4) {
      unsigned nibble = 0;
      for (std::size_t b = 0; b < 4; ++b) {
        nibble <<= 1;
        if (i + b < s.size && mask.keeps(s.offset + i + b)) nibble |= 1u;
      }
      out << digits[nibble];
    }
    out << '\n';
  }
}

Mask read_mask(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("mask checkpoint: empty input");
  std::istringstream hs(line);
  std::string magic, version;
  std::size_t total = 0, kept = 0;
  if (!(hs >> magic >> version >> total >> kept) || magic != "SEVENMASK" || version != "v1")
    throw IoError("mask checkpoint: bad header '" + line + "'");
  std::vector<Segment> segments;
  std::vector<std::uint8_t> keep;
  keep.reserve(total);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Segment s;
    std::size_t rank = 0;
    if (!(ls >> s.name >> rank) || rank == 0)
      throw IoError("mask checkpoint: bad record '" + line.substr(0, 60) + "'");
    s.shape.resize(rank);
    for (auto& e : s.shape)
      if (!(ls >> e) || e == 0) throw IoError("mask checkpoint: bad shape for " + s.name);
    std::string bits;
    ls >> bits;
    const std::size_t n = shape_size(s.shape);
    if (bits.size() != (n + 3) / 4)
      throw IoError("mask checkpoint: bitset length mismatch for " + s.name);
    for (std::size_t i = 0; i < n; ++i) {
      const char c = bits[i / 4];
      int nib = 0;
      if (c >= '0' && c <= '9') nib = c - '0';
      else if (c >= 'a' && c <= 'f') nib = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F') nib = c - 'A' + 10;
      else throw IoError("mask checkpoint: invalid hex digit in " + s.name);
      keep.push_back(static_cast<std::uint8_t>((nib >> (3 - i % 4)) & 1));
    }
    s.param_index = segments.size();
    segments.push_back(std::move(s));
  }
  Mask m(PrunableLayout(std::move(segments)), std::move(keep));
  if (m.total() != total || m.kept() != kept)
    throw IoError("mask checkpoint: header counts disagree with the records");
  return m;
}

}  // namespace seven
