#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "seven/param_store.hpp"

namespace seven {

// Binary keep/prune flags over the flattened prunable weights of a store.
// Non-prunable parameters are implicitly always kept.
class Mask {
 public:
  Mask() = default;
  // All ones.
  explicit Mask(PrunableLayout layout);
  Mask(PrunableLayout layout, std::vector<std::uint8_t> keep);

  const PrunableLayout& layout() const noexcept { return layout_; }
  std::size_t total() const noexcept { return keep_.size(); }
  std::size_t kept() const noexcept { return kept_; }
  std::size_t pruned() const noexcept { return total() - kept_; }
  double density() const;
  bool keeps(std::size_t j) const { return keep_[j] != 0; }
  std::span<const std::uint8_t> bits() const noexcept { return keep_; }

  // True when every coordinate pruned here is also pruned in `later`.
  bool pruned_subset_of(const Mask& later) const;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  PrunableLayout layout_;
  std::vector<std::uint8_t> keep_;
  std::size_t kept_ = 0;
};

struct ThresholdResult {
  // Lowest kept score, or -infinity when nothing is pruned.
  double tau = 0.0;
  std::size_t pruned = 0;
  // Coordinates in pruning order: ascending score, ties by ascending index.
  // The first `pruned` entries are removed.
  std::vector<std::size_t> order;
};

// Removes exactly floor(fraction * w) of the w scores, lowest first.
ThresholdResult threshold(std::span<const double> scores, double fraction);

struct BuiltMask {
  Mask mask;
  double tau = 0.0;
  // Set when no-resurrection kept the previous mask because the requested
  // fraction was below the already-pruned fraction.
  bool clamped = false;
};

// Keeps the top (1 - fraction) scores. Without resurrection, coordinates
// pruned in `previous` compete with score -infinity so the pruned set only
// grows; with resurrection every coordinate competes afresh.
BuiltMask build_mask(const PrunableLayout& layout, std::span<const double> scores,
                     double fraction, const Mask* previous, bool resurrection);

// Zeroes pruned coordinates of the store's prunable parameters.
void apply_mask(ParamStore& params, const Mask& mask);
// Zeroes pruned coordinates of a gradient set aligned with the store. The
// mask layout must carry store indices (built from the store, or rebound).
void apply_mask(GradientSet& grads, const Mask& mask);

// Re-derives the layout of a checkpointed mask from a live store so that
// store indices are valid. Throws ShapeError on any name or shape mismatch.
Mask rebind(const Mask& mask, const ParamStore& params);

// Checkpoint: `SEVENMASK v1 <total> <kept>` followed by one record per
// prunable tensor: `<name> <rank> <extents...> <hex>`. Bits are packed four
// per hex digit, first coordinate in the most significant bit, zero padded.
void write_mask(std::ostream& out, const Mask& mask);
Mask read_mask(std::istream& in);

}  // namespace seven
