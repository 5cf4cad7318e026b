#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "seven/tensor.hpp"

namespace seven {

struct Parameter {
  std::string name;
  Tensor value;
  bool prunable = false;

  friend bool operator==(const Parameter&, const Parameter&) = default;
};

// Gradients aligned index-for-index with a ParamStore.
using GradientSet = std::vector<Tensor>;

// Ordered, uniquely named trainable tensors. Iteration order is insertion
// order. The prunable entries, flattened in that order, form the weight
// vector every score and mask refers to.
class ParamStore {
 public:
  void add(std::string name, Tensor value, bool prunable);

  std::size_t size() const noexcept { return entries_.size(); }
  Parameter& operator[](std::size_t i) { return entries_[i]; }
  const Parameter& operator[](std::size_t i) const { return entries_[i]; }
  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& value(const std::string& name) { return entries_[index_of(name)].value; }
  const Tensor& value(const std::string& name) const {
    return entries_[index_of(name)].value;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t prunable_count() const;
  std::size_t total_count() const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<Parameter> entries_;
  std::map<std::string, std::size_t> index_;
};

// Location of one prunable tensor inside the flat weight vector.
struct Segment {
  std::size_t param_index = 0;
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t size = 0;

  // Store position is not part of the identity; a layout read from a
  // checkpoint matches the live one by name, shape and offset.
  friend bool operator==(const Segment& a, const Segment& b) {
    return a.name == b.name && a.shape == b.shape && a.offset == b.offset;
  }
};

class PrunableLayout {
 public:
  PrunableLayout() = default;
  explicit PrunableLayout(const ParamStore& params);
  // Segments in flat order; offsets and sizes are recomputed.
  explicit PrunableLayout(std::vector<Segment> segments);

  const std::vector<Segment>& segments() const noexcept { return segments_; }
  std::size_t total() const noexcept { return total_; }
  // Segment for a store index, or nullptr when that parameter is not prunable.
  const Segment* find(std::size_t param_index) const;

  // Throws ShapeError unless the store's prunable entries match this layout.
  void check_aligned(const ParamStore& params) const;

  std::vector<double> flatten(const ParamStore& params) const;
  std::vector<double> flatten(const GradientSet& grads) const;

  friend bool operator==(const PrunableLayout& a, const PrunableLayout& b) {
    return a.segments_ == b.segments_;
  }

 private:
  std::vector<Segment> segments_;
  std::size_t total_ = 0;
};

}  // namespace seven
