#include "seven/param_store.hpp"

#include "seven/error.hpp"

namespace seven {

void ParamStore::add(std::string name, Tensor value, bool prunable) {
  if (index_.count(name)) throw Error("param store: duplicate parameter " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back(Parameter{std::move(name), std::move(value), prunable});
}

std::size_t ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("param store: no parameter named " + name);
  return it->second;
}

std::size_t ParamStore::prunable_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_)
    if (p.prunable) n += p.value.size();
  return n;
}

std::size_t ParamStore::total_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.value.size();
  return n;
}

PrunableLayout::PrunableLayout(const ParamStore& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].prunable) continue;
    segments_.push_back(Segment{i, params[i].name, params[i].value.shape(), total_,
                                params[i].value.size()});
    total_ += params[i].value.size();
  }
}

PrunableLayout::PrunableLayout(std::vector<Segment> segments)
    : segments_(std::move(segments)) {
  for (auto& s : segments_) {
    s.offset = total_;
    s.size = shape_size(s.shape);
    total_ += s.size;
  }
}

const Segment* PrunableLayout::find(std::size_t param_index) const {
  for (const auto& s : segments_)
    if (s.param_index == param_index) return &s;
  return nullptr;
}

void PrunableLayout::check_aligned(const ParamStore& params) const {
  std::size_t k = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].prunable) continue;
    if (k >= segments_.size() || segments_[k].name != params[i].name ||
        segments_[k].shape != params[i].value.shape())
      throw ShapeError("layout: prunable parameter " + params[i].name +
                       " does not match the mask layout");
    ++k;
  }
  if (k != segments_.size())
    throw ShapeError("layout: mask has " + std::to_string(segments_.size()) +
                     " tensors, store has " + std::to_string(k) + " prunable");
}

std::vector<double> PrunableLayout::flatten(const ParamStore& params) const {
  std::vector<double> out;
  out.reserve(total_);
  for (const auto& s : segments_) {
    const auto& d = params[s.param_index].value.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

std::vector<double> PrunableLayout::flatten(const GradientSet& grads) const {
  std::vector<double> out;
  out.reserve(total_);
  for (const auto& s : segments_) {
    if (s.param_index >= grads.size() || grads[s.param_index].size() != s.size)
      throw ShapeError("layout: gradient for " + s.name + " missing or misshaped");
    const auto& d = grads[s.param_index].data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

}  // namespace seven
