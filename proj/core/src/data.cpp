#include "seven/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "seven/error.hpp"

namespace seven {

void Dataset::add(std::span<const int> tokens, int label) {
  if (tokens.size() != seq_len_)
    throw ShapeError("dataset: example of length " + std::to_string(tokens.size()) +
                     ", expected " + std::to_string(seq_len_));
  tokens_.insert(tokens_.end(), tokens.begin(), tokens.end());
  labels_.push_back(label);
}

int Dataset::max_token() const {
  return tokens_.empty() ? -1 : *std::max_element(tokens_.begin(), tokens_.end());
}

int Dataset::max_label() const {
  return labels_.empty() ? -1 : *std::max_element(labels_.begin(), labels_.end());
}

Batch Dataset::batch(std::span<const std::size_t> indices) const {
  Batch b;
  b.size = indices.size();
  b.seq_len = seq_len_;
  b.tokens.reserve(indices.size() * seq_len_);
  b.labels.reserve(indices.size());
  for (auto i : indices) {
    if (i >= size()) throw Error("dataset: index out of range");
    auto t = tokens(i);
    b.tokens.insert(b.tokens.end(), t.begin(), t.end());
    b.labels.push_back(labels_[i]);
  }
  return b;
}

Batch Dataset::all() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return batch(idx);
}

std::string_view to_string(Task task) {
  switch (task) {
    case Task::Parity: return "parity";
    case Task::CopyDetection: return "copy_detection";
    case Task::BagOfPatterns: return "bag_of_patterns";
    case Task::File: return "file";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  for (Task t : {Task::Parity, Task::CopyDetection, Task::BagOfPatterns, Task::File})
    if (to_string(t) == name) return t;
  throw ConfigError("task", "unknown task '" + std::string(name) + "'");
}

Dataset make_parity(std::size_t count, std::size_t seq_len, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d(seq_len);
  std::vector<int> tok(seq_len);
  for (std::size_t i = 0; i < count; ++i) {
    int ones = 0;
    for (auto& t : tok) {
      t = static_cast<int>(rng.below(2));
      ones += t;
    }
    d.add(tok, ones % 2);
  }
  return d;
}

Dataset make_copy_detection(std::size_t count, std::size_t seq_len, int vocab,
                            std::uint64_t seed) {
  if (seq_len < 2 || seq_len % 2 != 0)
    throw ConfigError("seq_len", "copy_detection needs an even length >= 2");
  if (vocab < 2) throw ConfigError("vocab", "copy_detection needs at least 2 tokens");
  Rng rng(seed);
  Dataset d(seq_len);
  const std::size_t half = seq_len / 2;
  std::vector<int> tok(seq_len);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t p = 0; p < half; ++p) tok[p] = static_cast<int>(rng.below(vocab));
    std::copy_n(tok.begin(), half, tok.begin() + static_cast<std::ptrdiff_t>(half));
    const int label = static_cast<int>(rng.below(2));
    if (label == 0) {
      const std::size_t pos = half + rng.below(half);
      const int shift = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab - 1)));
      tok[pos] = (tok[pos] + shift) % vocab;
    }
    d.add(tok, label);
  }
  return d;
}

Dataset make_bag_of_patterns(std::size_t count, std::size_t seq_len, int vocab,
                             int classes, std::uint64_t seed) {
  if (classes < 2) throw ConfigError("classes", "bag_of_patterns needs >= 2 classes");
  if (vocab < classes) throw ConfigError("vocab", "bag_of_patterns needs vocab >= classes");
  Rng rng(seed);
  Dataset d(seq_len);
  std::vector<int> tok(seq_len);
  std::vector<int> counts(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < count; ++i) {
    const int target = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    std::fill(counts.begin(), counts.end(), 0);
    for (auto& t : tok) {
      if (rng.uniform() < 0.5) {
        // Tokens congruent to the target class.
        const int members = (vocab - 1 - target) / classes + 1;
        t = target + classes * static_cast<int>(rng.below(static_cast<std::uint64_t>(members)));
      } else {
        t = static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab)));
      }
      ++counts[static_cast<std::size_t>(t % classes)];
    }
    const auto label = std::max_element(counts.begin(), counts.end()) - counts.begin();
    d.add(tok, static_cast<int>(label));
  }
  return d;
}

Dataset load_dataset(const std::filesystem::path& path, std::size_t seq_len) {
  std::ifstream in(path);
  if (!in) throw IoError("dataset: cannot open " + path.string());
  Dataset d(seq_len);
  std::string line;
  std::size_t lineno = 0;
  std::vector<int> tok;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (tab == std::string::npos) throw IoError("dataset: missing tab at " + where);
    tok.clear();
    std::istringstream ids(line.substr(0, tab));
    int v = 0;
    while (ids >> v) {
      if (v < 0) throw IoError("dataset: negative token id at " + where);
      tok.push_back(v);
    }
    if (!ids.eof()) throw IoError("dataset: malformed token id at " + where);
    std::istringstream lab(line.substr(tab + 1));
    int label = 0;
    if (!(lab >> label) || label < 0) throw IoError("dataset: malformed label at " + where);
    std::string rest;
    if (lab >> rest) throw IoError("dataset: trailing data at " + where);
    if (tok.size() != seq_len)
      throw IoError("dataset: " + std::to_string(tok.size()) + " tokens at " + where +
                    ", expected " + std::to_string(seq_len));
    d.add(tok, label);
  }
  return d;
}

BatchStream::BatchStream(const Dataset& data, std::size_t batch_size, std::uint64_t seed)
    : data_(&data), batch_size_(batch_size), per_epoch_(0), rng_(seed) {
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  if (data.size() < batch_size)
    throw ConfigError("batch_size", "larger than the training set (" +
                                        std::to_string(data.size()) + " examples)");
  per_epoch_ = data.size() / batch_size;
  order_.resize(data.size());
  reshuffle();
}

void BatchStream::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  rng_.shuffle(order_);
}

Batch BatchStream::next() {
  const std::span<const std::size_t> idx(order_.data() + cursor_ * batch_size_, batch_size_);
  Batch b = data_->batch(idx);
  if (++cursor_ == per_epoch_) {
    cursor_ = 0;
    ++epoch_;
    reshuffle();
  }
  return b;
}

}  // namespace seven
