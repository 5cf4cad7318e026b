#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seven/rng.hpp"

namespace seven {

// A contiguous block of examples: tokens is size x seq_len, row-major.
struct Batch {
  std::size_t size = 0;
  std::size_t seq_len = 0;
  std::vector<int> tokens;
  std::vector<int> labels;
};

class Dataset {
 public:
  explicit Dataset(std::size_t seq_len = 0) : seq_len_(seq_len) {}

  void add(std::span<const int> tokens, int label);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t seq_len() const noexcept { return seq_len_; }
  std::span<const int> tokens(std::size_t i) const {
    return std::span<const int>(tokens_).subspan(i * seq_len_, seq_len_);
  }
  int label(std::size_t i) const { return labels_[i]; }
  int max_token() const;
  int max_label() const;

  Batch batch(std::span<const std::size_t> indices) const;
  Batch all() const;

 private:
  std::size_t seq_len_;
  std::vector<int> tokens_;
  std::vector<int> labels_;
};

struct DataSplit {
  Dataset train;
  Dataset validation;
};

enum class Task { Parity, CopyDetection, BagOfPatterns, File };

std::string_view to_string(Task task);
Task parse_task(std::string_view name);

// Binary tokens; label is the number of ones modulo two.
Dataset make_parity(std::size_t count, std::size_t seq_len, std::uint64_t seed);
// Label 1 when the second half repeats the first half, 0 when exactly one
// position of the copy was altered. seq_len must be even.
Dataset make_copy_detection(std::size_t count, std::size_t seq_len, int vocab,
                            std::uint64_t seed);
// Label is the residue class (token mod classes) occurring most often,
// ties resolved toward the smaller class.
Dataset make_bag_of_patterns(std::size_t count, std::size_t seq_len, int vocab,
                             int classes, std::uint64_t seed);

// One example per line: whitespace separated integer token ids, a tab, then
// an integer label. Blank lines and lines starting with '#' are skipped.
Dataset load_dataset(const std::filesystem::path& path, std::size_t seq_len);

// Epoch-wise seeded permutation of a dataset, yielding fixed-size batches.
// A trailing partial batch is dropped.
class BatchStream {
 public:
  BatchStream(const Dataset& data, std::size_t batch_size, std::uint64_t seed);

  Batch next();
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batches_per_epoch() const noexcept { return per_epoch_; }
  // True when the batch most recently returned by next() closed an epoch.
  bool epoch_finished() const noexcept { return cursor_ == 0 && epoch_ > 0; }

 private:
  void reshuffle();

  const Dataset* data_;
  std::size_t batch_size_;
  std::size_t per_epoch_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace seven
