#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "seven/data.hpp"
#include "seven/model.hpp"
#include "seven/runner.hpp"

namespace seven {

struct DataConfig {
  Task task = Task::Parity;
  std::string data_path;  // file task only
  std::string val_path;   // file task only
  std::size_t train_size = 1024;
  std::size_t val_size = 256;
  std::uint64_t data_seed = 0;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct RunConfig {
  TransformerConfig model;
  DataConfig data;
  Method method = Method::SevenPre;
  ScoreVariant variant = ScoreVariant::Seven;
  double sparsity = 0.0;
  std::size_t K = 100;
  std::size_t t_i = 0;
  std::size_t T = 1000;
  bool resurrection = false;
  ScoreHyper hyper;
  OptimizerConfig optimizer;
  std::size_t batch_size = 32;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";
  std::size_t pretrain_steps = 0;
  double pretrain_lr = 0.0;
  std::size_t eval_every = 0;
  bool diagnostics = false;
  std::size_t diag_batches = 8;

  // Throws ConfigError naming the first offending key.
  void validate() const;
  RunPlan plan(std::uint64_t seed) const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Flat `key = value` lines; `#` starts a comment. Unknown, duplicate or
// missing required keys (method, sparsity, T, seeds) raise ConfigError.
RunConfig parse_config_text(std::string_view text);
RunConfig parse_config(const std::filesystem::path& path);
// Every key, in a stable order; parse_config_text reads it back unchanged.
std::string write_config(const RunConfig& config);

// Generated or loaded train and validation sets for a config.
DataSplit make_data(const RunConfig& config);

}  // namespace seven
