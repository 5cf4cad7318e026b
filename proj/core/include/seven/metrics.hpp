#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace seven {

enum class Phase { Dense, Pruning, FineTune };

std::string_view to_string(Phase p);
Phase parse_phase(std::string_view name);

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

// One row of a run's metrics stream. Fields that were not measured at this
// iteration hold kMissing and are written as "nan".
struct MetricsRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string method;
  std::string variant;
  double sparsity = 0.0;
  bool resurrection = false;
  std::size_t iteration = 0;
  Phase phase = Phase::Dense;
  double loss = kMissing;
  double eval_loss = kMissing;
  double eval_accuracy = kMissing;
  double density = 1.0;
  std::size_t kept = 0;
  double score_min = kMissing;
  double score_median = kMissing;
  double score_max = kMissing;
};

// Tab separated, header row first, fixed column order, one record per line.
std::string metrics_header();
std::string format_record(const MetricsRecord& r);
MetricsRecord parse_record(std::string_view line);

void write_metrics(std::ostream& out, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics(std::istream& in);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

// Shortest decimal text that reads back to the same double; "nan" for NaN.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace seven
