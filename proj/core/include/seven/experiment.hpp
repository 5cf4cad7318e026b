#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "seven/config.hpp"
#include "seven/diagnostics.hpp"
#include "seven/runner.hpp"

namespace seven {

// Exact text checkpoint of a parameter store: `SEVENPARAMS v1 <count>`, then
// per tensor `<name> <prunable> <rank> <extents...> <values as hex floats>`.
void write_params(std::ostream& out, const ParamStore& params);
ParamStore read_params(std::istream& in);
void save_params(const std::filesystem::path& path, const ParamStore& params);
ParamStore load_params(const std::filesystem::path& path);

// Files in a run directory.
namespace run_files {
inline constexpr const char* config = "config.cfg";
inline constexpr const char* metrics = "metrics.tsv";
inline constexpr const char* mask = "mask.txt";
inline constexpr const char* initial = "init_params.txt";
inline constexpr const char* final_params = "final_params.txt";
inline constexpr const char* events = "prune_events.tsv";
inline constexpr const char* diagnostics = "diagnostics.tsv";
inline constexpr const char* failure = "FAILED";
}  // namespace run_files

// Config for a single seed, as saved beside the run.
RunConfig single_seed(const RunConfig& config, std::uint64_t seed);

struct RunOutcome {
  RunConfig config;  // single seed
  std::string run_id;
  std::filesystem::path dir;
  bool ok = false;
  std::string error;
  // Last metrics record carrying an evaluation; empty on early failure.
  std::optional<MetricsRecord> final_record;
};

// Writes every artifact of a finished run into dir.
void write_run(const std::filesystem::path& dir, const RunConfig& config,
               const RunResult& result);

// Runs every (config, seed) job up to `workers` at a time, writing each run
// under config.output_dir/<run_id>. Seeds share one prepared initial model
// across all jobs. Failures are recorded, not thrown.
std::vector<RunOutcome> run_jobs(const std::vector<RunConfig>& jobs, std::size_t workers);

// Expands a config into single-seed jobs.
std::vector<RunConfig> expand_seeds(const RunConfig& config);
std::vector<RunConfig> sweep_jobs(const RunConfig& base, const std::vector<Method>& methods,
                                  const std::vector<double>& sparsities);
std::vector<RunConfig> variant_jobs(const RunConfig& base, const std::vector<double>& sparsities);
std::vector<RunConfig> resurrection_jobs(const RunConfig& base,
                                         const std::vector<double>& sparsities);

// Worker count from SEVEN_WORKERS, defaulting to 1.
std::size_t worker_count();

// Mean and sample std of final accuracy per (method, variant, sparsity,
// resurrection), failures marked. Numbers come from the runs' records only.
void write_table(std::ostream& out, const std::vector<RunOutcome>& outcomes);
// Plot data: one row per cell, x = sparsity, y = mean accuracy, tagged.
void write_plot(std::ostream& out, const std::vector<RunOutcome>& outcomes);
void write_summaries(const std::filesystem::path& dir, const std::vector<RunOutcome>& outcomes);

struct RunDiagnostics {
  std::vector<RgvResult> rgv;       // one per batch, kept coordinates only
  NoiseVariance noise;
  std::vector<double> grad_change;  // consecutive-batch L1 norms
  std::size_t batches = 0;
  double density = 1.0;
};

// Gradient-noise diagnostics on the initial model under the run's final
// mask, without parameter updates.
RunDiagnostics diagnose(const TransformerConfig& cfg, const ParamStore& initial,
                        const Mask& mask, const Dataset& data, std::size_t batch_size,
                        std::size_t batches, std::uint64_t seed);
// Same, loading everything from a run directory; writes diagnostics.tsv.
RunDiagnostics diagnose_run(const std::filesystem::path& dir);
void write_diagnostics(std::ostream& out, const RunDiagnostics& d);

// Per-run diagnostic summaries and plot data for every run under dir.
// Runs without diagnostics are listed as "not collected". Returns the
// number of runs found.
std::size_t report(const std::filesystem::path& dir);

}  // namespace seven
