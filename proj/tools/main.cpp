// seven: command-line driver for pruning runs, sweeps, ablations and
// gradient-noise diagnostics.
#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "seven/config.hpp"
#include "seven/error.hpp"
#include "seven/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRunFailure = 3;

struct Common {
  std::string config;
  std::string output;
  std::vector<double> sparsities;
};

seven::RunConfig load(const Common& c) {
  seven::RunConfig cfg = seven::parse_config(c.config);
  if (!c.output.empty()) cfg.output_dir = c.output;
  return cfg;
}

int finish(const seven::RunConfig& cfg, const std::vector<seven::RunOutcome>& outcomes) {
  seven::write_summaries(cfg.output_dir, outcomes);
  std::cout << "wrote " << outcomes.size() << " runs, table at "
            << (std::filesystem::path(cfg.output_dir) / "table.tsv").string() << '\n';
  for (const auto& o : outcomes)
    if (!o.ok) return kRunFailure;
  return kOk;
}

std::vector<std::filesystem::path> run_dirs(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (fs::exists(dir / seven::run_files::config)) return {dir};
  std::vector<fs::path> out;
  if (fs::is_directory(dir))
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory() && fs::exists(e.path() / seven::run_files::mask))
        out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SEVEN pruning laboratory"};
  app.require_subcommand(1);

  Common common;
  std::vector<std::string> methods;
  std::string dir;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("config", common.config, "run configuration file")->required();
    sub->add_option("-o,--output", common.output, "output directory (overrides output_dir)");
  };

  auto* run = app.add_subcommand("run", "train every seed of a configuration");
  add_config(run);

  auto* sweep = app.add_subcommand("sweep", "compare methods across sparsities");
  add_config(sweep);
  sweep->add_option("--methods", methods, "methods to compare")->delimiter(',')->required();
  sweep->add_option("--sparsities", common.sparsities, "target sparsities")->delimiter(',');

  auto* variants = app.add_subcommand("ablate-variants", "score-function variant ablation");
  add_config(variants);
  variants->add_option("--sparsities", common.sparsities, "target sparsities")->delimiter(',');

  auto* resurrect = app.add_subcommand("ablate-resurrection", "mask resurrection ablation");
  add_config(resurrect);
  resurrect->add_option("--sparsities", common.sparsities, "target sparsities")->delimiter(',');

  auto* diagnose = app.add_subcommand("diagnose", "gradient-noise diagnostics for saved runs");
  diagnose->add_option("run-dir", dir, "a run directory or a directory of runs")->required();

  auto* report = app.add_subcommand("report", "diagnostic summaries and plot data");
  report->add_option("run-dir", dir, "a run directory or a directory of runs")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const std::vector<double> pair = {0.6, 0.7};
    if (run->parsed()) {
      const auto cfg = load(common);
      return finish(cfg, seven::run_jobs(seven::expand_seeds(cfg), seven::worker_count()));
    }
    if (sweep->parsed()) {
      const auto cfg = load(common);
      std::vector<seven::Method> ms;
      for (const auto& m : methods) ms.push_back(seven::parse_method(m));
      const auto levels =
          common.sparsities.empty() ? std::vector<double>{cfg.sparsity} : common.sparsities;
      return finish(cfg, seven::run_jobs(seven::sweep_jobs(cfg, ms, levels), seven::worker_count()));
    }
    if (variants->parsed() || resurrect->parsed()) {
      const auto cfg = load(common);
      const auto levels = common.sparsities.empty() ? pair : common.sparsities;
      const auto jobs = variants->parsed() ? seven::variant_jobs(cfg, levels)
                                           : seven::resurrection_jobs(cfg, levels);
      return finish(cfg, seven::run_jobs(jobs, seven::worker_count()));
    }
    if (diagnose->parsed()) {
      const auto runs = run_dirs(dir);
      if (runs.empty()) throw seven::IoError("diagnose: no runs under " + dir);
      int status = kOk;
      for (const auto& r : runs) {
        try {
          const auto d = seven::diagnose_run(r);
          std::cout << r.filename().string() << "  rgv batches " << d.rgv.size() << "  sigma "
                    << d.noise.sigma << '\n';
        } catch (const seven::ConfigError&) {
          throw;
        } catch (const std::exception& e) {
          std::cerr << r.string() << ": " << e.what() << '\n';
          status = kRunFailure;
        }
      }
      return status;
    }
    if (report->parsed()) {
      const auto n = seven::report(dir);
      std::cout << "reported " << n << " runs under " << dir << '\n';
      return kOk;
    }
  } catch (const seven::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRunFailure;
  }
  return kOk;
}
