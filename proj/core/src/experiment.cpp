#include "seven/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "seven/error.hpp"
#include "seven/metrics.hpp"
#include "seven/rng.hpp"

namespace seven {

namespace {

constexpr std::uint64_t kDiagnosticStream = 4;
constexpr const char* kNotCollected = "not collected";

std::string hex(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double read_hex(std::istream& in, const std::string& what) {
  std::string tok;
  if (!(in >> tok)) throw IoError("params: truncated values for " + what);
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size()) throw IoError("params: bad value '" + tok + "' in " + what);
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

// Everything that determines the prepared starting model and data.
std::string preparation_key(const RunConfig& c) {
  RunConfig k = c;
  k.method = Method::Dense;
  k.variant = ScoreVariant::Seven;
  k.sparsity = 0.0;
  k.K = 1;
  k.t_i = 0;
  k.T = 1;
  k.resurrection = false;
  k.output_dir.clear();
  k.eval_every = 0;
  k.diagnostics = false;
  k.diag_batches = 2;
  k.hyper = ScoreHyper{};
  return write_config(k);
}

struct Prepared {
  DataSplit data;
  ParamStore initial;
};

std::optional<MetricsRecord> last_evaluated(const std::vector<MetricsRecord>& records) {
  for (auto it = records.rbegin(); it != records.rend(); ++it)
    if (!std::isnan(it->eval_accuracy)) return *it;
  return std::nullopt;
}

void write_events(std::ostream& out, const std::vector<PruneEvent>& events) {
  out << "iteration\trate\tkept\ttau\tclamped\n";
  for (const auto& e : events)
    out << e.iteration << '\t' << format_double(e.rate) << '\t' << e.kept << '\t'
        << format_double(e.tau) << '\t' << (e.clamped ? 1 : 0) << '\n';
}

struct Cell {
  std::string method, variant;
  double sparsity = 0.0;
  bool resurrection = false;
  std::vector<double> accuracy, loss;
  std::size_t runs = 0, failed = 0;
};

std::vector<Cell> group(const std::vector<RunOutcome>& outcomes) {
  std::vector<Cell> cells;
  for (const auto& o : outcomes) {
    const auto& c = o.config;
    const std::string method(to_string(c.method));
    const bool scored = c.method == Method::SevenPre || c.method == Method::SevenDyn;
    const std::string variant = scored ? std::string(to_string(c.variant)) : "-";
    auto it = std::find_if(cells.begin(), cells.end(), [&](const Cell& x) {
      return x.method == method && x.variant == variant && x.sparsity == c.sparsity &&
             x.resurrection == c.resurrection;
    });
    if (it == cells.end()) {
      cells.push_back(Cell{method, variant, c.sparsity, c.resurrection, {}, {}, 0, 0});
      it = cells.end() - 1;
    }
    ++it->runs;
    if (!o.ok || !o.final_record) {
      ++it->failed;
      continue;
    }
    it->accuracy.push_back(o.final_record->eval_accuracy);
    it->loss.push_back(o.final_record->eval_loss);
  }
  return cells;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {kMissing, kMissing};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::string fixed(double v, int digits = 4) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct DiagnosticRows {
  std::map<std::string, std::vector<double>> series;
};

DiagnosticRows read_diagnostics(const std::filesystem::path& path) {
  std::istringstream in(slurp(path));
  std::string line;
  if (!std::getline(in, line) || line != "kind\tindex\tvalue")
    throw IoError("diagnostics: unexpected header in " + path.string());
  DiagnosticRows rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.find('\t'), b = line.find('\t', a + 1);
    if (a == std::string::npos || b == std::string::npos)
      throw IoError("diagnostics: malformed row in " + path.string());
    rows.series[line.substr(0, a)].push_back(parse_double(line.substr(b + 1)));
  }
  return rows;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return kMissing;
  std::sort(v.begin(), v.end());
  return quantile(v, 0.5);
}

}  // namespace

void write_params(std::ostream& out, const ParamStore& params) {
  out << "SEVENPARAMS v1 " << params.size() << '\n';
  for (const auto& p : params) {
    out << p.name << ' ' << (p.prunable ? 1 : 0) << ' ' << p.value.shape().size();
    for (auto d : p.value.shape()) out << ' ' << d;
    for (double v : p.value.data()) out << ' ' << hex(v);
    out << '\n';
  }
}

ParamStore read_params(std::istream& in) {
  std::string magic, version;
  std::size_t count = 0;
  if (!(in >> magic >> version >> count) || magic != "SEVENPARAMS" || version != "v1")
    throw IoError("params: bad header");
  ParamStore out;
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    int prunable = 0;
    std::size_t rank = 0;
    if (!(in >> name >> prunable >> rank) || rank == 0 || rank > 4)
      throw IoError("params: bad record " + std::to_string(i));
    Shape shape(rank);
    for (auto& d : shape)
      if (!(in >> d)) throw IoError("params: bad extents for " + name);
    std::vector<double> values(shape_size(shape));
    for (double& v : values) v = read_hex(in, name);
    out.add(name, Tensor(shape, std::move(values)), prunable != 0);
  }
  return out;
}

void save_params(const std::filesystem::path& path, const ParamStore& params) {
  auto out = open_out(path);
  write_params(out, params);
}

ParamStore load_params(const std::filesystem::path& path) {
  std::istringstream in(slurp(path));
  return read_params(in);
}

RunConfig single_seed(const RunConfig& config, std::uint64_t seed) {
  RunConfig c = config;
  c.seeds = {seed};
  return c;
}

void write_run(const std::filesystem::path& dir, const RunConfig& config,
               const RunResult& result) {
  std::filesystem::create_directories(dir);
  open_out(dir / run_files::config) << write_config(config);
  {
    auto out = open_out(dir / run_files::metrics);
    write_metrics(out, result.metrics);
  }
  {
    auto out = open_out(dir / run_files::mask);
    write_mask(out, result.mask);
  }
  {
    auto out = open_out(dir / run_files::events);
    write_events(out, result.prune_events);
  }
  save_params(dir / run_files::initial, result.initial);
  save_params(dir / run_files::final_params, result.final_params);
  std::filesystem::remove(dir / run_files::failure);
}

std::vector<RunConfig> expand_seeds(const RunConfig& config) {
  std::vector<RunConfig> out;
  for (auto seed : config.seeds) out.push_back(single_seed(config, seed));
  return out;
}

std::vector<RunConfig> sweep_jobs(const RunConfig& base, const std::vector<Method>& methods,
                                  const std::vector<double>& sparsities) {
  if (methods.empty()) throw ConfigError("methods", "at least one method is required");
  if (sparsities.empty()) throw ConfigError("sparsity", "at least one sparsity is required");
  std::vector<RunConfig> out;
  for (Method m : methods) {
    const std::vector<double> levels = m == Method::Dense ? std::vector<double>{0.0} : sparsities;
    for (double s : levels) {
      RunConfig c = base;
      c.method = m;
      c.sparsity = s;
      for (auto& job : expand_seeds(c)) out.push_back(std::move(job));
    }
  }
  return out;
}

std::vector<RunConfig> variant_jobs(const RunConfig& base, const std::vector<double>& sparsities) {
  std::vector<RunConfig> out;
  const Method method = base.method == Method::SevenDyn ? Method::SevenDyn : Method::SevenPre;
  for (ScoreVariant v : {ScoreVariant::Seven, ScoreVariant::FirstOnly, ScoreVariant::SecondOnly,
                         ScoreVariant::Product})
    for (double s : sparsities) {
      RunConfig c = base;
      c.method = method;
      c.variant = v;
      c.sparsity = s;
      for (auto& job : expand_seeds(c)) out.push_back(std::move(job));
    }
  return out;
}

std::vector<RunConfig> resurrection_jobs(const RunConfig& base,
                                         const std::vector<double>& sparsities) {
  std::vector<RunConfig> out;
  const Method method = base.method == Method::SevenDyn ? Method::SevenDyn : Method::SevenPre;
  for (bool res : {false, true})
    for (double s : sparsities) {
      RunConfig c = base;
      c.method = method;
      c.resurrection = res;
      c.sparsity = s;
      for (auto& job : expand_seeds(c)) out.push_back(std::move(job));
    }
  return out;
}

std::size_t worker_count() {
  const char* env = std::getenv("SEVEN_WORKERS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("SEVEN_WORKERS", "must be a positive integer");
  return static_cast<std::size_t>(n);
}

std::vector<RunOutcome> run_jobs(const std::vector<RunConfig>& jobs, std::size_t workers) {
  for (const auto& j : jobs) {
    if (j.seeds.size() != 1) throw ConfigError("seeds", "jobs must carry exactly one seed");
    j.validate();
  }

  // Shared data and starting models, one per distinct preparation.
  std::map<std::string, std::size_t> key_index;
  std::vector<const RunConfig*> key_config;
  std::vector<std::size_t> job_key(jobs.size());
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto key = preparation_key(jobs[i]);
    auto [it, inserted] = key_index.emplace(key, key_config.size());
    if (inserted) key_config.push_back(&jobs[i]);
    job_key[i] = it->second;
  }
  std::vector<std::unique_ptr<Prepared>> prepared(key_config.size());
  std::vector<std::exception_ptr> prep_errors(key_config.size());
  parallel_for(key_config.size(), workers, [&](std::size_t k) {
    try {
      const RunConfig& c = *key_config[k];
      auto p = std::make_unique<Prepared>();
      p->data = make_data(c);
      p->initial = prepare_initial(c.model, p->data.train, c.plan(c.seeds.front()));
      prepared[k] = std::move(p);
    } catch (...) {
      prep_errors[k] = std::current_exception();
    }
  });
  for (auto& e : prep_errors)
    if (e) {
      try {
        std::rethrow_exception(e);
      } catch (const ConfigError&) {
        throw;
      } catch (...) {
        // Non-configuration failures are reported per job below.
      }
    }

  std::vector<RunOutcome> outcomes(jobs.size());
  std::mutex log_mutex;
  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    const RunConfig& c = jobs[i];
    const RunPlan plan = c.plan(c.seeds.front());
    RunOutcome& o = outcomes[i];
    o.config = c;
    o.run_id = plan.run_id;
    o.dir = std::filesystem::path(c.output_dir) / plan.run_id;
    try {
      const Prepared* p = prepared[job_key[i]].get();
      if (!p) std::rethrow_exception(prep_errors[job_key[i]]);
      const RunResult result = run_plan(c.model, p->data, plan, &p->initial);
      write_run(o.dir, c, result);
      o.final_record = last_evaluated(result.metrics);
      o.ok = true;
      if (c.diagnostics) diagnose_run(o.dir);
    } catch (const RunFailure& e) {
      o.error = e.what();
      std::filesystem::create_directories(o.dir);
      auto out = open_out(o.dir / run_files::metrics);
      write_metrics(out, e.partial());
      open_out(o.dir / run_files::config) << write_config(c);
      open_out(o.dir / run_files::failure) << e.what() << '\n';
    } catch (const std::exception& e) {
      o.error = e.what();
      std::filesystem::create_directories(o.dir);
      open_out(o.dir / run_files::failure) << e.what() << '\n';
    }
    std::lock_guard lock(log_mutex);
    std::clog << (o.ok ? "done   " : "FAILED ") << o.run_id;
    if (o.final_record) std::clog << "  accuracy " << fixed(o.final_record->eval_accuracy);
    if (!o.ok) std::clog << "  " << o.error;
    std::clog << '\n';
  });
  return outcomes;
}

void write_table(std::ostream& out, const std::vector<RunOutcome>& outcomes) {
  out << "method\tvariant\tsparsity\tresurrection\truns\tfailed\taccuracy_mean\taccuracy_std"
         "\tloss_mean\tloss_std\tstatus\n";
  for (const auto& c : group(outcomes)) {
    const auto [am, as] = mean_std(c.accuracy);
    const auto [lm, ls] = mean_std(c.loss);
    out << c.method << '\t' << c.variant << '\t' << format_double(c.sparsity) << '\t'
        << (c.resurrection ? 1 : 0) << '\t' << c.runs << '\t' << c.failed << '\t' << fixed(am)
        << '\t' << fixed(as) << '\t' << fixed(lm) << '\t' << fixed(ls) << '\t'
        << (c.failed ? "FAILED" : "ok") << '\n';
  }
}

void write_plot(std::ostream& out, const std::vector<RunOutcome>& outcomes) {
  out << "method\tx\ty\ty_std\n";
  for (const auto& c : group(outcomes)) {
    std::string tag = c.method;
    if (c.variant != "-") tag += ':' + c.variant;
    if (c.resurrection) tag += ":res";
    const auto [am, as] = mean_std(c.accuracy);
    out << tag << '\t' << format_double(c.sparsity) << '\t' << fixed(am) << '\t' << fixed(as)
        << '\n';
  }
}

void write_summaries(const std::filesystem::path& dir, const std::vector<RunOutcome>& outcomes) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "table.tsv");
    write_table(out, outcomes);
  }
  auto out = open_out(dir / "plot.tsv");
  write_plot(out, outcomes);
}

RunDiagnostics diagnose(const TransformerConfig& cfg, const ParamStore& initial,
                        const Mask& mask, const Dataset& data, std::size_t batch_size,
                        std::size_t batches, std::uint64_t seed) {
  if (batches < 2) throw ConfigError("diag_batches", "diagnostics need at least 2 batches");
  BatchStream stream(data, batch_size, derive_seed(seed, kDiagnosticStream));
  std::vector<Batch> sample;
  for (std::size_t i = 0; i < batches; ++i) sample.push_back(stream.next());

  const auto full = capture_snapshots(cfg, initial, mask, sample);
  std::vector<GradSnapshot> kept;
  for (const auto& s : full)
    kept.push_back(GradSnapshot{kept_coordinates(s.grad, mask), s.batch_id, s.iteration,
                                s.density});
  const GradSnapshot g = mean_snapshot(kept);

  RunDiagnostics d;
  d.batches = batches;
  d.density = mask.density();
  for (const auto& s : kept) d.rgv.push_back(rgv(s, g));
  d.noise = sgn_variance(kept, g, static_cast<double>(batch_size));
  for (std::size_t t = 0; t + 1 < full.size(); ++t) {
    double norm = 0.0;
    for (std::size_t j = 0; j < mask.total(); ++j)
      if (mask.keeps(j)) norm += std::abs(full[t + 1].grad[j] - full[t].grad[j]);
    d.grad_change.push_back(norm);
  }
  return d;
}

void write_diagnostics(std::ostream& out, const RunDiagnostics& d) {
  out << "kind\tindex\tvalue\n";
  auto row = [&](const char* kind, std::size_t i, double v) {
    out << kind << '\t' << i << '\t' << format_double(v) << '\n';
  };
  row("density", 0, d.density);
  row("batches", 0, static_cast<double>(d.batches));
  for (std::size_t i = 0; i < d.rgv.size(); ++i) {
    const auto& s = d.rgv[i].summary;
    row("rgv_l1", i, s.l1);
    row("rgv_q1", i, s.q1);
    row("rgv_median", i, s.median);
    row("rgv_q3", i, s.q3);
    row("rgv_outliers", i, static_cast<double>(s.outliers));
    row("rgv_floored", i, static_cast<double>(d.rgv[i].floored_count));
  }
  for (std::size_t i = 0; i < d.grad_change.size(); ++i) row("grad_change", i, d.grad_change[i]);
  row("sigma", 0, d.noise.sigma);
  row("sigma_rgv", 0, d.noise.sigma_rgv);
}

RunDiagnostics diagnose_run(const std::filesystem::path& dir) {
  const RunConfig c = parse_config(dir / run_files::config);
  const ParamStore initial = load_params(dir / run_files::initial);
  std::istringstream mask_text(slurp(dir / run_files::mask));
  const Mask mask = rebind(read_mask(mask_text), initial);
  const DataSplit data = make_data(c);
  const RunDiagnostics d = diagnose(c.model, initial, mask, data.train, c.batch_size,
                                    std::max<std::size_t>(c.diag_batches, 2), c.seeds.front());
  auto out = open_out(dir / run_files::diagnostics);
  write_diagnostics(out, d);
  return d;
}

std::size_t report(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> runs;
  if (std::filesystem::exists(dir / run_files::metrics)) {
    runs.push_back(dir);
  } else {
    if (!std::filesystem::is_directory(dir)) throw IoError("report: no such directory " + dir.string());
    for (const auto& entry : std::filesystem::directory_iterator(dir))
      if (entry.is_directory() && std::filesystem::exists(entry.path() / run_files::metrics))
        runs.push_back(entry.path());
    std::sort(runs.begin(), runs.end());
  }

  auto summary = open_out(dir / "diagnostics_report.tsv");
  auto rgv_plot = open_out(dir / "rgv_plot.tsv");
  auto change_plot = open_out(dir / "grad_change_plot.tsv");
  summary << "run_id\tmethod\tvariant\tsparsity\tseed\taccuracy\tdiagnostics\trgv_l1_median"
             "\trgv_q1_median\trgv_q3_median\trgv_outliers\tgrad_change_median\tsigma\n";
  rgv_plot << "method\tx\ty\n";
  change_plot << "method\tx\ty\n";
  for (const auto& run : runs) {
    const auto records = read_metrics(run / run_files::metrics);
    if (records.empty()) continue;
    const auto final_record = last_evaluated(records);
    const MetricsRecord& r = final_record ? *final_record : records.back();
    const std::string tag = r.method + (r.variant == "-" ? "" : ":" + r.variant) + ":s" +
                            format_double(r.sparsity);
    summary << r.run_id << '\t' << r.method << '\t' << r.variant << '\t'
            << format_double(r.sparsity) << '\t' << r.seed << '\t' << fixed(r.eval_accuracy)
            << '\t';
    const auto diag_path = run / run_files::diagnostics;
    if (!std::filesystem::exists(diag_path)) {
      summary << kNotCollected;
      for (int i = 0; i < 6; ++i) summary << '\t' << kNotCollected;
      summary << '\n';
      continue;
    }
    const auto rows = read_diagnostics(diag_path);
    auto series = [&](const char* k) {
      auto it = rows.series.find(k);
      return it == rows.series.end() ? std::vector<double>{} : it->second;
    };
    const auto l1 = series("rgv_l1");
    const auto change = series("grad_change");
    double outliers = 0.0;
    for (double v : series("rgv_outliers")) outliers += v;
    const auto sigma = series("sigma");
    summary << "collected\t" << format_double(median_of(l1)) << '\t'
            << format_double(median_of(series("rgv_q1"))) << '\t'
            << format_double(median_of(series("rgv_q3"))) << '\t' << format_double(outliers)
            << '\t' << format_double(median_of(change)) << '\t'
            << format_double(sigma.empty() ? kMissing : sigma.front()) << '\n';
    for (std::size_t i = 0; i < l1.size(); ++i)
      rgv_plot << tag << '\t' << i << '\t' << format_double(l1[i]) << '\n';
    for (std::size_t i = 0; i < change.size(); ++i)
      change_plot << tag << '\t' << i << '\t' << format_double(change[i]) << '\n';
  }
  return runs.size();
}

}  // namespace seven
