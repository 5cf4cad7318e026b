#include "seven/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "seven/error.hpp"

namespace seven {

namespace {
constexpr std::size_t kColumns = 16;

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

template <typename T>
T parse_integer(std::string_view s, const char* what) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw IoError(std::string("metrics: bad ") + what + " '" + std::string(s) + "'");
  return v;
}
}  // namespace

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Dense: return "dense";
    case Phase::Pruning: return "pruning";
    case Phase::FineTune: return "fine-tune";
  }
  return "?";
}

Phase parse_phase(std::string_view name) {
  for (Phase p : {Phase::Dense, Phase::Pruning, Phase::FineTune})
    if (to_string(p) == name) return p;
  throw IoError("metrics: unknown phase '" + std::string(name) + "'");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

double parse_double(std::string_view text) {
  if (text == "nan") return kMissing;
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size())
    throw IoError("metrics: bad number '" + std::string(text) + "'");
  return v;
}

std::string metrics_header() {
  return "run_id\tseed\tmethod\tvariant\tsparsity\tresurrection\titeration\tphase\tloss\t"
         "eval_loss\teval_accuracy\tdensity\tkept\tscore_min\tscore_median\tscore_max";
}

std::string format_record(const MetricsRecord& r) {
  std::string s;
  s += r.run_id + '\t' + std::to_string(r.seed) + '\t' + r.method + '\t' + r.variant + '\t';
  s += format_double(r.sparsity) + '\t' + (r.resurrection ? "1" : "0") + '\t';
  s += std::to_string(r.iteration) + '\t' + std::string(to_string(r.phase)) + '\t';
  s += format_double(r.loss) + '\t' + format_double(r.eval_loss) + '\t' +
       format_double(r.eval_accuracy) + '\t' + format_double(r.density) + '\t';
  s += std::to_string(r.kept) + '\t' + format_double(r.score_min) + '\t' +
       format_double(r.score_median) + '\t' + format_double(r.score_max);
  return s;
}

MetricsRecord parse_record(std::string_view line) {
  const auto f = split_tabs(line);
  if (f.size() != kColumns)
    throw IoError("metrics: expected " + std::to_string(kColumns) + " columns, got " +
                  std::to_string(f.size()));
  MetricsRecord r;
  r.run_id = f[0];
  r.seed = parse_integer<std::uint64_t>(f[1], "seed");
  r.method = f[2];
  r.variant = f[3];
  r.sparsity = parse_double(f[4]);
  r.resurrection = f[5] == "1";
  r.iteration = parse_integer<std::size_t>(f[6], "iteration");
  r.phase = parse_phase(f[7]);
  r.loss = parse_double(f[8]);
  r.eval_loss = parse_double(f[9]);
  r.eval_accuracy = parse_double(f[10]);
  r.density = parse_double(f[11]);
  r.kept = parse_integer<std::size_t>(f[12], "kept");
  r.score_min = parse_double(f[13]);
  r.score_median = parse_double(f[14]);
  r.score_max = parse_double(f[15]);
  return r;
}

void write_metrics(std::ostream& out, const std::vector<MetricsRecord>& records) {
  out << metrics_header() << '\n';
  for (const auto& r : records) out << format_record(r) << '\n';
}

std::vector<MetricsRecord> read_metrics(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != metrics_header())
    throw IoError("metrics: missing or unexpected header");
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_record(line));
  }
  return out;
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("metrics: cannot open " + path.string());
  return read_metrics(in);
}

}  // namespace seven
