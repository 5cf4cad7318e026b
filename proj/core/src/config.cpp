#include "seven/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "seven/error.hpp"
#include "seven/metrics.hpp"
#include "seven/rng.hpp"

namespace seven {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_unsigned(std::string_view key, std::string_view v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError(std::string(key), "expected a non-negative integer, got '" +
                                            std::string(v) + "'");
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  try {
    const double d = parse_double(v);
    if (!std::isfinite(d)) throw IoError("not finite");
    return d;
  } catch (const IoError&) {
    throw ConfigError(std::string(key), "expected a finite number, got '" + std::string(v) + "'");
  }
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(std::string(key), "expected true or false, got '" + std::string(v) + "'");
}

std::vector<std::uint64_t> parse_seeds(std::string_view key, std::string_view v) {
  std::vector<std::uint64_t> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto item = trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start));
    out.push_back(parse_unsigned<std::uint64_t>(key, item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Rethrows parse errors from enum lookups under the config key.
template <typename F>
auto keyed(std::string_view key, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    if (e.key() == key) throw;
    throw ConfigError(std::string(key), e.what());
  } catch (const Error& e) {
    throw ConfigError(std::string(key), e.what());
  }
}

struct Field {
  std::string_view name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string str(std::size_t v) { return std::to_string(v); }
std::string str(bool v) { return v ? "true" : "false"; }

#define SEVEN_SIZE(key, member)                                                         \
  Field {                                                                               \
    key, [](RunConfig& c, std::string_view v) { c.member = parse_unsigned<std::size_t>(key, v); }, \
        [](const RunConfig& c) { return str(c.member); }                                \
  }
#define SEVEN_REAL(key, member)                                                          \
  Field {                                                                                \
    key, [](RunConfig& c, std::string_view v) { c.member = parse_real(key, v); },        \
        [](const RunConfig& c) { return format_double(c.member); }                       \
  }
#define SEVEN_BOOL(key, member)                                                          \
  Field {                                                                                \
    key, [](RunConfig& c, std::string_view v) { c.member = parse_bool(key, v); },        \
        [](const RunConfig& c) { return str(c.member); }                                 \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SEVEN_SIZE("layers", model.layers),
      SEVEN_SIZE("d_model", model.d_model),
      SEVEN_SIZE("heads", model.heads),
      SEVEN_SIZE("ffn_dim", model.ffn_dim),
      SEVEN_SIZE("seq_len", model.seq_len),
      SEVEN_SIZE("vocab", model.vocab),
      SEVEN_SIZE("classes", model.classes),
      SEVEN_BOOL("prune_embeddings", model.prune_embeddings),
      SEVEN_BOOL("prune_head", model.prune_head),
      Field{"task",
            [](RunConfig& c, std::string_view v) {
              c.data.task = keyed("task", [&] { return parse_task(v); });
            },
            [](const RunConfig& c) { return std::string(to_string(c.data.task)); }},
      Field{"data_path", [](RunConfig& c, std::string_view v) { c.data.data_path = v; },
            [](const RunConfig& c) { return c.data.data_path; }},
      Field{"val_path", [](RunConfig& c, std::string_view v) { c.data.val_path = v; },
            [](const RunConfig& c) { return c.data.val_path; }},
      SEVEN_SIZE("train_size", data.train_size),
      SEVEN_SIZE("val_size", data.val_size),
      Field{"data_seed",
            [](RunConfig& c, std::string_view v) {
              c.data.data_seed = parse_unsigned<std::uint64_t>("data_seed", v);
            },
            [](const RunConfig& c) { return std::to_string(c.data.data_seed); }},
      Field{"method",
            [](RunConfig& c, std::string_view v) {
              c.method = keyed("method", [&] { return parse_method(v); });
            },
            [](const RunConfig& c) { return std::string(to_string(c.method)); }},
      Field{"variant",
            [](RunConfig& c, std::string_view v) {
              c.variant = keyed("variant", [&] { return parse_score_variant(v); });
            },
            [](const RunConfig& c) { return std::string(to_string(c.variant)); }},
      SEVEN_REAL("sparsity", sparsity),
      SEVEN_SIZE("K", K),
      SEVEN_SIZE("t_i", t_i),
      SEVEN_SIZE("T", T),
      SEVEN_BOOL("resurrection", resurrection),
      SEVEN_REAL("alpha1", hyper.alpha1),
      SEVEN_REAL("alpha2", hyper.alpha2),
      SEVEN_REAL("epsilon", hyper.epsilon),
      Field{"optimizer",
            [](RunConfig& c, std::string_view v) {
              c.optimizer.kind = keyed("optimizer", [&] { return parse_optimizer(v); });
            },
            [](const RunConfig& c) { return std::string(to_string(c.optimizer.kind)); }},
      SEVEN_REAL("lr", optimizer.lr),
      SEVEN_REAL("adam_beta1", optimizer.beta1),
      SEVEN_REAL("adam_beta2", optimizer.beta2),
      SEVEN_REAL("adam_eps", optimizer.eps),
      SEVEN_SIZE("batch_size", batch_size),
      Field{"seeds", [](RunConfig& c, std::string_view v) { c.seeds = parse_seeds("seeds", v); },
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.seeds.size(); ++i)
                s += (i ? "," : "") + std::to_string(c.seeds[i]);
              return s;
            }},
      Field{"output_dir", [](RunConfig& c, std::string_view v) { c.output_dir = v; },
            [](const RunConfig& c) { return c.output_dir; }},
      SEVEN_SIZE("pretrain_steps", pretrain_steps),
      SEVEN_REAL("pretrain_lr", pretrain_lr),
      SEVEN_SIZE("eval_every", eval_every),
      SEVEN_BOOL("diagnostics", diagnostics),
      SEVEN_SIZE("diag_batches", diag_batches),
  };
  return table;
}

#undef SEVEN_SIZE
#undef SEVEN_REAL
#undef SEVEN_BOOL

constexpr std::string_view kRequired[] = {"method", "sparsity", "T", "seeds"};

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
  if (data.task == Task::File) {
    if (data.data_path.empty()) throw ConfigError("data_path", "required for the file task");
    if (data.val_path.empty()) throw ConfigError("val_path", "required for the file task");
  } else {
    if (data.train_size < batch_size)
      throw ConfigError("train_size", "must be at least batch_size");
    if (data.val_size == 0) throw ConfigError("val_size", "must be positive");
  }
  if (data.task == Task::Parity && model.vocab < 2)
    throw ConfigError("vocab", "parity needs a vocabulary of at least 2");
  if ((data.task == Task::Parity || data.task == Task::CopyDetection) && model.classes < 2)
    throw ConfigError("classes", "binary tasks need at least 2 classes");
  if (data.task == Task::CopyDetection && model.seq_len % 2 != 0)
    throw ConfigError("seq_len", "copy detection needs an even length");
  if (diagnostics && diag_batches < 2)
    throw ConfigError("diag_batches", "diagnostics need at least 2 batches");
  plan(seeds.front()).validate();
}

RunPlan RunConfig::plan(std::uint64_t seed) const {
  RunPlan p;
  p.method = method;
  p.variant = variant;
  p.sparsity = sparsity;
  p.prune_steps = K;
  p.prune_start = t_i;
  p.iterations = T;
  p.resurrection = resurrection;
  p.seed = seed;
  p.hyper = hyper;
  p.optimizer = optimizer;
  p.batch_size = batch_size;
  p.pretrain_steps = pretrain_steps;
  p.pretrain_lr = pretrain_lr;
  p.eval_every = eval_every;
  std::ostringstream id;
  id << to_string(method);
  if (method == Method::SevenPre || method == Method::SevenDyn) id << '-' << to_string(variant);
  id << "-s" << format_double(sparsity) << (resurrection ? "-res" : "") << "-seed" << seed;
  p.run_id = id.str();
  return p;
}

RunConfig parse_config_text(std::string_view text) {
  RunConfig c;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    std::string_view line =
        text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no), "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& f : fields())
      if (f.name == key) field = &f;
    if (!field) throw ConfigError(std::string(key), "unknown key");
    if (!seen.insert(std::string(key)).second) throw ConfigError(std::string(key), "duplicate key");
    field->set(c, value);
  }
  for (auto key : kRequired)
    if (!seen.contains(key)) throw ConfigError(std::string(key), "missing required key");
  c.validate();
  return c;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string write_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) {
    const std::string v = f.get(config);
    if (v.empty()) continue;
    out += std::string(f.name) + " = " + v + '\n';
  }
  return out;
}

DataSplit make_data(const RunConfig& config) {
  const auto& d = config.data;
  const auto& m = config.model;
  const std::uint64_t train_seed = derive_seed(d.data_seed, 0);
  const std::uint64_t val_seed = derive_seed(d.data_seed, 1);
  const int vocab = static_cast<int>(m.vocab);
  DataSplit split{Dataset(m.seq_len), Dataset(m.seq_len)};
  switch (d.task) {
    case Task::Parity:
      split.train = make_parity(d.train_size, m.seq_len, train_seed);
      split.validation = make_parity(d.val_size, m.seq_len, val_seed);
      break;
    case Task::CopyDetection:
      split.train = make_copy_detection(d.train_size, m.seq_len, vocab, train_seed);
      split.validation = make_copy_detection(d.val_size, m.seq_len, vocab, val_seed);
      break;
    case Task::BagOfPatterns:
      split.train = make_bag_of_patterns(d.train_size, m.seq_len, vocab,
                                         static_cast<int>(m.classes), train_seed);
      split.validation = make_bag_of_patterns(d.val_size, m.seq_len, vocab,
                                              static_cast<int>(m.classes), val_seed);
      break;
    case Task::File:
      split.train = load_dataset(d.data_path, m.seq_len);
      split.validation = load_dataset(d.val_path, m.seq_len);
      break;
  }
  for (const Dataset* ds : {&split.train, &split.validation}) {
    if (ds->size() == 0) throw ConfigError("data_path", "dataset is empty");
    if (static_cast<std::size_t>(ds->max_token()) >= m.vocab)
      throw ConfigError("vocab", "dataset has token " + std::to_string(ds->max_token()) +
                                     " outside the vocabulary");
    if (static_cast<std::size_t>(ds->max_label()) >= m.classes)
      throw ConfigError("classes", "dataset has label " + std::to_string(ds->max_label()) +
                                       " outside the class range");
  }
  if (split.train.size() < config.batch_size)
    throw ConfigError("batch_size", "larger than the training set");
  return split;
}

}  // namespace seven
