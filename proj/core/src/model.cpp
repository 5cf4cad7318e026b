#include "seven/model.hpp"

#include <cmath>

#include "seven/error.hpp"
#include "seven/rng.hpp"

namespace seven {

void TransformerConfig::validate() const {
  auto positive = [](std::size_t v, const char* key) {
    if (v == 0) throw ConfigError(key, "must be positive");
  };
  positive(layers, "layers");
  positive(d_model, "d_model");
  positive(heads, "heads");
  positive(ffn_dim, "ffn_dim");
  positive(seq_len, "seq_len");
  positive(vocab, "vocab");
  if (d_model % heads != 0)
    throw ConfigError("heads", std::to_string(heads) + " heads do not divide d_model " +
                                   std::to_string(d_model));
  if (classes < 2) throw ConfigError("classes", "need at least 2 classes");
}

namespace param_names {
std::string query(std::size_t l, std::size_t h) {
  return "layer" + std::to_string(l) + ".attn.head" + std::to_string(h) + ".query";
}
std::string key(std::size_t l, std::size_t h) {
  return "layer" + std::to_string(l) + ".attn.head" + std::to_string(h) + ".key";
}
std::string value(std::size_t l, std::size_t h) {
  return "layer" + std::to_string(l) + ".attn.head" + std::to_string(h) + ".value";
}
std::string attn_out(std::size_t l) { return "layer" + std::to_string(l) + ".attn.out"; }
}  // namespace param_names

namespace {

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l) + "."; }

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape), 0.0);
  for (auto& x : t.data()) x = rng.uniform(-bound, bound);
  return t;
}

Tensor fan_in_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return uniform_tensor({fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

void check_finite(const Var& v, const std::string& where) {
  if (!v.value().all_finite())
    throw NumericError("forward: non-finite activation in " + where);
}

// Plain matrix product with optional transposes, for the oracle only.
Tensor product(const Tensor& a, bool ta, const Tensor& b, bool tb) {
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t kb = tb ? b.cols() : b.rows();
  const std::size_t n = tb ? b.rows() : b.cols();
  if (k != kb)
    throw ShapeError("oracle: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  Tensor out({m, n}, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p)
        acc += (ta ? a.at(p, i) : a.at(i, p)) * (tb ? b.at(j, p) : b.at(p, j));
      out.at(i, j) = acc;
    }
  return out;
}

Tensor rows_of(const Tensor& t, std::size_t begin, std::size_t count) {
  const std::size_t cols = t.cols();
  std::vector<double> d(t.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                        t.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
  return Tensor({count, cols}, std::move(d));
}

}  // namespace

ParamStore init_model(const TransformerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParamStore p;
  const std::size_t d = cfg.d_model, dk = cfg.head_dim();
  p.add("embed.tokens", uniform_tensor({cfg.vocab, d}, 1.0, rng), cfg.prune_embeddings);
  p.add("embed.positions", uniform_tensor({cfg.seq_len, d}, 1.0, rng), cfg.prune_embeddings);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = layer_prefix(l);
    p.add(pre + "ln1.gain", Tensor({d}, 1.0), false);
    p.add(pre + "ln1.bias", Tensor({d}, 0.0), false);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      p.add(param_names::query(l, h), fan_in_weight(d, dk, rng), true);
      p.add(param_names::key(l, h), fan_in_weight(d, dk, rng), true);
      p.add(param_names::value(l, h), fan_in_weight(d, dk, rng), true);
    }
    p.add(param_names::attn_out(l), fan_in_weight(d, d, rng), true);
    p.add(pre + "ln2.gain", Tensor({d}, 1.0), false);
    p.add(pre + "ln2.bias", Tensor({d}, 0.0), false);
    p.add(pre + "ffn.in", fan_in_weight(d, cfg.ffn_dim, rng), true);
    p.add(pre + "ffn.in_bias", Tensor({cfg.ffn_dim}, 0.0), false);
    p.add(pre + "ffn.out", fan_in_weight(cfg.ffn_dim, d, rng), true);
    p.add(pre + "ffn.out_bias", Tensor({d}, 0.0), false);
  }
  p.add("final_ln.gain", Tensor({d}, 1.0), false);
  p.add("final_ln.bias", Tensor({d}, 0.0), false);
  p.add("head.weight", fan_in_weight(d, cfg.classes, rng), cfg.prune_head);
  p.add("head.bias", Tensor({cfg.classes}, 0.0), false);
  return p;
}

GradientSet ForwardPass::backward() {
  graph->backward(loss);
  return gradients();
}

GradientSet ForwardPass::gradients() const {
  GradientSet out;
  out.reserve(params.size());
  for (const Var& v : params) out.push_back(graph->grad(v));
  return out;
}

ForwardPass forward_loss(const TransformerConfig& cfg, const ParamStore& params,
                         const Batch& batch, bool track_gradients) {
  cfg.validate();
  if (batch.seq_len != cfg.seq_len)
    throw ShapeError("forward: batch sequence length " + std::to_string(batch.seq_len) +
                     ", model expects " + std::to_string(cfg.seq_len));
  if (batch.size == 0 || batch.tokens.size() != batch.size * batch.seq_len ||
      batch.labels.size() != batch.size)
    throw ShapeError("forward: malformed batch");

  ForwardPass pass;
  pass.graph = std::make_unique<Graph>();
  Graph& g = *pass.graph;
  for (const auto& p : params)
    pass.params.push_back(track_gradients ? g.parameter(p.value) : g.constant(p.value));
  auto P = [&](const std::string& name) { return pass.params[params.index_of(name)]; };

  const std::size_t B = batch.size, n = cfg.seq_len, dk = cfg.head_dim();
  const double gamma = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<std::size_t> tok(batch.tokens.size()), pos(batch.tokens.size());
  for (std::size_t i = 0; i < tok.size(); ++i) {
    if (batch.tokens[i] < 0 || static_cast<std::size_t>(batch.tokens[i]) >= cfg.vocab)
      throw ShapeError("forward: token id " + std::to_string(batch.tokens[i]) +
                       " outside vocabulary of " + std::to_string(cfg.vocab));
    tok[i] = static_cast<std::size_t>(batch.tokens[i]);
    pos[i] = i % n;
  }
  Var x = ops::add(ops::gather_rows(P("embed.tokens"), tok),
                   ops::gather_rows(P("embed.positions"), pos));
  check_finite(x, "embed");

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = layer_prefix(l);
    AttentionTrace trace;
    Var h = ops::layer_norm(x, P(pre + "ln1.gain"), P(pre + "ln1.bias"));
    trace.input = h;
    std::vector<Var> heads;
    for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
      Var q = ops::matmul(h, P(param_names::query(l, hd)));
      Var k = ops::matmul(h, P(param_names::key(l, hd)));
      Var v = ops::matmul(h, P(param_names::value(l, hd)));
      std::vector<Var> outs, scores;
      for (std::size_t b = 0; b < B; ++b) {
        Var qb = ops::slice_rows(q, b * n, (b + 1) * n);
        Var kb = ops::slice_rows(k, b * n, (b + 1) * n);
        Var vb = ops::slice_rows(v, b * n, (b + 1) * n);
        Var s = ops::scale(ops::matmul(qb, ops::transpose(kb)), gamma);
        scores.push_back(s);
        outs.push_back(ops::matmul(ops::softmax_rows(s), vb));
      }
      trace.scores.push_back(std::move(scores));
      heads.push_back(ops::concat_rows(outs));
    }
    Var attn = ops::matmul(ops::concat_cols(heads), P(param_names::attn_out(l)));
    x = ops::add(x, attn);
    check_finite(x, pre + "attn");
    pass.attention.push_back(std::move(trace));

    Var h2 = ops::layer_norm(x, P(pre + "ln2.gain"), P(pre + "ln2.bias"));
    Var f = ops::gelu(ops::add(ops::matmul(h2, P(pre + "ffn.in")), P(pre + "ffn.in_bias")));
    f = ops::add(ops::matmul(f, P(pre + "ffn.out")), P(pre + "ffn.out_bias"));
    x = ops::add(x, f);
    check_finite(x, pre + "ffn");
  }

  Var hf = ops::layer_norm(x, P("final_ln.gain"), P("final_ln.bias"));
  Tensor pool({B, B * n}, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = 0; p < n; ++p) pool.at(b, b * n + p) = 1.0 / static_cast<double>(n);
  Var pooled = ops::matmul(g.constant(std::move(pool)), hf);
  pass.logits = ops::add(ops::matmul(pooled, P("head.weight")), P("head.bias"));
  check_finite(pass.logits, "head");
  pass.loss = ops::cross_entropy(pass.logits, batch.labels);
  check_finite(pass.loss, "loss");
  return pass;
}

LossAndGrad loss_and_grad(const TransformerConfig& cfg, const ParamStore& params,
                          const Batch& batch) {
  ForwardPass pass = forward_loss(cfg, params, batch, true);
  LossAndGrad out;
  out.loss = pass.loss_value();
  out.grads = pass.backward();
  for (std::size_t i = 0; i < out.grads.size(); ++i)
    if (!out.grads[i].all_finite())
      throw NumericError("backward: non-finite gradient for " + params[i].name);
  return out;
}

Evaluation evaluate(const TransformerConfig& cfg, const ParamStore& params,
                    const Dataset& data, std::size_t chunk) {
  if (data.size() == 0) throw Error("evaluate: empty dataset");
  Evaluation ev;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + chunk); ++i) idx.push_back(i);
    const Batch b = data.batch(idx);
    ForwardPass pass = forward_loss(cfg, params, b, false);
    ev.loss += pass.loss_value() * static_cast<double>(b.size);
    const Tensor& lg = pass.logits.value();
    for (std::size_t r = 0; r < b.size; ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < lg.cols(); ++c)
        if (lg.at(r, c) > lg.at(r, best)) best = c;
      if (static_cast<int>(best) == b.labels[r]) ++correct;
    }
  }
  ev.loss /= static_cast<double>(data.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return ev;
}

AttentionGrads analytic_attention_grads(std::span<const Tensor> inputs,
                                        std::span<const Tensor> score_grads,
                                        const Tensor& query_weight,
                                        const Tensor& key_weight) {
  if (inputs.size() != score_grads.size() || inputs.empty())
    throw ShapeError("oracle: need one score gradient per attention input");
  if (query_weight.shape() != key_weight.shape())
    throw ShapeError("oracle: query " + shape_string(query_weight.shape()) + " vs key " +
                     shape_string(key_weight.shape()));
  const double gamma = 1.0 / std::sqrt(static_cast<double>(query_weight.cols()));
  AttentionGrads out{Tensor(query_weight.shape(), 0.0), Tensor(key_weight.shape(), 0.0)};
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    const Tensor& x = inputs[b];
    const Tensor& gs = score_grads[b];
    // X^T G X, d x d
    const Tensor xgx = product(product(x, true, gs, false), false, x, false);
    const Tensor dq = product(xgx, false, key_weight, false);
    const Tensor dk = product(xgx, true, query_weight, false);
    for (std::size_t i = 0; i < dq.size(); ++i) {
      out.query[i] += gamma * dq[i];
      out.key[i] += gamma * dk[i];
    }
  }
  return out;
}

AttentionGrads attention_grad_oracle(const ForwardPass& pass, const ParamStore& params,
                                     std::size_t layer, std::size_t head) {
  if (layer >= pass.attention.size())
    throw Error("oracle: layer " + std::to_string(layer) + " out of range");
  const AttentionTrace& tr = pass.attention[layer];
  if (head >= tr.scores.size())
    throw Error("oracle: head " + std::to_string(head) + " out of range");
  const Tensor& x = tr.input.value();
  const std::size_t examples = tr.scores[head].size();
  const std::size_t n = x.rows() / examples;
  std::vector<Tensor> inputs, grads;
  for (std::size_t b = 0; b < examples; ++b) {
    inputs.push_back(rows_of(x, b * n, n));
    grads.push_back(pass.graph->grad(tr.scores[head][b]));
  }
  return analytic_attention_grads(inputs, grads, params.value(param_names::query(layer, head)),
                                  params.value(param_names::key(layer, head)));
}

AttentionGrads attention_grad_oracle(const TransformerConfig& cfg,
                                     const ParamStore& params, const Batch& batch,
                                     std::size_t layer, std::size_t head) {
  if (layer >= cfg.layers) throw Error("oracle: layer " + std::to_string(layer) + " out of range");
  if (head >= cfg.heads) throw Error("oracle: head " + std::to_string(head) + " out of range");
  ForwardPass pass = forward_loss(cfg, params, batch, true);
  pass.backward();
  return attention_grad_oracle(pass, params, layer, head);
}

}  // namespace seven
