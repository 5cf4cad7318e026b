#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seven/autodiff.hpp"
#include "seven/data.hpp"
#include "seven/param_store.hpp"

namespace seven {

// Pre-norm transformer encoder classifier: token + position embeddings,
// `layers` blocks of multi-head self-attention and a GELU feed-forward
// network, final layer norm, mean pooling over positions, linear head.
struct TransformerConfig {
  std::size_t layers = 2;
  std::size_t d_model = 32;
  std::size_t heads = 2;
  std::size_t ffn_dim = 64;
  std::size_t seq_len = 8;
  std::size_t vocab = 2;
  std::size_t classes = 2;
  // Embedding tables and the classifier weight are kept dense unless enabled.
  bool prune_embeddings = false;
  bool prune_head = false;

  std::size_t head_dim() const { return d_model / heads; }
  // Throws ConfigError naming the offending field.
  void validate() const;

  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

namespace param_names {
std::string query(std::size_t layer, std::size_t head);
std::string key(std::size_t layer, std::size_t head);
std::string value(std::size_t layer, std::size_t head);
std::string attn_out(std::size_t layer);
}  // namespace param_names

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit norm
// gains. Deterministic in (cfg, seed).
ParamStore init_model(const TransformerConfig& cfg, std::uint64_t seed);

// Per-layer handles into the tape that the attention oracle reads back.
struct AttentionTrace {
  // Normalised attention input for the whole batch, [batch*seq_len x d_model];
  // example b owns rows [b*seq_len, (b+1)*seq_len).
  Var input;
  // Scaled pre-softmax scores, indexed [head][example], [seq_len x seq_len].
  std::vector<std::vector<Var>> scores;
};

// One recorded forward evaluation. The graph is heap allocated so the Var
// handles stay valid when the pass is moved.
struct ForwardPass {
  std::unique_ptr<Graph> graph;
  std::vector<Var> params;  // aligned with the ParamStore
  Var logits;
  Var loss;
  std::vector<AttentionTrace> attention;

  double loss_value() const { return loss.value()[0]; }
  // Runs backward from `loss` and collects parameter gradients.
  GradientSet backward();
  GradientSet gradients() const;
};

// Builds the tape for a batch. With track_gradients=false the parameters are
// bound as constants. Throws NumericError naming the layer on NaN/Inf.
ForwardPass forward_loss(const TransformerConfig& cfg, const ParamStore& params,
                         const Batch& batch, bool track_gradients = true);

struct LossAndGrad {
  double loss = 0.0;
  GradientSet grads;
};
LossAndGrad loss_and_grad(const TransformerConfig& cfg, const ParamStore& params,
                          const Batch& batch);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};
// Mean loss and accuracy over a dataset, in chunks of `chunk` examples.
Evaluation evaluate(const TransformerConfig& cfg, const ParamStore& params,
                    const Dataset& data, std::size_t chunk = 128);

struct AttentionGrads {
  Tensor query;  // d_model x head_dim
  Tensor key;    // d_model x head_dim
};

// Closed-form gradients of the per-head query and key projections given the
// attention inputs X_b and the upstream gradients G_b of the scaled scores
// A_b = X_b Wq Wk^T X_b^T / sqrt(d_k), summed over examples:
//   dWq = gamma * sum_b X_b^T G_b X_b Wk,   dWk = gamma * sum_b X_b^T G_b^T X_b Wq.
AttentionGrads analytic_attention_grads(std::span<const Tensor> inputs,
                                        std::span<const Tensor> score_grads,
                                        const Tensor& query_weight,
                                        const Tensor& key_weight);

// Oracle over a pass that has already run backward().
AttentionGrads attention_grad_oracle(const ForwardPass& pass, const ParamStore& params,
                                     std::size_t layer, std::size_t head);
// Convenience: forward + backward + oracle.
AttentionGrads attention_grad_oracle(const TransformerConfig& cfg,
                                     const ParamStore& params, const Batch& batch,
                                     std::size_t layer, std::size_t head);

}  // namespace seven
