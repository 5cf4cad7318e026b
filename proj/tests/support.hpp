#pragma once

// Helpers and independent reference implementations shared by the tests.
// Nothing here calls into the library code it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "seven/data.hpp"
#include "seven/model.hpp"
#include "seven/rng.hpp"
#include "seven/tensor.hpp"

namespace seven::testing {

inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / scale;
}

inline double max_rel_err(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i]));
  return worst;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -1.0,
                                         double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Random tokens and labels; labels need not be learnable.
inline Batch random_batch(const TransformerConfig& cfg, std::size_t size, Rng& rng) {
  Batch b;
  b.size = size;
  b.seq_len = cfg.seq_len;
  for (std::size_t i = 0; i < size * cfg.seq_len; ++i)
    b.tokens.push_back(static_cast<int>(rng.below(cfg.vocab)));
  for (std::size_t i = 0; i < size; ++i) b.labels.push_back(static_cast<int>(rng.below(cfg.classes)));
  return b;
}

// Central difference of f with respect to every element of x.
inline Tensor central_difference(Tensor& x, const std::function<double()>& f, double h) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

// Score after a gradient sequence, using the closed-form sums
//   m_i = (1 - a1) sum_k a1^(i-k) g_k,  v_i = (1 - a2) sum_k a2^(i-k) g_k^2
// rather than the running recursion.
struct ScalarScoreOracle {
  double alpha1, alpha2, epsilon;

  double mu(const std::vector<double>& g, std::size_t i) const {
    double m = 0.0, v = 0.0;
    for (std::size_t k = 1; k <= i; ++k) {
      m += (1.0 - alpha1) * std::pow(alpha1, static_cast<double>(i - k)) * g[k - 1];
      v += (1.0 - alpha2) * std::pow(alpha2, static_cast<double>(i - k)) * g[k - 1] * g[k - 1];
    }
    const double first = m / (1.0 - std::pow(alpha1, static_cast<double>(i)));
    const double second = std::sqrt(v / (1.0 - std::pow(alpha2, static_cast<double>(i))) + epsilon);
    return first / second;
  }

  // g[k] is the gradient of one coordinate at step k + 1.
  double score(double theta, const std::vector<double>& g) const {
    double s = 0.0;
    for (std::size_t i = 1; i <= g.size(); ++i) s += std::abs(theta * g[i - 1] * mu(g, i));
    return s;
  }
};

// Naive triple loops for gamma * sum_b X_b^T G_b X_b W (and the transposed-G
// form for the key projection).
inline Tensor attention_projection_grad(const std::vector<Tensor>& xs,
                                        const std::vector<Tensor>& gs, const Tensor& w,
                                        double gamma, bool transpose_g) {
  const std::size_t d = w.rows(), k = w.cols();
  Tensor out({d, k});
  for (std::size_t b = 0; b < xs.size(); ++b) {
    const Tensor& x = xs[b];
    const Tensor& g = gs[b];
    const std::size_t n = x.rows();
    // xw = X W  [n x k]
    std::vector<double> xw(n * k, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < d; ++j) xw[r * k + c] += x.at(r, j) * w.at(j, c);
    // gxw = G XW or G^T XW  [n x k]
    std::vector<double> gxw(n * k, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < n; ++j)
          gxw[r * k + c] += (transpose_g ? g.at(j, r) : g.at(r, j)) * xw[j * k + c];
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < n; ++j) out.at(r, c) += gamma * x.at(j, r) * gxw[j * k + c];
  }
  return out;
}

}  // namespace seven::testing
