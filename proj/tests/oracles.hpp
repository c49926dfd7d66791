#pragma once

// Test-only reference computations. Nothing here touches the tape, so the
// checks against it are independent of the reverse-mode implementation.

#include <algorithm>
#include <cmath>
#include <vector>

#include "anyprune/tensor.hpp"

namespace oracle {

// Mean softmax cross-entropy of a dense relu MLP whose parameters alternate
// weight [in x out], bias [out]; computed with plain loops.
inline double mlp_loss(const std::vector<anyprune::Tensor>& params, const anyprune::Tensor& x,
                       const std::vector<int>& y) {
  const std::size_t n = x.dim(0);
  std::vector<double> h(x.values());
  std::size_t width = x.dim(1);
  const std::size_t layers = params.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& w = params[2 * l];
    const auto& b = params[2 * l + 1];
    const std::size_t out = w.dim(1);
    std::vector<double> next(n * out, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < out; ++j) {
        double s = b[j];
        for (std::size_t k = 0; k < width; ++k) s += h[r * width + k] * w[k * out + j];
        next[r * out + j] = (l + 1 < layers) ? std::max(0.0, s) : s;
      }
    h = std::move(next);
    width = out;
  }
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double m = h[r * width];
    for (std::size_t j = 1; j < width; ++j) m = std::max(m, h[r * width + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) z += std::exp(h[r * width + j] - m);
    total += std::log(z) + m - h[r * width + static_cast<std::size_t>(y[r])];
  }
  return total / static_cast<double>(n);
}

// Central differences of `loss` with respect to every entry of every tensor.
template <typename LossFn>
std::vector<anyprune::Tensor> fd_gradient(LossFn&& loss, std::vector<anyprune::Tensor> params, double h = 1e-6) {
  std::vector<anyprune::Tensor> grads;
  for (std::size_t t = 0; t < params.size(); ++t) {
    anyprune::Tensor g(params[t].shape());
    for (std::size_t i = 0; i < params[t].numel(); ++i) {
      const double keep = params[t][i];
      params[t][i] = keep + h;
      const double up = loss(params);
      params[t][i] = keep - h;
      const double down = loss(params);
      params[t][i] = keep;
      g[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// max |a - b| / max(1e-3, |a| + |b|) over all entries; the floor keeps
// near-zero gradients from dominating through rounding noise.
inline double max_rel_error(const std::vector<anyprune::Tensor>& a, const std::vector<anyprune::Tensor>& b) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].numel(); ++i) {
      const double denom = std::max(1e-3, std::abs(a[t][i]) + std::abs(b[t][i]));
      worst = std::max(worst, std::abs(a[t][i] - b[t][i]) / denom);
    }
  return worst;
}

}  // namespace oracle
