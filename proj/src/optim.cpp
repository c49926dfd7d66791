#include "anyprune/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "anyprune/errors.hpp"

namespace anyprune {
namespace {

void check_hyper(const SgdHyper& h) {
  if (!(h.lr > 0.0) || !std::isfinite(h.lr)) throw ParameterError("learning rate must be positive");
  if (!(h.momentum >= 0.0 && h.momentum < 1.0)) throw ParameterError("momentum must lie in [0, 1)");
  if (!(h.weight_decay >= 0.0)) throw ParameterError("weight decay must be non-negative");
}

void check_masks(std::span<const Tensor> params, std::span<const Tensor* const> masks) {
  if (masks.empty()) return;
  if (masks.size() != params.size()) throw ShapeError("mask list does not align with parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (masks[i] && masks[i]->shape() != params[i].shape()) {
      throw ShapeError("mask " + shape_str(masks[i]->shape()) + " vs parameter " + shape_str(params[i].shape()));
    }
  }
}

}  // namespace

OptimState OptimState::zeros_like(const ParamSet& params, SgdHyper hyper) {
  check_hyper(hyper);
  OptimState s{hyper, {}};
  s.momentum.reserve(params.size());
  for (const auto& p : params) s.momentum.push_back(Tensor::zeros(p.shape()));
  return s;
}

void sgd_momentum_step(std::span<Tensor> params, std::span<const Tensor> grads, OptimState& state,
                       std::span<const Tensor* const> masks) {
  check_hyper(state.hyper);
  if (grads.size() != params.size() || state.momentum.size() != params.size()) {
    throw ShapeError("parameter, gradient and momentum counts differ");
  }
  check_masks(params, masks);
  const auto [lr, mu, wd] = state.hyper;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = params[t];
    Tensor& v = state.momentum[t];
    const Tensor& g = grads[t];
    if (g.shape() != p.shape() || v.shape() != p.shape()) {
      throw ShapeError("gradient " + shape_str(g.shape()) + " vs parameter " + shape_str(p.shape()));
    }
    const Tensor* m = masks.empty() ? nullptr : masks[t];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      v[i] = mu * v[i] + (g[i] + wd * p[i]);
      p[i] -= lr * v[i];
      if (m && (*m)[i] == 0.0) {
        p[i] = 0.0;
        v[i] = 0.0;
      }
    }
  }
}

void mask_momentum(OptimState& state, std::span<const Tensor* const> masks) {
  check_masks(state.momentum, masks);
  for (std::size_t t = 0; t < masks.size(); ++t) {
    if (!masks[t]) continue;
    for (std::size_t i = 0; i < masks[t]->numel(); ++i)
      if ((*masks[t])[i] == 0.0) state.momentum[t][i] = 0.0;
  }
}

ParamSet hvp_fd(const GradFn& grad_fn, const ParamSet& params, const ParamSet& v, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw ParameterError("hvp_fd step must be positive");
  if (v.size() != params.size()) throw ShapeError("direction does not align with parameters");
  ParamSet plus = params, minus = params;
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (v[t].shape() != params[t].shape()) throw ShapeError("direction shape differs from parameter shape");
    for (std::size_t i = 0; i < params[t].numel(); ++i) {
      plus[t][i] += eps * v[t][i];
      minus[t][i] -= eps * v[t][i];
    }
  }
  ParamSet gp = grad_fn(plus);
  const ParamSet gm = grad_fn(minus);
  if (gp.size() != params.size() || gm.size() != params.size()) {
    throw ShapeError("gradient function returned the wrong number of tensors");
  }
  for (std::size_t t = 0; t < gp.size(); ++t) {
    if (!gp[t].all_finite() || !gm[t].all_finite()) throw NumericError("non-finite gradient in hvp_fd");
    for (std::size_t i = 0; i < gp[t].numel(); ++i) gp[t][i] = (gp[t][i] - gm[t][i]) / (2.0 * eps);
  }
  return gp;
}

double default_hvp_eps(const ParamSet& params) {
  double m = 0.0;
  for (const auto& p : params) m = std::max(m, p.max_abs());
  return 1e-4 * (1.0 + m);
}

}  // namespace anyprune
