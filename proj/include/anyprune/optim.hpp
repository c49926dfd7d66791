#pragma once

#include <functional>
#include <span>
#include <vector>

#include "anyprune/tensor.hpp"

namespace anyprune {

using ParamSet = std::vector<Tensor>;

struct SgdHyper {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

// Momentum buffers mirror the parameter shapes. Entries at masked-out
// positions are exactly zero after every step.
struct OptimState {
  SgdHyper hyper;
  std::vector<Tensor> momentum;

  static OptimState zeros_like(const ParamSet& params, SgdHyper hyper);
};

// v <- momentum*v + (grad + wd*param); param <- param - lr*v; then both are
// multiplied by the mask. masks is either empty (dense) or aligned with params,
// with nullptr entries for unmasked tensors.
void sgd_momentum_step(std::span<Tensor> params, std::span<const Tensor> grads, OptimState& state,
                       std::span<const Tensor* const> masks = {});

// Forces momentum buffers to zero wherever the mask is zero.
void mask_momentum(OptimState& state, std::span<const Tensor* const> masks);

using GradFn = std::function<ParamSet(const ParamSet& params)>;

// Hessian-vector product by central differences of gradients:
// (grad(p + eps*v) - grad(p - eps*v)) / (2*eps). params is never modified.
ParamSet hvp_fd(const GradFn& grad_fn, const ParamSet& params, const ParamSet& v, double eps);

// 1e-4 * (1 + max |param|).
double default_hvp_eps(const ParamSet& params);

}  // namespace anyprune
