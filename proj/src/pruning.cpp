#include "anyprune/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "anyprune/errors.hpp"
#include "anyprune/rng.hpp"

namespace anyprune {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <typename Fn>
Scores per_position(const SparsityMask& mask, Fn&& fn, double pruned_value) {
  Scores s;
  s.reserve(mask.total());
  for (const auto& e : mask.entries()) {
    for (std::size_t i = 0; i < e.bits.numel(); ++i) {
      s.push_back(e.bits[i] != 0.0 ? fn(e, i) : pruned_value);
    }
  }
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// SparsityMask

SparsityMask SparsityMask::ones(const ParamRegistry& registry) {
  SparsityMask m;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const auto& e = registry[i];
    if (!e.prunable) continue;
    m.entries_.push_back(Entry{e.name, i, Tensor(e.value.shape(), 1.0)});
    m.total_ += e.value.numel();
  }
  m.kept_ = m.total_;
  return m;
}

bool SparsityMask::kept(std::size_t flat) const {
  for (const auto& e : entries_) {
    if (flat < e.bits.numel()) return e.bits[flat] != 0.0;
    flat -= e.bits.numel();
  }
  throw IndexError("flat mask index out of range");
}

SparsityMask SparsityMask::with_bits(const std::vector<bool>& flat_keep) const {
  if (flat_keep.size() != total_) throw ShapeError("flat mask length differs from prunable count");
  SparsityMask m = *this;
  m.kept_ = 0;
  std::size_t f = 0;
  for (auto& e : m.entries_) {
    for (double& b : e.bits.data()) {
      b = flat_keep[f++] ? 1.0 : 0.0;
      m.kept_ += b != 0.0;
    }
  }
  return m;
}

bool SparsityMask::is_subset_of(const SparsityMask& parent) const {
  if (parent.entries_.size() != entries_.size()) return false;
  for (std::size_t t = 0; t < entries_.size(); ++t) {
    const auto& a = entries_[t].bits;
    const auto& b = parent.entries_[t].bits;
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.numel(); ++i)
      if (a[i] != 0.0 && b[i] == 0.0) return false;
  }
  return true;
}

std::vector<const Tensor*> SparsityMask::aligned(std::size_t registry_size) const {
  std::vector<const Tensor*> out(registry_size, nullptr);
  for (const auto& e : entries_) {
    if (e.param_index >= registry_size) throw ShapeError("mask refers past the end of the registry");
    out[e.param_index] = &e.bits;
  }
  return out;
}

void SparsityMask::check_matches(const ParamRegistry& registry) const {
  std::size_t k = 0;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (!registry[i].prunable) continue;
    if (k >= entries_.size() || entries_[k].param_index != i || entries_[k].name != registry[i].name ||
        entries_[k].bits.shape() != registry[i].value.shape()) {
      throw ShapeError("mask layout does not match parameter " + registry[i].name);
    }
    ++k;
  }
  if (k != entries_.size()) throw ShapeError("mask has entries for non-prunable parameters");
}

bool SparsityMask::operator==(const SparsityMask& other) const {
  if (entries_.size() != other.entries_.size() || kept_ != other.kept_) return false;
  for (std::size_t t = 0; t < entries_.size(); ++t) {
    if (entries_[t].name != other.entries_[t].name || !(entries_[t].bits == other.entries_[t].bits)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Schedule

DeltaSchedule make_delta_schedule(double tau, std::size_t steps) {
  if (!(tau >= 1.0) || !std::isfinite(tau)) throw ParameterError("tau must be finite and >= 1");
  if (steps < 1) throw ParameterError("schedule needs at least one step");
  DeltaSchedule s{tau, steps, {}};
  if (steps == 1) {
    s.values = {tau};
    return s;
  }
  s.values.resize(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    s.values[i] = 1.0 + (tau - 1.0) * static_cast<double>(i) / static_cast<double>(steps - 1);
  }
  s.values.back() = tau;
  return s;
}

std::size_t keep_count(double delta, std::size_t dense_count) {
  if (dense_count < 1) throw ParameterError("dense prunable count must be at least 1");
  if (!std::isfinite(delta)) throw ParameterError("delta must be finite");
  const double target = std::pow(kKeepBase, delta) * static_cast<double>(dense_count);
  const auto rounded = static_cast<std::size_t>(std::floor(target + 0.5));
  return std::max<std::size_t>(1, std::min(rounded, dense_count));
}

// ---------------------------------------------------------------------------
// Scorers

GradFn make_loss_grad_fn(const Model& model, std::span<const LabeledBatch> data) {
  return [&model, data](const ParamSet& params) {
    std::size_t total = 0;
    for (const auto& b : data) total += b.y.size();
    if (total == 0) throw DataError("scoring set is empty");
    ParamSet acc;
    acc.reserve(params.size());
    for (const auto& p : params) acc.push_back(Tensor::zeros(p.shape()));
    for (const auto& b : data) {
      Tape tape;
      std::vector<Var> vars;
      vars.reserve(params.size());
      for (const auto& p : params) vars.push_back(tape.param(p));
      const Var loss = ops::softmax_cross_entropy(model.forward(tape, vars, tape.constant(b.x)), b.y);
      const Gradients g = backward(tape, loss);
      const double w = static_cast<double>(b.y.size()) / static_cast<double>(total);
      for (std::size_t t = 0; t < params.size(); ++t) {
        const Tensor& gt = g.wrt(vars[t]);
        for (std::size_t i = 0; i < gt.numel(); ++i) acc[t][i] += w * gt[i];
      }
    }
    return acc;
  };
}

ParamSet masked_parameters(const ParamRegistry& registry, const SparsityMask& mask) {
  mask.check_matches(registry);
  ParamSet p;
  p.reserve(registry.size());
  for (const auto& e : registry) p.push_back(e.value);
  for (const auto& e : mask.entries()) {
    Tensor& t = p[e.param_index];
    for (std::size_t i = 0; i < t.numel(); ++i)
      if (e.bits[i] == 0.0) t[i] = 0.0;
  }
  return p;
}

Scores snip_scores(const ParamRegistry& registry, const SparsityMask& mask, const ParamSet& grads) {
  mask.check_matches(registry);
  if (grads.size() != registry.size()) throw ShapeError("one gradient per parameter expected");
  return per_position(
      mask,
      [&](const SparsityMask::Entry& e, std::size_t i) {
        return std::abs(grads[e.param_index][i] * registry[e.param_index].value[i]);
      },
      -kInf);
}

Scores score_snip(const Model& model, const SparsityMask& mask, std::span<const LabeledBatch> pi) {
  if (pi.empty()) throw DataError("SNIP needs a non-empty scoring set");
  const ParamSet params = masked_parameters(model.registry(), mask);
  const ParamSet grads = make_loss_grad_fn(model, pi)(params);
  ParamRegistry masked = model.registry();
  for (std::size_t i = 0; i < masked.size(); ++i) masked[i].value = params[i];
  return snip_scores(masked, mask, grads);
}

Scores grasp_scores(const ParamRegistry& registry, const SparsityMask& mask, const GradFn& grad_fn,
                    std::optional<double> eps) {
  const ParamSet params = masked_parameters(registry, mask);
  const ParamSet g = grad_fn(params);
  if (g.size() != params.size()) throw ShapeError("gradient function returned the wrong number of tensors");
  ParamSet direction;
  direction.reserve(params.size());
  for (const auto& p : params) direction.push_back(Tensor::zeros(p.shape()));
  for (const auto& e : mask.entries()) {
    for (std::size_t i = 0; i < e.bits.numel(); ++i) direction[e.param_index][i] = g[e.param_index][i] * e.bits[i];
  }
  const ParamSet hg = hvp_fd(grad_fn, params, direction, eps.value_or(default_hvp_eps(params)));
  for (const auto& e : mask.entries()) {
    if (!hg[e.param_index].all_finite()) throw NumericError("non-finite Hessian-gradient product in GraSP");
  }
  return per_position(
      mask,
      [&](const SparsityMask::Entry& e, std::size_t i) {
        return -params[e.param_index][i] * hg[e.param_index][i];
      },
      kInf);
}

Scores score_grasp(const Model& model, const SparsityMask& mask, std::span<const LabeledBatch> pi) {
  if (pi.empty()) throw DataError("GraSP needs a non-empty scoring set");
  return grasp_scores(model.registry(), mask, make_loss_grad_fn(model, pi));
}

Scores score_magnitude(const ParamRegistry& registry, const SparsityMask& mask) {
  mask.check_matches(registry);
  return per_position(
      mask, [&](const SparsityMask::Entry& e, std::size_t i) { return std::abs(registry[e.param_index].value[i]); },
      -kInf);
}

Scores score_random(const SparsityMask& mask, std::uint64_t seed) {
  Philox rng(seed);
  Scores s;
  s.reserve(mask.total());
  for (const auto& e : mask.entries()) {
    for (std::size_t i = 0; i < e.bits.numel(); ++i) {
      const double u = rng.uniform();
      s.push_back(e.bits[i] != 0.0 ? u : -kInf);
    }
  }
  return s;
}

Scores keep_priority(Pruner pruner, Scores scores) {
  if (pruner == Pruner::grasp) {
    for (double& v : scores) v = -v;
  }
  return scores;
}

Scores score_for_pruning(Pruner pruner, const Model& model, const SparsityMask& mask,
                         std::span<const LabeledBatch> pi, std::uint64_t seed) {
  switch (pruner) {
    case Pruner::snip:
      return score_snip(model, mask, pi);
    case Pruner::grasp:
      return keep_priority(pruner, score_grasp(model, mask, pi));
    case Pruner::magnitude:
      return score_magnitude(model.registry(), mask);
    case Pruner::random:
      return score_random(mask, seed);
  }
  throw ParameterError("unknown pruner");
}

// ---------------------------------------------------------------------------
// Selection

SparsityMask prune_global(const SparsityMask& mask, const Scores& priority, std::size_t keep) {
  if (keep < 1) throw ParameterError("must keep at least one weight");
  if (keep > mask.kept_count()) {
    throw RefinementError("cannot keep " + std::to_string(keep) + " of " + std::to_string(mask.kept_count()) +
                          " remaining weights");
  }
  if (priority.size() != mask.total()) throw ShapeError("scores do not cover every prunable position");

  std::vector<std::size_t> candidates;
  candidates.reserve(mask.kept_count());
  std::vector<bool> keep_flat(mask.total(), false);
  std::size_t f = 0;
  for (const auto& e : mask.entries()) {
    for (std::size_t i = 0; i < e.bits.numel(); ++i, ++f) {
      if (e.bits[i] == 0.0) continue;
      if (std::isnan(priority[f])) throw NumericError("NaN pruning score at position " + std::to_string(f));
      candidates.push_back(f);
    }
  }
  const auto before = [&](std::size_t a, std::size_t b) {
    return priority[a] > priority[b] || (priority[a] == priority[b] && a < b);
  };
  if (keep < candidates.size()) {
    std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                     before);
  }
  for (std::size_t r = 0; r < keep; ++r) keep_flat[candidates[r]] = true;
  return mask.with_bits(keep_flat);
}

void apply_mask(ParamRegistry& registry, const SparsityMask& mask) {
  mask.check_matches(registry);
  for (const auto& e : mask.entries()) {
    Tensor& t = registry[e.param_index].value;
    for (std::size_t i = 0; i < t.numel(); ++i)
      if (e.bits[i] == 0.0) t[i] = 0.0;
  }
}

std::vector<LayerPruneStat> layer_pruned_fraction(const SparsityMask& mask, const ParamRegistry& registry) {
  mask.check_matches(registry);
  std::vector<LayerPruneStat> rows;
  LayerPruneStat global{"global", 0, 0};
  for (const auto& e : mask.entries()) {
    LayerPruneStat s{e.name, e.bits.numel(), 0};
    for (double b : e.bits.data()) s.kept += b != 0.0;
    global.total += s.total;
    global.kept += s.kept;
    rows.push_back(std::move(s));
  }
  rows.push_back(std::move(global));
  return rows;
}

std::string to_string(Pruner p) {
  switch (p) {
    case Pruner::snip: return "snip";
    case Pruner::grasp: return "grasp";
    case Pruner::magnitude: return "magnitude";
    case Pruner::random: return "random";
  }
  return "?";
}

std::optional<Pruner> parse_pruner(const std::string& s) {
  for (Pruner p : {Pruner::snip, Pruner::grasp, Pruner::magnitude, Pruner::random})
    if (to_string(p) == s) return p;
  return std::nullopt;
}

}  // namespace anyprune
