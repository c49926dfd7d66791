#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anyprune/dataset.hpp"
#include "anyprune/model.hpp"
#include "anyprune/optim.hpp"

namespace anyprune {

enum class Pruner { snip, grasp, magnitude, random };

// Binary keep-masks for the prunable tensors of a registry, in registry order.
// Positions are addressed globally by a flat index: prunable tensors in
// registry order, row-major within each tensor.
class SparsityMask {
 public:
  struct Entry {
    std::string name;
    std::size_t param_index = 0;
    Tensor bits;  // exactly 0.0 or 1.0
  };

  static SparsityMask ones(const ParamRegistry& registry);

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t kept_count() const noexcept { return kept_; }
  std::size_t total() const noexcept { return total_; }
  bool kept(std::size_t flat) const;

  // Builds a mask with the same layout from a flat 0/1 vector.
  SparsityMask with_bits(const std::vector<bool>& flat_keep) const;

  // support(*this) is a subset of support(parent).
  bool is_subset_of(const SparsityMask& parent) const;

  // One pointer per registry entry: the mask for prunable tensors, nullptr
  // for the rest. Suitable for sgd_momentum_step.
  std::vector<const Tensor*> aligned(std::size_t registry_size) const;

  // Throws ShapeError when the layout does not match the registry.
  void check_matches(const ParamRegistry& registry) const;

  bool operator==(const SparsityMask& other) const;

 private:
  std::vector<Entry> entries_;
  std::size_t kept_ = 0;
  std::size_t total_ = 0;
};

// Uniformly spaced sparsity exponents from 1 to tau; keep fraction at step t
// is 0.8^delta_t of the dense model.
struct DeltaSchedule {
  double tau = 1.0;
  std::size_t steps = 1;
  std::vector<double> values;
};

DeltaSchedule make_delta_schedule(double tau, std::size_t steps);

inline constexpr double kKeepBase = 0.8;

// max(1, round_half_up(0.8^delta * dense_count)).
std::size_t keep_count(double delta, std::size_t dense_count);

// Flat scores, one per prunable position.
using Scores = std::vector<double>;

// Mean cross-entropy gradient over every sample of `data`, accumulated as
// sum_b (n_b / N) * grad(mean loss of batch b). Parameters are taken as given.
GradFn make_loss_grad_fn(const Model& model, std::span<const LabeledBatch> data);

// Parameter values multiplied by the mask.
ParamSet masked_parameters(const ParamRegistry& registry, const SparsityMask& mask);

// |g * w| at kept positions, -inf at pruned ones.
Scores snip_scores(const ParamRegistry& registry, const SparsityMask& mask, const ParamSet& grads);
Scores score_snip(const Model& model, const SparsityMask& mask, std::span<const LabeledBatch> pi);

// -w * (H g) at kept positions with H g from hvp_fd; pruned positions are
// +inf. Small scores are the ones worth keeping (see keep_priority).
Scores grasp_scores(const ParamRegistry& registry, const SparsityMask& mask, const GradFn& grad_fn,
                    std::optional<double> eps = std::nullopt);
Scores score_grasp(const Model& model, const SparsityMask& mask, std::span<const LabeledBatch> pi);

Scores score_magnitude(const ParamRegistry& registry, const SparsityMask& mask);
Scores score_random(const SparsityMask& mask, std::uint64_t seed);

// Converts a scorer's output into "higher is kept" order. Identity for every
// pruner except GraSP, whose scores are negated.
Scores keep_priority(Pruner pruner, Scores scores);

// Scores the model with the chosen pruner and returns keep priorities.
Scores score_for_pruning(Pruner pruner, const Model& model, const SparsityMask& mask,
                         std::span<const LabeledBatch> pi, std::uint64_t seed);

// Keeps the `keep` highest-priority positions among those currently kept,
// across all prunable tensors jointly. Equal priorities keep the smaller
// flat index.
SparsityMask prune_global(const SparsityMask& mask, const Scores& priority, std::size_t keep);

void apply_mask(ParamRegistry& registry, const SparsityMask& mask);
inline void apply_mask(Model& model, const SparsityMask& mask) { apply_mask(model.registry(), mask); }

struct LayerPruneStat {
  std::string name;  // "global" for the summary row
  std::size_t total = 0;
  std::size_t kept = 0;
  std::size_t pruned() const noexcept { return total - kept; }
  double fraction() const noexcept { return total ? static_cast<double>(pruned()) / static_cast<double>(total) : 0.0; }
  bool operator==(const LayerPruneStat&) const = default;
};

// One row per prunable tensor followed by a "global" row.
std::vector<LayerPruneStat> layer_pruned_fraction(const SparsityMask& mask, const ParamRegistry& registry);

std::string to_string(Pruner p);
std::optional<Pruner> parse_pruner(const std::string& s);

}  // namespace anyprune
