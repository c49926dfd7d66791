#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "anyprune/config.hpp"
#include "anyprune/dataset.hpp"
#include "anyprune/metrics.hpp"
#include "anyprune/model.hpp"
#include "anyprune/optim.hpp"
#include "anyprune/pruning.hpp"

namespace anyprune {

// Indices into the pool the stream was built from.
struct MegabatchSplit {
  std::vector<std::size_t> train, val;
  std::size_t size() const noexcept { return train.size() + val.size(); }
};

struct MegabatchStream {
  std::vector<MegabatchSplit> megabatches;
  std::size_t megabatch_size = 0;
  std::size_t used = 0;     // samples after the per-class cap
  std::size_t dropped = 0;  // remainder that did not fill a megabatch
};

struct StreamOptions {
  std::size_t num_megabatches = 8;
  double val_fraction = 0.1;
  std::optional<std::size_t> per_class_cap;
  std::uint64_t seed = 0;
};

// Caps each class (uniform subsample), shuffles, cuts equal megabatches and
// splits each into train/validation. The remainder is dropped.
MegabatchStream build_stream(const Dataset& pool, const StreamOptions& options);

struct StreamView {
  std::vector<std::size_t> train, val;
};

// t is 1-based. Full replay unions the splits of M_1..M_t.
StreamView replay_view(const MegabatchStream& stream, std::size_t t, ReplayMode replay);

// Sorted uniform subset of size round(fraction * |train|), at least one.
std::vector<std::size_t> draw_pi(std::span<const std::size_t> train, double fraction, std::uint64_t seed);

// Learning rate for epoch (1-based) of megabatch t.
double lr_at(const RunConfig& config, std::size_t t, std::size_t epoch);

// Hooks for inspecting a run while it executes. Default implementations do
// nothing.
class RunObserver {
 public:
  virtual ~RunObserver() = default;
  virtual void megabatch_start(std::size_t /*t*/, const Model&, const SparsityMask*) {}
  virtual void prune(const PruneEvent&, const SparsityMask* /*before*/, const SparsityMask& /*after*/,
                     const Model&) {}
  virtual void step(std::size_t /*t*/, std::size_t /*global_iter*/, const Model&, const SparsityMask*,
                    const OptimState&) {}
  virtual void megabatch_end(std::size_t /*t*/, const Model&, const SparsityMask*) {}
};

// Replaces the mask (and zeroes the model accordingly) in the middle of
// training; receives the epoch it runs after.
using PruneHook = std::function<void(std::size_t epoch, Model& model, std::optional<SparsityMask>& mask)>;

struct TrainControls {
  std::size_t global_iter = 0;        // steps completed before this megabatch
  std::size_t prune_after_epoch = 0;  // 0: no hook
  PruneHook prune;
  RunObserver* observer = nullptr;
  std::vector<LogEvent>* events = nullptr;
};

struct TrainResult {
  std::vector<EpochRecord> records;
  std::optional<std::size_t> best;  // index into records
  ParamSet best_params;
  std::size_t global_iter = 0;  // after the last step
};

// Trains for config.epochs epochs on view.train, validating on view.val
// after each, and leaves the model at the best checkpoint (highest validation
// accuracy, earliest on ties). With a prune hook only epochs at or after the
// hook are eligible. Momentum starts from zero.
TrainResult train_megabatch(Model& model, std::optional<SparsityMask>& mask, const Dataset& data,
                            const StreamView& view, const RunConfig& config, std::size_t t,
                            TrainControls controls = {});

// Index of the record with the highest validation accuracy among epochs >=
// first_eligible; the earlier epoch wins ties.
std::optional<std::size_t> best_checkpoint(std::span<const EpochRecord> records, std::size_t first_eligible = 1);
bool improves_on(const EpochRecord& candidate, const EpochRecord* incumbent);

struct Evaluation {
  std::size_t correct = 0, total = 0;
  double loss = 0.0;  // mean cross-entropy
  std::vector<int> predictions;
};

// Deterministic forward pass; ties in the logits go to the lower class.
Evaluation evaluate(const Model& model, const Dataset& data, std::span<const std::size_t> indices);
Evaluation evaluate(const Model& model, const Dataset& data);

ModelSpec model_spec_for(const RunConfig& config, const Dataset& pool);

// Executes the configured variant over the whole stream.
MetricsLog run(const RunConfig& config, const Dataset& pool, const Dataset& test, RunObserver* observer = nullptr);

}  // namespace anyprune
