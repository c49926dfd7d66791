#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anyprune/pruning.hpp"

namespace anyprune {

// Accuracies are kept as exact counts; fractions are derived on demand.
struct EpochRecord {
  std::size_t megabatch = 0;  // 1-based
  std::size_t epoch = 0;      // 1-based within the megabatch
  std::size_t global_iter = 0;  // optimizer steps completed since the start of the stream
  double lr = 0.0;
  std::size_t train_correct = 0, train_total = 0;
  double train_loss = 0.0;  // mean over the epoch's samples
  std::size_t val_correct = 0, val_total = 0;
  double val_loss = 0.0;
  std::size_t kept_count = 0;

  double train_acc() const noexcept;
  double val_acc() const noexcept;
  bool operator==(const EpochRecord&) const = default;
};

// after_epoch == 0 means "before training the megabatch".
struct PruneEvent {
  std::size_t megabatch = 0;
  std::size_t after_epoch = 0;
  std::string pi_source;  // "replay" or "current"
  std::size_t pi_size = 0;
  double delta = 0.0;
  std::size_t keep_target = 0;
  std::size_t kept_before = 0;
  std::size_t kept_after = 0;
  bool operator==(const PruneEvent&) const = default;
};

enum class EventKind { megabatch_start, prune, epoch_end, checkpoint, test_eval, warning };
std::string to_string(EventKind k);

struct LogEvent {
  EventKind kind = EventKind::megabatch_start;
  std::size_t megabatch = 0;
  std::size_t epoch = 0;
  std::string detail;
  bool operator==(const LogEvent&) const = default;
};

struct MegabatchRecord {
  std::size_t megabatch = 0;
  std::size_t train_view = 0, val_view = 0;
  std::size_t best_epoch = 0;  // 1-based; the checkpoint carried forward
  std::size_t best_train_correct = 0, best_train_total = 0;
  std::size_t best_val_correct = 0, best_val_total = 0;
  std::size_t test_errors = 0, test_total = 0;
  std::size_t kept_count = 0;
  std::vector<LayerPruneStat> layers;  // prunable tensors only
  std::vector<int> predictions;        // one per test sample

  double test_acc() const noexcept;
  double gen_gap() const;  // percentage points at the best checkpoint
  bool operator==(const MegabatchRecord&) const = default;
};

struct MetricsLog {
  std::string run_id;
  std::string variant;
  std::string pruner;  // "none" for the dense baseline
  std::size_t expected_megabatches = 0;
  std::size_t dense_count = 0;  // prunable parameters of the dense model
  std::vector<int> test_labels;
  std::vector<EpochRecord> epochs;
  std::vector<MegabatchRecord> megabatches;
  std::vector<PruneEvent> prunes;
  std::vector<LogEvent> events;
  double wall_seconds = 0.0;
};

struct RunSummary {
  double final_test_accuracy = 0.0;  // percent
  std::size_t cer = 0;
  double final_gen_gap = 0.0;  // percentage points
  std::vector<std::size_t> kept_trajectory;
  std::vector<std::size_t> test_errors;
  std::size_t dense_count = 0;
  std::size_t test_size = 0;
  bool operator==(const RunSummary&) const = default;
};

// Facts about an execution that are not results: they may differ between
// runs that produce identical summaries.
struct RunMetadata {
  std::string run_id;
  std::string name;
  std::string variant;
  std::string pruner;
  std::string config_hash;
  double wall_seconds = 0.0;
  bool operator==(const RunMetadata&) const = default;
};

// Number of positions where predictions and labels differ.
std::size_t error_count(std::span<const int> predictions, std::span<const int> labels);
std::size_t cer(std::span<const std::size_t> per_megabatch_errors);

// 100 * (train_acc - val_acc); inputs are fractions in [0, 1].
double generalization_gap(double train_acc, double val_acc);

double fraction(std::size_t correct, std::size_t total) noexcept;

// Throws LogError when the log is incomplete or its error counts disagree
// with the stored predictions.
RunSummary summarize(const MetricsLog& log);

}  // namespace anyprune
