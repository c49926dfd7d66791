#include "anyprune/metrics.hpp"

#include <cmath>
#include <numeric>

#include "anyprune/errors.hpp"

namespace anyprune {

double fraction(std::size_t correct, std::size_t total) noexcept {
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

double EpochRecord::train_acc() const noexcept { return fraction(train_correct, train_total); }
double EpochRecord::val_acc() const noexcept { return fraction(val_correct, val_total); }

double MegabatchRecord::test_acc() const noexcept { return fraction(test_total - test_errors, test_total); }

double MegabatchRecord::gen_gap() const {
  return generalization_gap(fraction(best_train_correct, best_train_total), fraction(best_val_correct, best_val_total));
}

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::megabatch_start: return "megabatch_start";
    case EventKind::prune: return "prune";
    case EventKind::epoch_end: return "epoch_end";
    case EventKind::checkpoint: return "checkpoint";
    case EventKind::test_eval: return "test_eval";
    case EventKind::warning: return "warning";
  }
  return "?";
}

std::size_t error_count(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw ShapeError("error_count: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  std::size_t n = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) n += predictions[i] != labels[i];
  return n;
}

std::size_t cer(std::span<const std::size_t> per_megabatch_errors) {
  return std::accumulate(per_megabatch_errors.begin(), per_megabatch_errors.end(), std::size_t{0});
}

double generalization_gap(double train_acc, double val_acc) {
  auto ok = [](double a) { return std::isfinite(a) && a >= 0.0 && a <= 1.0; };
  if (!ok(train_acc) || !ok(val_acc)) throw ParameterError("accuracies must be fractions in [0, 1]");
  return 100.0 * (train_acc - val_acc);
}

RunSummary summarize(const MetricsLog& log) {
  if (log.megabatches.empty()) throw LogError("log has no megabatch records");
  if (log.megabatches.size() != log.expected_megabatches) {
    throw LogError("log has " + std::to_string(log.megabatches.size()) + " of " +
                   std::to_string(log.expected_megabatches) + " megabatch records");
  }
  RunSummary s;
  s.dense_count = log.dense_count;
  s.test_size = log.test_labels.size();
  for (const auto& m : log.megabatches) {
    if (m.test_total != s.test_size || m.predictions.size() != s.test_size) {
      throw LogError("megabatch " + std::to_string(m.megabatch) + " was not evaluated on the full test set");
    }
    if (error_count(m.predictions, log.test_labels) != m.test_errors) {
      throw LogError("megabatch " + std::to_string(m.megabatch) + " error count disagrees with its predictions");
    }
    s.test_errors.push_back(m.test_errors);
    s.kept_trajectory.push_back(m.kept_count);
  }
  s.cer = cer(s.test_errors);
  const auto& last = log.megabatches.back();
  s.final_test_accuracy = 100.0 * last.test_acc();
  s.final_gen_gap = last.gen_gap();
  return s;
}

}  // namespace anyprune
