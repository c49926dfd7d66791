#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "anyprune/tensor.hpp"

namespace anyprune {

// Labeled samples stored row-wise: features is [n x d], labels in [0, C).
struct Dataset {
  Tensor features;
  std::vector<int> labels;
  std::size_t classes = 0;
  Shape sample_shape;  // e.g. {d} or {1, 28, 28}; numel == d

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return labels.empty() ? 0 : features.numel() / labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
};

struct LabeledBatch {
  Tensor x;
  std::vector<int> y;
};

// Rows of `data` selected by `indices`, in that order.
LabeledBatch gather(const Dataset& data, std::span<const std::size_t> indices);
Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

// Splits `indices` into consecutive batches of at most batch_size rows.
std::vector<LabeledBatch> make_batches(const Dataset& data, std::span<const std::size_t> indices,
                                       std::size_t batch_size);

// Throws DataError when labels fall outside [0, classes) or shapes disagree.
void validate_dataset(const Dataset& data);

}  // namespace anyprune
