#include "anyprune/dataset.hpp"

#include <algorithm>
#include <string>

#include "anyprune/errors.hpp"

namespace anyprune {

LabeledBatch gather(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("cannot gather an empty batch");
  const std::size_t d = data.dim();
  LabeledBatch b{Tensor({indices.size(), d}), {}};
  b.y.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    if (i >= data.size()) throw IndexError("sample index " + std::to_string(i) + " out of range");
    std::copy_n(data.features.raw() + i * d, d, b.x.raw() + r * d);
    b.y.push_back(data.labels[i]);
  }
  return b;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  LabeledBatch b = gather(data, indices);
  return Dataset{std::move(b.x), std::move(b.y), data.classes, data.sample_shape};
}

std::vector<LabeledBatch> make_batches(const Dataset& data, std::span<const std::size_t> indices,
                                       std::size_t batch_size) {
  if (batch_size == 0) throw ParameterError("batch size must be positive");
  std::vector<LabeledBatch> out;
  for (std::size_t s = 0; s < indices.size(); s += batch_size) {
    out.push_back(gather(data, indices.subspan(s, std::min(batch_size, indices.size() - s))));
  }
  return out;
}

void validate_dataset(const Dataset& data) {
  if (data.empty()) throw DataError("dataset is empty");
  if (data.classes < 2) throw DataError("dataset needs at least two classes");
  if (data.features.rank() != 2 || data.features.dim(0) != data.size()) {
    throw DataError("features must be [n x d] with one row per label");
  }
  if (shape_numel(data.sample_shape) != data.features.dim(1)) {
    throw DataError("sample shape " + shape_str(data.sample_shape) + " does not match feature width");
  }
  for (int y : data.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= data.classes) {
      throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(data.classes) + ")");
    }
  }
}

}  // namespace anyprune
