#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anyprune/autodiff.hpp"
#include "anyprune/optim.hpp"
#include "anyprune/tensor.hpp"

namespace anyprune {

enum class ModelKind { mlp, convnet };

struct ConvLayerSpec {
  std::size_t out_channels = 8;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;

  bool operator==(const ConvLayerSpec&) const = default;
};

// mlp:     layer_sizes = d, hidden..., C with input_shape = {d}.
// convnet: input_shape = {channels, height, width}; every conv layer is
//          followed by relu and 2x2 mean pooling; layer_sizes lists the dense
//          head after flattening (hidden..., C).
struct ModelSpec {
  ModelKind kind = ModelKind::mlp;
  std::vector<std::size_t> layer_sizes;
  std::vector<ConvLayerSpec> conv_stack;
  Shape input_shape;
  std::size_t class_count = 0;

  static ModelSpec mlp(std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t classes);
  static ModelSpec convnet(Shape input_shape, std::vector<ConvLayerSpec> convs, std::vector<std::size_t> hidden,
                           std::size_t classes);

  // Throws SpecError when sizes are inconsistent.
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

struct ParamEntry {
  std::string name;
  Tensor value;
  bool prunable = false;
  std::size_t layer_index = 0;
};

// Ordered, uniquely named parameters. Weight matrices and convolution kernels
// are prunable; biases are not.
class ParamRegistry {
 public:
  void add(std::string name, Tensor value, bool prunable, std::size_t layer_index);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  ParamEntry& operator[](std::size_t i) { return entries_[i]; }
  const ParamEntry& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }

  std::optional<std::size_t> find(const std::string& name) const;

 private:
  std::vector<ParamEntry> entries_;
};

std::size_t count_params(const ParamRegistry& registry, bool prunable_only);

class Model {
 public:
  // Kaiming-normal weights (std sqrt(2 / fan_in)), zero biases; a pure
  // function of (spec, seed).
  static Model build(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const noexcept { return spec_; }
  ParamRegistry& registry() noexcept { return registry_; }
  const ParamRegistry& registry() const noexcept { return registry_; }

  ParamSet parameters() const;
  void set_parameters(const ParamSet& values);

  // Records the forward pass; params are aligned with the registry. batch is
  // either [n x d] or [n x input_shape...].
  Var forward(Tape& tape, std::span<const Var> params, Var batch) const;

  // Untaped logits [n x C] using the current parameter values.
  Tensor logits(const Tensor& batch) const;

  std::size_t input_numel() const noexcept { return shape_numel(spec_.input_shape); }

 private:
  ModelSpec spec_;
  ParamRegistry registry_;
};

inline Model build_model(const ModelSpec& spec, std::uint64_t seed) { return Model::build(spec, seed); }

}  // namespace anyprune
