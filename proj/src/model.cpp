#include "anyprune/model.hpp"

#include <cmath>
#include <set>

#include "anyprune/errors.hpp"
#include "anyprune/rng.hpp"

namespace anyprune {
namespace {

// Spatial size after one conv + 2x2 pool, or nullopt when it collapses.
std::optional<std::pair<std::size_t, std::size_t>> conv_pool_out(std::size_t h, std::size_t w, const ConvLayerSpec& c) {
  if (c.kernel == 0 || c.stride == 0) return std::nullopt;
  if (c.kernel > h + 2 * c.padding || c.kernel > w + 2 * c.padding) return std::nullopt;
  const std::size_t oh = (h + 2 * c.padding - c.kernel) / c.stride + 1;
  const std::size_t ow = (w + 2 * c.padding - c.kernel) / c.stride + 1;
  if (oh < 2 || ow < 2) return std::nullopt;
  return std::make_pair(oh / 2, ow / 2);
}

std::size_t flattened_conv_dim(const ModelSpec& spec) {
  std::size_t ch = spec.input_shape[0], h = spec.input_shape[1], w = spec.input_shape[2];
  for (std::size_t i = 0; i < spec.conv_stack.size(); ++i) {
    const auto& c = spec.conv_stack[i];
    const auto out = conv_pool_out(h, w, c);
    if (!out || c.out_channels == 0) throw SpecError("conv layer " + std::to_string(i + 1) + " does not fit its input");
    std::tie(h, w) = *out;
    ch = c.out_channels;
  }
  return ch * h * w;
}

}  // namespace

ModelSpec ModelSpec::mlp(std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t classes) {
  ModelSpec s;
  s.kind = ModelKind::mlp;
  s.input_shape = {input_dim};
  s.layer_sizes.push_back(input_dim);
  s.layer_sizes.insert(s.layer_sizes.end(), hidden.begin(), hidden.end());
  s.layer_sizes.push_back(classes);
  s.class_count = classes;
  return s;
}

ModelSpec ModelSpec::convnet(Shape input_shape, std::vector<ConvLayerSpec> convs, std::vector<std::size_t> hidden,
                             std::size_t classes) {
  ModelSpec s;
  s.kind = ModelKind::convnet;
  s.input_shape = std::move(input_shape);
  s.conv_stack = std::move(convs);
  s.layer_sizes = std::move(hidden);
  s.layer_sizes.push_back(classes);
  s.class_count = classes;
  return s;
}

void ModelSpec::validate() const {
  if (class_count < 2) throw SpecError("class count must be at least 2");
  if (input_shape.empty()) throw SpecError("input shape is empty");
  for (auto d : input_shape)
    if (d == 0) throw SpecError("input shape has a zero dimension");
  for (auto d : layer_sizes)
    if (d == 0) throw SpecError("layer sizes must be positive");
  if (layer_sizes.empty() || layer_sizes.back() != class_count) {
    throw SpecError("last layer size must equal the class count " + std::to_string(class_count));
  }
  if (kind == ModelKind::mlp) {
    if (layer_sizes.size() < 2) throw SpecError("mlp needs at least input and output sizes");
    if (layer_sizes.front() != shape_numel(input_shape)) {
      throw SpecError("first mlp size " + std::to_string(layer_sizes.front()) + " differs from input dimension " +
                      std::to_string(shape_numel(input_shape)));
    }
    if (!conv_stack.empty()) throw SpecError("mlp spec must not carry conv layers");
  } else {
    if (input_shape.size() != 3) throw SpecError("convnet input shape must be channels x height x width");
    if (conv_stack.empty()) throw SpecError("convnet needs at least one conv layer");
    flattened_conv_dim(*this);
  }
}

void ParamRegistry::add(std::string name, Tensor value, bool prunable, std::size_t layer_index) {
  if (find(name)) throw SpecError("duplicate parameter name " + name);
  entries_.push_back(ParamEntry{std::move(name), std::move(value), prunable, layer_index});
}

std::optional<std::size_t> ParamRegistry::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  return std::nullopt;
}

std::size_t count_params(const ParamRegistry& registry, bool prunable_only) {
  std::size_t n = 0;
  for (const auto& e : registry)
    if (e.prunable || !prunable_only) n += e.value.numel();
  return n;
}

Model Model::build(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model m;
  m.spec_ = spec;
  std::uint64_t tensor_id = 0;
  auto kaiming = [&](Shape shape, std::size_t fan_in) {
    return tensor_randn(shape, derive_seed(seed, tensor_id++), std::sqrt(2.0 / static_cast<double>(fan_in)));
  };
  std::size_t layer = 0;
  std::size_t in_dim = spec.layer_sizes.front();
  std::size_t first_dense = 1;
  if (spec.kind == ModelKind::convnet) {
    std::size_t ch = spec.input_shape[0];
    for (std::size_t i = 0; i < spec.conv_stack.size(); ++i) {
      const auto& c = spec.conv_stack[i];
      const std::string base = "conv" + std::to_string(i + 1);
      m.registry_.add(base + ".weight", kaiming({c.out_channels, ch, c.kernel, c.kernel}, ch * c.kernel * c.kernel),
                      true, layer);
      m.registry_.add(base + ".bias", Tensor::zeros({c.out_channels}), false, layer);
      ch = c.out_channels;
      ++layer;
    }
    in_dim = flattened_conv_dim(spec);
    first_dense = 0;
  }
  for (std::size_t i = first_dense, fc = 1; i < spec.layer_sizes.size(); ++i, ++fc) {
    const std::size_t out_dim = spec.layer_sizes[i];
    const std::string base = "fc" + std::to_string(fc);
    m.registry_.add(base + ".weight", kaiming({in_dim, out_dim}, in_dim), true, layer);
    m.registry_.add(base + ".bias", Tensor::zeros({out_dim}), false, layer);
    in_dim = out_dim;
    ++layer;
  }
  return m;
}

ParamSet Model::parameters() const {
  ParamSet out;
  out.reserve(registry_.size());
  for (const auto& e : registry_) out.push_back(e.value);
  return out;
}

void Model::set_parameters(const ParamSet& values) {
  if (values.size() != registry_.size()) throw ShapeError("parameter count differs from registry");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != registry_[i].value.shape()) {
      throw ShapeError("parameter " + registry_[i].name + " expects " + shape_str(registry_[i].value.shape()));
    }
    registry_[i].value = values[i];
  }
}

Var Model::forward(Tape& tape, std::span<const Var> params, Var batch) const {
  if (params.size() != registry_.size()) throw ShapeError("forward needs one variable per registered parameter");
  const Tensor& x = tape.value(batch);
  const std::size_t d = input_numel();
  if (x.numel() % d != 0 || x.dim(0) * d != x.numel()) {
    throw ShapeError("batch " + shape_str(x.shape()) + " is not compatible with input " +
                     shape_str(spec_.input_shape));
  }
  const std::size_t n = x.dim(0);
  std::size_t p = 0;
  Var h = batch;
  if (spec_.kind == ModelKind::convnet) {
    Shape img{n};
    img.insert(img.end(), spec_.input_shape.begin(), spec_.input_shape.end());
    if (x.shape() != img) h = ops::reshape(h, img);
    for (const auto& c : spec_.conv_stack) {
      h = ops::conv2d(h, params[p], c.stride, c.padding);
      h = ops::add_channel_bias(h, params[p + 1]);
      h = ops::mean_pool2d(ops::relu(h), 2);
      p += 2;
    }
    h = ops::reshape(h, {n, tape.value(h).numel() / n});
  } else if (x.rank() != 2) {
    h = ops::reshape(h, {n, d});
  }
  const std::size_t dense_layers = (registry_.size() - p) / 2;
  for (std::size_t i = 0; i < dense_layers; ++i, p += 2) {
    h = ops::add_bias(ops::matmul(h, params[p]), params[p + 1]);
    if (i + 1 < dense_layers) h = ops::relu(h);
  }
  return h;
}

Tensor Model::logits(const Tensor& batch) const {
  Tape tape;
  std::vector<Var> params;
  params.reserve(registry_.size());
  for (const auto& e : registry_) params.push_back(tape.constant(e.value));
  const Var out = forward(tape, params, tape.constant(batch));
  return tape.value(out);
}

}  // namespace anyprune
