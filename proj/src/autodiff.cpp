#include "anyprune/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "anyprune/errors.hpp"

namespace anyprune {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_mat(const Tensor& t) {
  return ConstMatMap(t.raw(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
}
MatMap as_mat(Tensor& t) {
  return MatMap(t.raw(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

struct ConvGeom {
  std::size_t n, cin, h, w, cout, kh, kw, oh, ow;
};

ConvGeom conv_geometry(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (stride == 0) throw ShapeError("conv2d stride must be >= 1");
  ConvGeom g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernel.dim(0), kernel.dim(2), kernel.dim(3), 0, 0};
  if (kernel.dim(1) != g.cin) {
    throw ShapeError("conv2d channel mismatch: input " + shape_str(input.shape()) + ", kernel " +
                     shape_str(kernel.shape()));
  }
  if (g.kh > g.h + 2 * padding || g.kw > g.w + 2 * padding) {
    throw ShapeError("conv2d kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                     shape_str(input.shape()));
  }
  g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
  g.ow = (g.w + 2 * padding - g.kw) / stride + 1;
  return g;
}

// Calls fn(out_offset, in_offset) for every in-bounds (output, input) pixel
// pair of one kernel tap.
template <typename Fn>
void for_each_tap(const ConvGeom& g, std::size_t stride, std::size_t padding, std::size_t ki, std::size_t kj, Fn&& fn) {
  for (std::size_t oi = 0; oi < g.oh; ++oi) {
    const auto ii = static_cast<std::ptrdiff_t>(oi * stride + ki) - static_cast<std::ptrdiff_t>(padding);
    if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) continue;
    for (std::size_t oj = 0; oj < g.ow; ++oj) {
      const auto jj = static_cast<std::ptrdiff_t>(oj * stride + kj) - static_cast<std::ptrdiff_t>(padding);
      if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.w)) continue;
      fn(oi * g.ow + oj, static_cast<std::size_t>(ii) * g.w + static_cast<std::size_t>(jj));
    }
  }
}

void check_labels(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy logits");
  if (labels.size() != logits.dim(0)) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(logits.dim(0)) + " rows");
  }
  const auto classes = static_cast<int>(logits.dim(1));
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw LabelError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

// Row-wise softmax probabilities, stabilized by max subtraction.
Tensor softmax_rows(const Tensor& logits) {
  Tensor p(logits.shape());
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.raw() + i * c;
    double* out = p.raw() + i * c;
    const double m = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (out[j] = std::exp(row[j] - m));
    for (std::size_t j = 0; j < c; ++j) out[j] /= z;
  }
  return p;
}

Tape& tape_of(Var v) {
  if (!v.tape) throw TapeError("variable is not attached to a tape");
  return *v.tape;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), {}, requires_grad, nullptr, nullptr});
  return Var{nodes_.size() - 1, this};
}

Var Tape::record(std::vector<Var> inputs, ForwardRule forward, BackwardRule backward) {
  std::vector<const Tensor*> in;
  std::vector<std::size_t> ids;
  bool needs_grad = false;
  for (Var v : inputs) {
    if (!owns(v)) throw TapeError("operand is not recorded on this tape");
    in.push_back(&nodes_[v.id].value);
    ids.push_back(v.id);
    needs_grad = needs_grad || nodes_[v.id].requires_grad;
  }
  Tensor out = forward(in);
  nodes_.push_back(Node{std::move(out), std::move(ids), needs_grad, std::move(forward), std::move(backward)});
  return Var{nodes_.size() - 1, this};
}

const Tensor& Tape::value(Var v) const {
  if (!owns(v)) throw TapeError("value requested for a variable not on this tape");
  return nodes_[v.id].value;
}

bool Tape::requires_grad(Var v) const {
  if (!owns(v)) throw TapeError("variable not on this tape");
  return nodes_[v.id].requires_grad;
}

bool Tape::replay_matches() const {
  std::vector<Tensor> replayed;
  replayed.reserve(nodes_.size());
  for (const Node& node : nodes_) {
    if (!node.forward) {
      replayed.push_back(node.value);
      continue;
    }
    std::vector<const Tensor*> in;
    for (auto id : node.inputs) in.push_back(&replayed[id]);
    replayed.push_back(node.forward(in));
    if (!(replayed.back() == node.value)) return false;
  }
  return true;
}

const Tensor& Gradients::wrt(Var v) const& {
  if (!tape_ || !tape_->owns(v)) throw TapeError("gradient requested for a variable not on the tape");
  if (grads_[v.id]) return *grads_[v.id];
  if (zeros_.size() != grads_.size()) zeros_.resize(grads_.size());
  if (!zeros_[v.id]) zeros_[v.id] = Tensor::zeros(tape_->value(v).shape());
  return *zeros_[v.id];
}

Gradients backward(const Tape& tape, Var loss) {
  if (!tape.owns(loss)) throw TapeError("loss is not recorded on this tape");
  const auto& nodes = tape.nodes_;
  if (nodes[loss.id].value.numel() != 1) {
    throw TapeError("backward needs a scalar loss, got " + shape_str(nodes[loss.id].value.shape()));
  }
  Gradients g;
  g.tape_ = &tape;
  g.grads_.resize(nodes.size());
  g.grads_[loss.id] = Tensor(nodes[loss.id].value.shape(), 1.0);

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    const auto& node = nodes[id];
    if (!node.backward || !node.requires_grad || !g.grads_[id]) continue;
    std::vector<const Tensor*> in;
    std::vector<Tensor*> out_grads;
    for (auto pid : node.inputs) {
      in.push_back(&nodes[pid].value);
      if (nodes[pid].requires_grad) {
        if (!g.grads_[pid]) g.grads_[pid] = Tensor::zeros(nodes[pid].value.shape());
        out_grads.push_back(&*g.grads_[pid]);
      } else {
        out_grads.push_back(nullptr);
      }
    }
    // Two inputs can alias the same node (x * x); both pointers then target
    // one accumulator, which is exactly the product rule.
    node.backward(in, node.value, *g.grads_[id], out_grads);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Kernels

namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)});
  as_mat(c).noalias() = as_mat(a) * as_mat(b);
  return c;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  const ConvGeom g = conv_geometry(input, kernel, stride, padding);
  Tensor out({g.n, g.cout, g.oh, g.ow});
  const std::size_t in_plane = g.h * g.w, out_plane = g.oh * g.ow, taps = g.kh * g.kw;
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t o = 0; o < g.cout; ++o) {
      double* dst = out.raw() + (n * g.cout + o) * out_plane;
      for (std::size_t c = 0; c < g.cin; ++c) {
        const double* src = input.raw() + (n * g.cin + c) * in_plane;
        const double* k = kernel.raw() + (o * g.cin + c) * taps;
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
          for (std::size_t kj = 0; kj < g.kw; ++kj) {
            const double wv = k[ki * g.kw + kj];
            for_each_tap(g, stride, padding, ki, kj, [&](std::size_t oo, std::size_t io) { dst[oo] += wv * src[io]; });
          }
        }
      }
    }
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.raw() + i * c;
    const double m = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
    total += std::log(z) + m - row[labels[i]];
  }
  return total / static_cast<double>(n);
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Differentiable ops

namespace ops {

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a);
  return tape.record(
      {a, b}, [](auto in) { return kernels::matmul(*in[0], *in[1]); },
      [](auto in, const Tensor&, const Tensor& g, auto grads) {
        if (grads[0]) as_mat(*grads[0]).noalias() += as_mat(g) * as_mat(*in[1]).transpose();
        if (grads[1]) as_mat(*grads[1]).noalias() += as_mat(*in[0]).transpose() * as_mat(g);
      });
}

Var add_bias(Var x, Var bias) {
  Tape& tape = tape_of(x);
  return tape.record(
      {x, bias},
      [](auto in) {
        const Tensor& xv = *in[0];
        const Tensor& b = *in[1];
        require_rank(xv, 2, "add_bias input");
        if (b.numel() != xv.dim(1)) throw ShapeError("add_bias: bias size does not match columns");
        Tensor y = xv;
        const std::size_t n = y.dim(0), m = y.dim(1);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) y[i * m + j] += b[j];
        return y;
      },
      [](auto, const Tensor&, const Tensor& g, auto grads) {
        const std::size_t n = g.dim(0), m = g.dim(1);
        if (grads[0])
          for (std::size_t i = 0; i < g.numel(); ++i) (*grads[0])[i] += g[i];
        if (grads[1])
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) (*grads[1])[j] += g[i * m + j];
      });
}

Var add_channel_bias(Var x, Var bias) {
  Tape& tape = tape_of(x);
  return tape.record(
      {x, bias},
      [](auto in) {
        const Tensor& xv = *in[0];
        const Tensor& b = *in[1];
        require_rank(xv, 4, "add_channel_bias input");
        if (b.numel() != xv.dim(1)) throw ShapeError("add_channel_bias: bias size does not match channels");
        Tensor y = xv;
        const std::size_t plane = xv.dim(2) * xv.dim(3), c = xv.dim(1);
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] += b[(i / plane) % c];
        return y;
      },
      [](auto in, const Tensor&, const Tensor& g, auto grads) {
        const std::size_t plane = in[0]->dim(2) * in[0]->dim(3), c = in[0]->dim(1);
        if (grads[0])
          for (std::size_t i = 0; i < g.numel(); ++i) (*grads[0])[i] += g[i];
        if (grads[1])
          for (std::size_t i = 0; i < g.numel(); ++i) (*grads[1])[(i / plane) % c] += g[i];
      });
}

Var add(Var a, Var b) {
  Tape& tape = tape_of(a);
  return tape.record(
      {a, b},
      [](auto in) {
        require_same_shape(*in[0], *in[1], "add");
        Tensor y = *in[0];
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] += (*in[1])[i];
        return y;
      },
      [](auto, const Tensor&, const Tensor& g, auto grads) {
        for (Tensor* dst : grads)
          if (dst)
            for (std::size_t i = 0; i < g.numel(); ++i) (*dst)[i] += g[i];
      });
}

Var sub(Var a, Var b) {
  Tape& tape = tape_of(a);
  return tape.record(
      {a, b},
      [](auto in) {
        require_same_shape(*in[0], *in[1], "sub");
        Tensor y = *in[0];
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] -= (*in[1])[i];
        return y;
      },
      [](auto, const Tensor&, const Tensor& g, auto grads) {
        if (grads[0])
          for (std::size_t i = 0; i < g.numel(); ++i) (*grads[0])[i] += g[i];
        if (grads[1])
          for (std::size_t i = 0; i < g.numel(); ++i) (*grads[1])[i] -= g[i];
      });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of(a);
  return tape.record(
      {a, b},
      [](auto in) {
        require_same_shape(*in[0], *in[1], "mul");
        Tensor y = *in[0];
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= (*in[1])[i];
        return y;
      },
      [](auto in, const Tensor&, const Tensor& g, auto grads) {
        if (grads[0])
          for (std::size_t i = 0; i < g.numel(); ++i) (*grads[0])[i] += g[i] * (*in[1])[i];
        if (grads[1])
          for (std::size_t i = 0; i < g.numel(); ++i) (*grads[1])[i] += g[i] * (*in[0])[i];
      });
}

Var scale(Var x, double factor) {
  Tape& tape = tape_of(x);
  return tape.record(
      {x},
      [factor](auto in) {
        Tensor y = *in[0];
        for (double& v : y.data()) v *= factor;
        return y;
      },
      [factor](auto, const Tensor&, const Tensor& g, auto grads) {
        if (grads[0])
          for (std::size_t i = 0; i < g.numel(); ++i) (*grads[0])[i] += factor * g[i];
      });
}

Var sum(Var x) {
  Tape& tape = tape_of(x);
  return tape.record(
      {x},
      [](auto in) {
        double s = 0.0;
        for (double v : in[0]->data()) s += v;
        return Tensor::scalar(s);
      },
      [](auto, const Tensor&, const Tensor& g, auto grads) {
        if (grads[0])
          for (double& v : grads[0]->data()) v += g[0];
      });
}

Var relu(Var x) {
  Tape& tape = tape_of(x);
  return tape.record(
      {x}, [](auto in) { return kernels::relu(*in[0]); },
      [](auto in, const Tensor&, const Tensor& g, auto grads) {
        if (grads[0])
          for (std::size_t i = 0; i < g.numel(); ++i)
            if ((*in[0])[i] > 0.0) (*grads[0])[i] += g[i];
      });
}

Var reshape(Var x, Shape shape) {
  Tape& tape = tape_of(x);
  return tape.record(
      {x}, [shape](auto in) { return in[0]->reshaped(shape); },
      [](auto, const Tensor&, const Tensor& g, auto grads) {
        if (grads[0])
          for (std::size_t i = 0; i < g.numel(); ++i) (*grads[0])[i] += g[i];
      });
}

Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t padding) {
  Tape& tape = tape_of(input);
  return tape.record(
      {input, kernel}, [stride, padding](auto in) { return kernels::conv2d(*in[0], *in[1], stride, padding); },
      [stride, padding](auto in, const Tensor&, const Tensor& g, auto grads) {
        const Tensor& x = *in[0];
        const Tensor& k = *in[1];
        const ConvGeom geo = conv_geometry(x, k, stride, padding);
        const std::size_t in_plane = geo.h * geo.w, out_plane = geo.oh * geo.ow, taps = geo.kh * geo.kw;
        for (std::size_t n = 0; n < geo.n; ++n) {
          for (std::size_t o = 0; o < geo.cout; ++o) {
            const double* go = g.raw() + (n * geo.cout + o) * out_plane;
            for (std::size_t c = 0; c < geo.cin; ++c) {
              const double* src = x.raw() + (n * geo.cin + c) * in_plane;
              const double* kk = k.raw() + (o * geo.cin + c) * taps;
              double* dx = grads[0] ? grads[0]->raw() + (n * geo.cin + c) * in_plane : nullptr;
              double* dk = grads[1] ? grads[1]->raw() + (o * geo.cin + c) * taps : nullptr;
              for (std::size_t ki = 0; ki < geo.kh; ++ki) {
                for (std::size_t kj = 0; kj < geo.kw; ++kj) {
                  const double wv = kk[ki * geo.kw + kj];
                  double acc = 0.0;
                  for_each_tap(geo, stride, padding, ki, kj, [&](std::size_t oo, std::size_t io) {
                    if (dx) dx[io] += wv * go[oo];
                    acc += src[io] * go[oo];
                  });
                  if (dk) dk[ki * geo.kw + kj] += acc;
                }
              }
            }
          }
        }
      });
}

Var mean_pool2d(Var input, std::size_t window) {
  Tape& tape = tape_of(input);
  auto out_shape = [window](const Tensor& x) {
    require_rank(x, 4, "mean_pool2d input");
    if (window == 0 || x.dim(2) < window || x.dim(3) < window) {
      throw ShapeError("mean_pool2d window larger than input " + shape_str(x.shape()));
    }
    return Shape{x.dim(0), x.dim(1), x.dim(2) / window, x.dim(3) / window};
  };
  return tape.record(
      {input},
      [window, out_shape](auto in) {
        const Tensor& x = *in[0];
        Tensor y(out_shape(x));
        const std::size_t h = x.dim(2), w = x.dim(3), oh = y.dim(2), ow = y.dim(3);
        const double inv = 1.0 / static_cast<double>(window * window);
        for (std::size_t p = 0; p < x.dim(0) * x.dim(1); ++p)
          for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
              double s = 0.0;
              for (std::size_t a = 0; a < window; ++a)
                for (std::size_t b = 0; b < window; ++b) s += x[p * h * w + (i * window + a) * w + j * window + b];
              y[p * oh * ow + i * ow + j] = s * inv;
            }
        return y;
      },
      [window](auto in, const Tensor& y, const Tensor& g, auto grads) {
        if (!grads[0]) return;
        const Tensor& x = *in[0];
        const std::size_t h = x.dim(2), w = x.dim(3), oh = y.dim(2), ow = y.dim(3);
        const double inv = 1.0 / static_cast<double>(window * window);
        for (std::size_t p = 0; p < x.dim(0) * x.dim(1); ++p)
          for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
              const double gv = g[p * oh * ow + i * ow + j] * inv;
              for (std::size_t a = 0; a < window; ++a)
                for (std::size_t b = 0; b < window; ++b) (*grads[0])[p * h * w + (i * window + a) * w + j * window + b] += gv;
            }
      });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  Tape& tape = tape_of(logits);
  std::vector<int> y(labels.begin(), labels.end());
  check_labels(tape.value(logits), y);
  return tape.record(
      {logits}, [y](auto in) { return Tensor::scalar(kernels::softmax_cross_entropy(*in[0], y)); },
      [y](auto in, const Tensor&, const Tensor& g, auto grads) {
        if (!grads[0]) return;
        const Tensor p = softmax_rows(*in[0]);
        const std::size_t n = p.dim(0), c = p.dim(1);
        const double s = g[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            const double onehot = static_cast<int>(j) == y[i] ? 1.0 : 0.0;
            (*grads[0])[i * c + j] += s * (p[i * c + j] - onehot);
          }
      });
}

}  // namespace ops
}  // namespace anyprune
