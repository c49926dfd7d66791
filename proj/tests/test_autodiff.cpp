#include <cmath>

#include "anyprune/autodiff.hpp"
#include "anyprune/errors.hpp"
#include "anyprune/model.hpp"
#include "anyprune/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace anyprune;

TEST_CASE("matmul") {
  Tape tape;
  const Var eye = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  const Var b = tape.constant(Tensor::matrix({{3, 4}, {5, 6}}));
  CHECK(tape.value(ops::matmul(eye, b)) == Tensor::matrix({{3, 4}, {5, 6}}));
  // 1*3 + 2*4 = 11
  const Var r = tape.constant(Tensor::matrix({{1, 2}}));
  const Var c = tape.constant(Tensor::matrix({{3}, {4}}));
  CHECK(tape.value(ops::matmul(r, c))[0] == 11.0);
  const Var m23 = tape.constant(Tensor({2, 3}, 1.0));
  CHECK_THROWS_AS(ops::matmul(m23, m23), ShapeError);
}

TEST_CASE("conv2d") {
  SUBCASE("1x1 identity kernel copies the input") {
    const Tensor in = tensor_randn({2, 1, 3, 3}, 9, 1.0);
    CHECK(kernels::conv2d(in, Tensor({1, 1, 1, 1}, 1.0), 1, 0) == in);
  }
  SUBCASE("diagonal kernel: 1*1 + 4*1 = 5") {
    const Tensor in({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    const Tensor k({1, 1, 2, 2}, std::vector<double>{1, 0, 0, 1});
    const Tensor out = kernels::conv2d(in, k, 1, 0);
    CHECK(out.shape() == Shape{1, 1, 1, 1});
    CHECK(out[0] == 5.0);
  }
  SUBCASE("same padding keeps the spatial size") {
    const Tensor out = kernels::conv2d(Tensor({1, 1, 4, 4}, 1.0), Tensor({1, 1, 3, 3}, 1.0), 1, 1);
    CHECK(out.shape() == Shape{1, 1, 4, 4});
    CHECK(out[0] == 4.0);  // corner sees a 2x2 window
    CHECK(out[5] == 9.0);
  }
  SUBCASE("stride arithmetic") {
    const Tensor out = kernels::conv2d(Tensor({1, 1, 5, 5}, 1.0), Tensor({2, 1, 3, 3}, 1.0), 2, 0);
    CHECK(out.shape() == Shape{1, 2, 2, 2});
  }
  SUBCASE("kernel larger than padded input") {
    CHECK_THROWS_AS(kernels::conv2d(Tensor({1, 1, 2, 2}, 1.0), Tensor({1, 1, 5, 5}, 1.0), 1, 1), ShapeError);
  }
}

TEST_CASE("softmax cross-entropy") {
  const std::vector<int> zero{0};
  CHECK(kernels::softmax_cross_entropy(Tensor({1, 10}, 0.3), zero) == doctest::Approx(std::log(10.0)).epsilon(1e-14));
  const double big = kernels::softmax_cross_entropy(Tensor::matrix({{1000.0, 0.0}}), zero);
  CHECK(std::isfinite(big));
  CHECK(big == doctest::Approx(0.0));
  const std::vector<int> two{2};
  // -ln(e^3 / (e + e^2 + e^3))
  CHECK(kernels::softmax_cross_entropy(Tensor::matrix({{1, 2, 3}}), two) == doctest::Approx(0.4076059644443803));
  const std::vector<int> bad{3};
  CHECK_THROWS_AS(kernels::softmax_cross_entropy(Tensor::matrix({{1, 2, 3}}), bad), LabelError);
  const std::vector<int> neg{-1};
  CHECK_THROWS_AS(kernels::softmax_cross_entropy(Tensor::matrix({{1, 2, 3}}), neg), LabelError);
}

TEST_CASE("softmax cross-entropy logit gradients sum to zero per row") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tape tape;
    const Var logits = tape.param(tensor_randn({6, 5}, seed, 3.0));
    const std::vector<int> y{0, 1, 2, 3, 4, 0};
    const Var loss = ops::softmax_cross_entropy(logits, y);
    CHECK(tape.value(loss)[0] >= 0.0);
    const Tensor& g = backward(tape, loss).wrt(logits);
    for (std::size_t r = 0; r < 6; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 5; ++c) s += g.at(r, c);
      CHECK(std::abs(s) < 1e-12);
    }
  }
}

TEST_CASE("backward of sum(w^2)") {
  Tape tape;
  const Var w = tape.param(Tensor({3}, std::vector<double>{1, 2, 3}));
  const Var loss = ops::sum(ops::mul(w, w));
  CHECK(tape.value(loss)[0] == 14.0);
  CHECK(backward(tape, loss).wrt(w) == Tensor({3}, std::vector<double>{2, 4, 6}));
}

TEST_CASE("backward errors") {
  Tape a, b;
  const Var x = a.param(Tensor({2}, 1.0));
  const Var y = b.param(Tensor({2}, 1.0));
  CHECK_THROWS_AS(backward(a, y), TapeError);
  CHECK_THROWS_AS(backward(a, x), TapeError);  // not a scalar
  CHECK_THROWS_AS(ops::add(x, y), TapeError);
}

TEST_CASE("constants receive no gradient work and untouched params get zeros") {
  Tape tape;
  const Var w = tape.param(Tensor({2}, 1.0));
  const Var unused = tape.param(Tensor({4}, 1.0));
  const Var c = tape.constant(Tensor({2}, 3.0));
  CHECK_FALSE(tape.requires_grad(c));
  const Var loss = ops::sum(ops::mul(w, c));
  const Gradients g = backward(tape, loss);
  CHECK(g.wrt(w) == Tensor({2}, 3.0));
  CHECK(g.wrt(unused) == Tensor({4}, 0.0));
}

TEST_CASE("replaying the tape reproduces every output") {
  const Model m = build_model(ModelSpec::convnet({1, 6, 6}, {{2, 3, 1, 1}}, {5}, 3), 4);
  Tape tape;
  std::vector<Var> vars;
  for (const auto& e : m.registry()) vars.push_back(tape.param(e.value));
  const Var out = m.forward(tape, vars, tape.constant(tensor_randn({2, 36}, 8, 1.0)));
  const std::vector<int> y{0, 2};
  ops::softmax_cross_entropy(out, y);
  CHECK(tape.replay_matches());
}

namespace {

ParamSet tape_gradients(const Model& m, const ParamSet& params, const Tensor& x, const std::vector<int>& y) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& p : params) vars.push_back(tape.param(p));
  const Var loss = ops::softmax_cross_entropy(m.forward(tape, vars, tape.constant(x)), y);
  const Gradients g = backward(tape, loss);
  ParamSet out;
  for (Var v : vars) out.push_back(g.wrt(v));
  return out;
}

}  // namespace

TEST_CASE("MLP gradients match central finite differences of an independent forward") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Philox rng(seed);
    const std::size_t d = 3 + rng.below(5), hidden = 4 + rng.below(12), classes = 2 + rng.below(4);
    const Model m = build_model(ModelSpec::mlp(d, {hidden}, classes), seed);
    ParamSet params = m.parameters();
    for (auto& p : params)
      for (double& v : p.data()) v += 0.1 * rng.normal();  // nonzero biases too
    const std::size_t n = 4;
    const Tensor x = tensor_randn({n, d}, seed + 1000, 1.0);
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i) y.push_back(static_cast<int>(rng.below(classes)));
    const ParamSet analytic = tape_gradients(m, params, x, y);
    const ParamSet numeric = oracle::fd_gradient([&](const ParamSet& p) { return oracle::mlp_loss(p, x, y); }, params);
    CHECK(oracle::max_rel_error(analytic, numeric) < 1e-5);
  }
}

TEST_CASE("convnet gradients match central finite differences") {
  const Model m = build_model(ModelSpec::convnet({2, 6, 6}, {{3, 3, 1, 1}, {4, 3, 2, 1}}, {6}, 3), 17);
  ParamSet params = m.parameters();
  Philox rng(17);
  for (auto& p : params)
    for (double& v : p.data()) v += 0.05 * rng.normal();
  const Tensor x = tensor_randn({3, 72}, 99, 1.0);
  const std::vector<int> y{0, 1, 2};
  const ParamSet analytic = tape_gradients(m, params, x, y);
  auto loss = [&](const ParamSet& p) {
    Model copy = m;
    copy.set_parameters(p);
    return kernels::softmax_cross_entropy(copy.logits(x), y);
  };
  CHECK(oracle::max_rel_error(analytic, oracle::fd_gradient(loss, params)) < 1e-5);
}

TEST_CASE("hvp_fd step-halving consistency on a random MLP") {
  const Model m = build_model(ModelSpec::mlp(5, {7}, 3), 23);
  const Tensor x = tensor_randn({6, 5}, 24, 1.0);
  const std::vector<int> y{0, 1, 2, 0, 1, 2};
  const GradFn grad = [&](const ParamSet& p) { return tape_gradients(m, p, x, y); };
  const ParamSet params = m.parameters();
  ParamSet v;
  for (std::size_t i = 0; i < params.size(); ++i) v.push_back(tensor_randn(params[i].shape(), 50 + i, 1.0));
  const ParamSet a = hvp_fd(grad, params, v, 1e-4);
  const ParamSet b = hvp_fd(grad, params, v, 1e-5);
  CHECK(oracle::max_rel_error(a, b) < 1e-3);
}
