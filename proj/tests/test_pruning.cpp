#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "anyprune/errors.hpp"
#include "anyprune/pruning.hpp"
#include "anyprune/rng.hpp"
#include "doctest.h"

using namespace anyprune;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ParamRegistry vector_registry(std::vector<double> w) {
  ParamRegistry r;
  const std::size_t n = w.size();
  r.add("w", Tensor({n}, std::move(w)), true, 0);
  return r;
}

std::vector<std::size_t> kept_indices(const SparsityMask& m) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.total(); ++i)
    if (m.kept(i)) out.push_back(i);
  return out;
}

// Full sort by (priority desc, index asc) over currently kept positions.
std::vector<std::size_t> brute_force_keep(const SparsityMask& m, const Scores& s, std::size_t keep) {
  std::vector<std::size_t> cand = kept_indices(m);
  std::stable_sort(cand.begin(), cand.end(), [&](auto a, auto b) { return s[a] > s[b]; });
  cand.resize(keep);
  std::sort(cand.begin(), cand.end());
  return cand;
}

Dataset toy_data(std::size_t n, std::size_t d, std::size_t classes, std::uint64_t seed) {
  Philox rng(seed);
  Dataset ds{tensor_randn({n, d}, seed, 1.0), {}, classes, {d}};
  for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(static_cast<int>(rng.below(classes)));
  return ds;
}

}  // namespace

TEST_CASE("delta schedule") {
  const auto s = make_delta_schedule(4.5, 8);
  const std::vector<double> expect{1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5};
  REQUIRE(s.values.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(s.values[i] - expect[i]) < 1e-12);
  CHECK(s.values.front() == 1.0);
  CHECK(s.values.back() == 4.5);
  CHECK(make_delta_schedule(4.5, 1).values == std::vector<double>{4.5});
  CHECK_THROWS_AS(make_delta_schedule(0.5, 3), ParameterError);
  CHECK_THROWS_AS(make_delta_schedule(4.5, 0), ParameterError);
  // 0.8^4.5 = 0.3663574..., i.e. 36.63% of the dense weights remain.
  CHECK(std::pow(kKeepBase, 4.5) == doctest::Approx(0.36635737743356554).epsilon(1e-15));
}

TEST_CASE("keep_count") {
  CHECK(keep_count(1.0, 1000) == 800);
  CHECK(keep_count(4.5, 10000) == 3664);  // 3663.57... rounds up
  CHECK(keep_count(20.0, 3) == 1);
  CHECK_THROWS_AS(keep_count(1.0, 0), ParameterError);
  // Values of 0.8^delta * 1e4 evaluated at 40 digits, rounded half up.
  const std::vector<std::size_t> expect{8000, 7155, 6400, 5724, 5120, 4579, 4096, 3664};
  const auto s = make_delta_schedule(4.5, 8);
  for (std::size_t i = 0; i < 8; ++i) CHECK(keep_count(s.values[i], 10000) == expect[i]);
}

TEST_CASE("SNIP on a hand-differentiated linear model") {
  // pred = w.x, loss = 0.5 (pred - y)^2, w = [2, -3], x = [1, 2], y = 0
  // pred = -4, g = -4 x = [-4, -8], |g * w| = [8, 24]
  const ParamRegistry r = vector_registry({2.0, -3.0});
  const SparsityMask mask = SparsityMask::ones(r);
  Tape tape;
  const Var w = tape.param(r[0].value);
  const Var x = tape.constant(Tensor({2}, std::vector<double>{1.0, 2.0}));
  const Var diff = ops::sum(ops::mul(w, x));
  const Var loss = ops::scale(ops::mul(diff, diff), 0.5);
  const ParamSet grads{backward(tape, loss).wrt(w)};
  CHECK(grads[0] == Tensor({2}, std::vector<double>{-4.0, -8.0}));
  const Scores s = snip_scores(r, mask, grads);
  CHECK(s == Scores{8.0, 24.0});

  const ParamRegistry zero = vector_registry({0.0, 0.0});
  CHECK(snip_scores(zero, SparsityMask::ones(zero), grads) == Scores{0.0, 0.0});
}

TEST_CASE("SNIP scores are invariant to mini-batch partition of the scoring set") {
  const Model m = build_model(ModelSpec::mlp(6, {12}, 3), 4);
  const Dataset data = toy_data(40, 6, 3, 5);
  std::vector<std::size_t> idx(40);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const SparsityMask mask = SparsityMask::ones(m.registry());
  const Scores whole = score_snip(m, mask, make_batches(data, idx, 40));
  const Scores pieces = score_snip(m, mask, make_batches(data, idx, 7));
  std::reverse(idx.begin(), idx.end());
  const Scores reversed = score_snip(m, mask, make_batches(data, idx, 3));
  for (std::size_t i = 0; i < whole.size(); ++i) {
    CHECK(std::abs(whole[i] - pieces[i]) < 1e-10);
    CHECK(std::abs(whole[i] - reversed[i]) < 1e-10);
  }
  CHECK_THROWS_AS(score_snip(m, mask, {}), DataError);
}

TEST_CASE("GraSP on an analytic quadratic") {
  // L = 0.5 w^T diag(2, 4) w, w = [1, 1]: g = [2, 4], Hg = [4, 16], -w*Hg = [-4, -16]
  const GradFn grad = [](const ParamSet& p) {
    return ParamSet{Tensor({2}, std::vector<double>{2.0 * p[0][0], 4.0 * p[0][1]})};
  };
  const ParamRegistry r = vector_registry({1.0, 1.0});
  const Scores s = grasp_scores(r, SparsityMask::ones(r), grad);
  CHECK(s[0] == doctest::Approx(-4.0).epsilon(1e-8));
  CHECK(s[1] == doctest::Approx(-16.0).epsilon(1e-8));
  // GraSP keeps the smallest scores: position 1.
  const SparsityMask kept = prune_global(SparsityMask::ones(r), keep_priority(Pruner::grasp, s), 1);
  CHECK(kept_indices(kept) == std::vector<std::size_t>{1});

  const ParamRegistry zero = vector_registry({0.0, 0.0});
  const Scores z = grasp_scores(zero, SparsityMask::ones(zero), grad);
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.0);
}

TEST_CASE("GraSP on a random MLP is finite and excludes pruned positions") {
  const Model m = build_model(ModelSpec::mlp(5, {9}, 3), 12);
  const Dataset data = toy_data(20, 5, 3, 13);
  std::vector<std::size_t> idx(20);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto pi = make_batches(data, idx, 8);
  SparsityMask mask = SparsityMask::ones(m.registry());
  mask = prune_global(mask, score_magnitude(m.registry(), mask), 40);
  const Scores s = score_grasp(m, mask, pi);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (mask.kept(i)) {
      CHECK(std::isfinite(s[i]));
    } else {
      CHECK(s[i] == kInf);
    }
  }
  const ParamSet before = m.parameters();
  score_grasp(m, mask, pi);
  CHECK(m.parameters() == before);
}

TEST_CASE("magnitude and random scorers") {
  const ParamRegistry r = vector_registry({-5.0, 1.0, 3.0});
  SparsityMask mask = SparsityMask::ones(r);
  CHECK(score_magnitude(r, mask) == Scores{5.0, 1.0, 3.0});
  CHECK(score_random(mask, 3) == score_random(mask, 3));
  CHECK_FALSE(score_random(mask, 3) == score_random(mask, 4));
  mask = prune_global(mask, score_magnitude(r, mask), 2);
  const Scores s = score_magnitude(r, mask);
  CHECK(s[1] == -kInf);
  CHECK(score_random(mask, 3)[1] == -kInf);

  // Equal magnitudes resolve to the smallest flat indices.
  const ParamRegistry flat = vector_registry({-2.0, 2.0, 2.0, -2.0});
  const SparsityMask m2 = SparsityMask::ones(flat);
  CHECK(kept_indices(prune_global(m2, score_magnitude(flat, m2), 2)) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("prune_global basics") {
  const ParamRegistry r = vector_registry({0, 0, 0, 0});
  const SparsityMask all = SparsityMask::ones(r);
  CHECK(kept_indices(prune_global(all, {5, 1, 3, 2}, 2)) == std::vector<std::size_t>{0, 2});
  CHECK(kept_indices(prune_global(all, {2, 2, 2, 2}, 2)) == std::vector<std::size_t>{0, 1});
  CHECK_THROWS_AS(prune_global(all, {1, 2, 3, 4}, 0), ParameterError);
  const SparsityMask two = prune_global(all, {1, 2, 3, 4}, 2);
  CHECK_THROWS_AS(prune_global(two, {1, 2, 3, 4}, 3), RefinementError);
  CHECK_THROWS_AS(prune_global(all, {1, 2, 3}, 2), ShapeError);
  CHECK_THROWS_AS(prune_global(all, {1, std::nan(""), 3, 4}, 2), NumericError);
  // A pruned index never comes back, whatever its score.
  const SparsityMask again = prune_global(two, {1e9, 1e9, 0, 0}, 1);
  CHECK(again.is_subset_of(two));
  CHECK(kept_indices(again) == std::vector<std::size_t>{2});
}

TEST_CASE("tie-break exhaustively on all small score vectors") {
  // Every score vector over {0,1,2} of length <= 6, every prior mask, every keep.
  for (std::size_t n = 1; n <= 6; ++n) {
    std::vector<double> w(n, 1.0);
    const ParamRegistry r = vector_registry(w);
    const SparsityMask all = SparsityMask::ones(r);
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= 3;
    for (std::size_t code = 0; code < combos; ++code) {
      Scores s(n);
      for (std::size_t i = 0, c = code; i < n; ++i, c /= 3) s[i] = static_cast<double>(c % 3);
      for (std::size_t prior = 1; prior < (1u << n); ++prior) {
        std::vector<bool> bits(n);
        for (std::size_t i = 0; i < n; ++i) bits[i] = (prior >> i) & 1u;
        const SparsityMask m = all.with_bits(bits);
        for (std::size_t keep = 1; keep <= m.kept_count(); ++keep) {
          const SparsityMask out = prune_global(m, s, keep);
          REQUIRE(kept_indices(out) == brute_force_keep(m, s, keep));
          REQUIRE(out.kept_count() == keep);
        }
      }
    }
  }
}

TEST_CASE("selection across tensors is global") {
  ParamRegistry r;
  r.add("a.weight", Tensor({2, 2}, 0.0), true, 0);
  r.add("a.bias", Tensor({2}, 0.0), false, 0);
  r.add("b.weight", Tensor({3}, 0.0), true, 1);
  const SparsityMask all = SparsityMask::ones(r);
  CHECK(all.total() == 7);
  // Highest three all live in the second tensor.
  const SparsityMask out = prune_global(all, {0.1, 0.2, 0.3, 0.4, 9, 8, 7}, 3);
  CHECK(kept_indices(out) == std::vector<std::size_t>{4, 5, 6});
  const auto stats = layer_pruned_fraction(out, r);
  REQUIRE(stats.size() == 3);
  CHECK(stats[0].name == "a.weight");
  CHECK(stats[0].fraction() == 1.0);
  CHECK(stats[1].fraction() == 0.0);
  CHECK(stats[2].name == "global");
  CHECK(stats[0].pruned() + stats[1].pruned() == stats[2].pruned());
}

TEST_CASE("apply_mask") {
  Model m = build_model(ModelSpec::mlp(3, {4}, 2), 1);
  const ParamSet before = m.parameters();
  apply_mask(m, SparsityMask::ones(m.registry()));
  CHECK(m.parameters() == before);

  SparsityMask mask = SparsityMask::ones(m.registry());
  Scores s(mask.total(), 0.0);
  s[5] = 1.0;
  mask = prune_global(mask, s, 1);
  apply_mask(m, mask);
  std::size_t nonzero = 0;
  for (const auto& e : m.registry())
    if (e.prunable)
      for (double v : e.value.data()) nonzero += v != 0.0;
  CHECK(nonzero == 1);
  const ParamSet once = m.parameters();
  apply_mask(m, mask);
  CHECK(m.parameters() == once);

  Model other = build_model(ModelSpec::mlp(3, {5}, 2), 1);
  CHECK_THROWS_AS(apply_mask(other, mask), ShapeError);
}

TEST_CASE("layer fractions count kept weights") {
  ParamRegistry r;
  r.add("w", Tensor({10}, 1.0), true, 0);
  SparsityMask m = SparsityMask::ones(r);
  CHECK(layer_pruned_fraction(m, r)[0].fraction() == 0.0);
  m = prune_global(m, {9, 8, 7, 6, 5, 4, 3, 2, 1, 0}, 4);
  CHECK(layer_pruned_fraction(m, r)[0].fraction() == doctest::Approx(0.6));
}

TEST_CASE("global selection matches a full sort on random instances") {
  Philox rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.below(2000);
    const ParamRegistry r = vector_registry(std::vector<double>(n, 1.0));
    std::vector<bool> prior(n);
    for (std::size_t i = 0; i < n; ++i) prior[i] = rng.uniform() < 0.7;
    prior[rng.below(n)] = true;
    const SparsityMask m = SparsityMask::ones(r).with_bits(prior);
    Scores s(n);
    for (auto& v : s) v = static_cast<double>(rng.below(50));  // plenty of ties
    const std::size_t keep = 1 + rng.below(m.kept_count());
    CHECK(kept_indices(prune_global(m, s, keep)) == brute_force_keep(m, s, keep));
  }
}
