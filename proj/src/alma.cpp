#include "anyprune/alma.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "anyprune/autodiff.hpp"
#include "anyprune/errors.hpp"
#include "anyprune/rng.hpp"

namespace anyprune {
namespace {

constexpr std::size_t kEvalChunk = 256;
constexpr std::size_t kScoreChunk = 256;

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

int argmax_row(const Tensor& logits, std::size_t r) {
  const std::size_t c = logits.dim(1);
  const double* row = logits.raw() + r * c;
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j)
    if (row[j] > row[best]) best = j;
  return static_cast<int>(best);
}

std::vector<LayerPruneStat> layer_counts(const ParamRegistry& registry, const SparsityMask* mask) {
  std::vector<LayerPruneStat> out;
  if (mask) {
    out = layer_pruned_fraction(*mask, registry);
    out.pop_back();  // drop the "global" row; it is the sum of the others
    return out;
  }
  for (const auto& e : registry)
    if (e.prunable) out.push_back({e.name, e.value.numel(), e.value.numel()});
  return out;
}

void emit(std::vector<LogEvent>* events, EventKind kind, std::size_t t, std::size_t epoch, std::string detail = {}) {
  if (events) events->push_back({kind, t, epoch, std::move(detail)});
}

}  // namespace

MegabatchStream build_stream(const Dataset& pool, const StreamOptions& options) {
  validate_dataset(pool);
  if (options.num_megabatches == 0) throw PartitionError("need at least one megabatch");
  if (!(options.val_fraction > 0.0 && options.val_fraction < 1.0)) {
    throw ParameterError("validation fraction must lie in (0, 1)");
  }

  std::vector<std::size_t> selected;
  if (options.per_class_cap) {
    const std::size_t cap = *options.per_class_cap;
    std::vector<std::vector<std::size_t>> by_class(pool.classes);
    for (std::size_t i = 0; i < pool.size(); ++i) by_class[static_cast<std::size_t>(pool.labels[i])].push_back(i);
    for (std::size_t c = 0; c < pool.classes; ++c) {
      const auto& members = by_class[c];
      if (members.size() < cap) {
        throw DataError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                        " samples, fewer than the cap of " + std::to_string(cap));
      }
      Philox rng(derive_seed(options.seed, 0x100 + c));
      const auto perm = permutation(members.size(), rng);
      for (std::size_t k = 0; k < cap; ++k) selected.push_back(members[perm[k]]);
    }
    std::sort(selected.begin(), selected.end());
  } else {
    selected.resize(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) selected[i] = i;
  }

  const std::size_t m = selected.size() / options.num_megabatches;
  if (m == 0) {
    throw PartitionError(std::to_string(options.num_megabatches) + " megabatches requested from only " +
                         std::to_string(selected.size()) + " samples");
  }
  const std::size_t v = round_half_up(options.val_fraction * static_cast<double>(m));
  if (v == 0 || v >= m) {
    throw PartitionError("megabatches of " + std::to_string(m) + " samples cannot be split into train/validation");
  }

  Philox rng(derive_seed(options.seed, 1));
  const auto order = permutation(selected.size(), rng);

  MegabatchStream s;
  s.megabatch_size = m;
  s.used = selected.size();
  s.dropped = selected.size() - m * options.num_megabatches;
  for (std::size_t b = 0; b < options.num_megabatches; ++b) {
    MegabatchSplit split;
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t idx = selected[order[b * m + k]];
      (k < m - v ? split.train : split.val).push_back(idx);
    }
    s.megabatches.push_back(std::move(split));
  }
  return s;
}

StreamView replay_view(const MegabatchStream& stream, std::size_t t, ReplayMode replay) {
  if (t < 1 || t > stream.megabatches.size()) {
    throw IndexError("megabatch " + std::to_string(t) + " outside 1.." + std::to_string(stream.megabatches.size()));
  }
  StreamView view;
  const std::size_t first = replay == ReplayMode::full ? 0 : t - 1;
  for (std::size_t i = first; i < t; ++i) {
    const auto& mb = stream.megabatches[i];
    view.train.insert(view.train.end(), mb.train.begin(), mb.train.end());
    view.val.insert(view.val.end(), mb.val.begin(), mb.val.end());
  }
  return view;
}

std::vector<std::size_t> draw_pi(std::span<const std::size_t> train, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ParameterError("pi fraction must lie in (0, 1]");
  if (train.empty()) throw DataError("cannot draw a scoring subset from an empty view");
  const std::size_t n =
      std::clamp<std::size_t>(round_half_up(fraction * static_cast<double>(train.size())), 1, train.size());
  Philox rng(seed);
  const auto perm = permutation(train.size(), rng);
  std::vector<std::size_t> pi;
  pi.reserve(n);
  for (std::size_t k = 0; k < n; ++k) pi.push_back(train[perm[k]]);
  std::sort(pi.begin(), pi.end());
  return pi;
}

double lr_at(const RunConfig& config, std::size_t t, std::size_t epoch) {
  const std::size_t k = config.epochs;
  if (t < 1) throw IndexError("megabatch index is 1-based");
  if (epoch < 1 || epoch > k) {
    throw IndexError("epoch " + std::to_string(epoch) + " outside 1.." + std::to_string(k));
  }
  if (config.lr_mode == LrMode::multistep_m1_only && t >= 2) return config.post_m1_lr;
  // Milestones at floor(k/2) and floor(3k/4); a milestone at epoch 1 would
  // skip lr0 entirely, so those are ignored.
  double lr = config.lr0;
  for (std::size_t milestone : {k / 2, (3 * k) / 4})
    if (milestone > 1 && epoch >= milestone) lr *= config.gamma;
  return lr;
}

bool improves_on(const EpochRecord& candidate, const EpochRecord* incumbent) {
  if (!incumbent) return true;
  // Cross-multiplied so views of different sizes compare exactly.
  return candidate.val_correct * incumbent->val_total > incumbent->val_correct * candidate.val_total;
}

std::optional<std::size_t> best_checkpoint(std::span<const EpochRecord> records, std::size_t first_eligible) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].epoch < first_eligible) continue;
    if (improves_on(records[i], best ? &records[*best] : nullptr)) best = i;
  }
  return best;
}

Evaluation evaluate(const Model& model, const Dataset& data, std::span<const std::size_t> indices) {
  Evaluation ev;
  ev.total = indices.size();
  ev.predictions.reserve(indices.size());
  double loss_sum = 0.0;
  for (std::size_t s = 0; s < indices.size(); s += kEvalChunk) {
    const LabeledBatch b = gather(data, indices.subspan(s, std::min(kEvalChunk, indices.size() - s)));
    const Tensor logits = model.logits(b.x);
    loss_sum += kernels::softmax_cross_entropy(logits, b.y) * static_cast<double>(b.y.size());
    for (std::size_t r = 0; r < b.y.size(); ++r) {
      const int p = argmax_row(logits, r);
      ev.predictions.push_back(p);
      ev.correct += p == b.y[r];
    }
  }
  ev.loss = ev.total ? loss_sum / static_cast<double>(ev.total) : 0.0;
  return ev;
}

Evaluation evaluate(const Model& model, const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return evaluate(model, data, all);
}

TrainResult train_megabatch(Model& model, std::optional<SparsityMask>& mask, const Dataset& data,
                            const StreamView& view, const RunConfig& config, std::size_t t,
                            TrainControls controls) {
  TrainResult result;
  result.global_iter = controls.global_iter;
  if (config.epochs == 0) {
    result.best_params = model.parameters();
    return result;
  }
  if (view.train.empty()) throw DataError("megabatch " + std::to_string(t) + " has an empty training split");
  if (view.val.empty()) throw DataError("megabatch " + std::to_string(t) + " has an empty validation split");

  const std::size_t dense = count_params(model.registry(), true);
  const std::uint64_t shuffle_seed = derive_seed(config.seeds().shuffle, t);
  OptimState state = OptimState::zeros_like(model.parameters(), {config.lr0, config.momentum, config.weight_decay});
  std::vector<std::size_t> order(view.train.size());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    state.hyper.lr = lr_at(config, t, epoch);
    Philox rng(derive_seed(shuffle_seed, epoch));
    const auto perm = permutation(view.train.size(), rng);
    for (std::size_t i = 0; i < perm.size(); ++i) order[i] = view.train[perm[i]];

    EpochRecord rec;
    rec.megabatch = t;
    rec.epoch = epoch;
    rec.lr = state.hyper.lr;
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < order.size(); s += config.batch_size) {
      const LabeledBatch b =
          gather(data, std::span<const std::size_t>(order).subspan(s, std::min(config.batch_size, order.size() - s)));
      ParamSet params = model.parameters();
      Tape tape;
      std::vector<Var> vars;
      vars.reserve(params.size());
      for (const auto& p : params) vars.push_back(tape.param(p));
      const Var logits = model.forward(tape, vars, tape.constant(b.x));
      const Var loss = ops::softmax_cross_entropy(logits, b.y);
      const Tensor& lv = tape.value(logits);
      for (std::size_t r = 0; r < b.y.size(); ++r) rec.train_correct += argmax_row(lv, r) == b.y[r];
      rec.train_total += b.y.size();
      loss_sum += tape.value(loss)[0] * static_cast<double>(b.y.size());

      Gradients g = backward(tape, loss);
      ParamSet grads;
      grads.reserve(vars.size());
      for (const Var& v : vars) grads.push_back(g.wrt(v));
      const auto masks = mask ? mask->aligned(params.size()) : std::vector<const Tensor*>{};
      sgd_momentum_step(params, grads, state, masks);
      model.set_parameters(params);
      ++result.global_iter;
      if (controls.observer) {
        controls.observer->step(t, result.global_iter, model, mask ? &*mask : nullptr, state);
      }
    }
    rec.train_loss = loss_sum / static_cast<double>(rec.train_total);

    const bool hook_now = controls.prune && controls.prune_after_epoch == epoch;
    if (hook_now) {
      controls.prune(epoch, model, mask);
      if (mask) mask_momentum(state, mask->aligned(model.registry().size()));
    }

    const Evaluation val = evaluate(model, data, view.val);
    rec.val_correct = val.correct;
    rec.val_total = val.total;
    rec.val_loss = val.loss;
    rec.global_iter = result.global_iter;
    rec.kept_count = mask ? mask->kept_count() : dense;
    result.records.push_back(rec);
    emit(controls.events, EventKind::epoch_end, t, epoch);

    const bool eligible = !controls.prune || epoch >= controls.prune_after_epoch;
    if (eligible && improves_on(rec, result.best ? &result.records[*result.best] : nullptr)) {
      result.best = result.records.size() - 1;
      result.best_params = model.parameters();
    }
  }

  if (!result.best) throw RefinementError("no epoch was eligible as a checkpoint");
  model.set_parameters(result.best_params);
  emit(controls.events, EventKind::checkpoint, t, result.records[*result.best].epoch);
  return result;
}

ModelSpec model_spec_for(const RunConfig& config, const Dataset& pool) {
  const Shape input = config.input_shape.value_or(pool.sample_shape);
  if (shape_numel(input) != pool.dim()) {
    throw ConfigError("input_shape", shape_str(input) + " does not match feature width " + std::to_string(pool.dim()));
  }
  ModelSpec spec;
  if (config.model == ModelKind::mlp) {
    spec = ModelSpec::mlp(pool.dim(), config.hidden, pool.classes);
  } else {
    if (input.size() != 3) throw ConfigError("input_shape", "convnet needs channels x height x width");
    spec = ModelSpec::convnet(input, config.conv, config.hidden, pool.classes);
  }
  spec.validate();
  return spec;
}

MetricsLog run(const RunConfig& config, const Dataset& pool, const Dataset& test, RunObserver* observer) {
  const auto started = std::chrono::steady_clock::now();
  validate(config);
  validate_dataset(pool);
  validate_dataset(test);
  if (test.classes != pool.classes || test.dim() != pool.dim()) {
    throw DataError("test set does not match the training pool's classes or feature width");
  }

  const SeedSet seeds = config.seeds();
  const MegabatchStream stream =
      build_stream(pool, {config.megabatches, config.val_fraction, config.per_class_cap, seeds.partition});
  Model model = build_model(model_spec_for(config, pool), seeds.init);
  const std::size_t dense = count_params(model.registry(), true);

  MetricsLog log;
  log.run_id = run_id(config);
  log.variant = to_string(config.variant);
  log.pruner = config.pruner ? to_string(*config.pruner) : "none";
  log.expected_megabatches = config.megabatches;
  log.dense_count = dense;
  log.test_labels = test.labels;

  const bool prunes = is_pruning_variant(config.variant);
  const DeltaSchedule schedule = prunes ? make_delta_schedule(config.tau, config.megabatches) : DeltaSchedule{};
  std::optional<SparsityMask> mask;
  std::size_t global_iter = 0;

  auto prune_to = [&](std::size_t t, std::size_t after_epoch, std::span<const std::size_t> source,
                      const char* source_name, double delta, Model& m, std::optional<SparsityMask>& current) {
    const auto pi = draw_pi(source, config.pi_fraction, derive_seed(seeds.pruning, 2 * t));
    const auto batches = make_batches(pool, pi, kScoreChunk);
    const SparsityMask before = current ? *current : SparsityMask::ones(m.registry());
    const Scores priority = score_for_pruning(*config.pruner, m, before, batches, derive_seed(seeds.pruning, 2 * t + 1));
    const std::size_t keep = keep_count(delta, dense);
    SparsityMask after = prune_global(before, priority, keep);
    apply_mask(m, after);
    PruneEvent ev{t, after_epoch, source_name, pi.size(), delta, keep, before.kept_count(), after.kept_count()};
    log.prunes.push_back(ev);
    log.events.push_back({EventKind::prune, t, after_epoch,
                          std::string(source_name) + " pi=" + std::to_string(pi.size()) + " keep=" + std::to_string(keep)});
    if (observer) observer->prune(ev, current ? &*current : nullptr, after, m);
    current = std::move(after);
  };

  for (std::size_t t = 1; t <= config.megabatches; ++t) {
    const StreamView view = replay_view(stream, t, config.replay);
    const double delta = prunes ? schedule.values[t - 1] : 0.0;
    log.events.push_back({EventKind::megabatch_start, t, 0,
                          "train=" + std::to_string(view.train.size()) + " val=" + std::to_string(view.val.size())});
    if (observer) observer->megabatch_start(t, model, mask ? &*mask : nullptr);

    switch (config.variant) {
      case Variant::anytime_osp:
        if (t == 1) prune_to(t, 0, view.train, "replay", config.tau, model, mask);
        break;
      case Variant::app_default:
        prune_to(t, 0, view.train, "replay", delta, model, mask);
        break;
      case Variant::app_noreplay_snip:
        prune_to(t, 0, stream.megabatches[t - 1].train, "current", delta, model, mask);
        break;
      default:
        break;
    }

    TrainControls controls;
    controls.global_iter = global_iter;
    controls.observer = observer;
    controls.events = &log.events;
    if (config.variant == Variant::app_warmup && config.epochs > 0) {
      std::size_t at = config.warmup_epochs;
      if (config.epochs <= config.warmup_epochs) {
        at = (config.epochs + 1) / 2;
        log.events.push_back({EventKind::warning, t, at,
                              "epochs do not exceed warmup_epochs; pruning after epoch " + std::to_string(at)});
      }
      controls.prune_after_epoch = at;
      controls.prune = [&, t, delta](std::size_t epoch, Model& m, std::optional<SparsityMask>& current) {
        prune_to(t, epoch, view.train, "replay", delta, m, current);
      };
    }

    TrainResult trained = train_megabatch(model, mask, pool, view, config, t, controls);
    global_iter = trained.global_iter;
    log.epochs.insert(log.epochs.end(), trained.records.begin(), trained.records.end());

    if (config.variant == Variant::app_final) prune_to(t, config.epochs, view.train, "replay", delta, model, mask);

    const Evaluation ev = evaluate(model, test);
    MegabatchRecord rec;
    rec.megabatch = t;
    rec.train_view = view.train.size();
    rec.val_view = view.val.size();
    if (trained.best) {
      const EpochRecord& best = trained.records[*trained.best];
      rec.best_epoch = best.epoch;
      rec.best_train_correct = best.train_correct;
      rec.best_train_total = best.train_total;
      rec.best_val_correct = best.val_correct;
      rec.best_val_total = best.val_total;
    }
    rec.test_total = ev.total;
    rec.test_errors = error_count(ev.predictions, test.labels);
    rec.kept_count = mask ? mask->kept_count() : dense;
    rec.layers = layer_counts(model.registry(), mask ? &*mask : nullptr);
    rec.predictions = ev.predictions;
    log.megabatches.push_back(std::move(rec));
    log.events.push_back({EventKind::test_eval, t, config.epochs,
                          "errors=" + std::to_string(log.megabatches.back().test_errors)});
    if (observer) observer->megabatch_end(t, model, mask ? &*mask : nullptr);
  }

  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return log;
}

}  // namespace anyprune
