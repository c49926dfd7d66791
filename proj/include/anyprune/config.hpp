#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "anyprune/model.hpp"
#include "anyprune/pruning.hpp"

namespace anyprune {

enum class Variant { baseline, anytime_osp, app_default, app_final, app_warmup, app_noreplay_snip };
enum class ReplayMode { full, none };
enum class LrMode { multistep_m1_only, cyclic_every_mt };
enum class DatasetKind { idx, csv, synthetic_blobs, synthetic_spirals };

struct DatasetSource {
  DatasetKind kind = DatasetKind::synthetic_blobs;
  // idx
  std::string images, labels, test_images, test_labels;
  // csv
  std::string csv, csv_test, label_column = "label";
  // synthetic generators
  std::size_t classes = 4;
  std::size_t per_class = 250;
  std::size_t dim = 16;
  double noise = 1.0;
  std::uint64_t seed = 0;
  // Held-out test split when no separate test files are given: either a
  // fixed count per class or a per-class fraction.
  std::optional<std::size_t> test_per_class;
  double test_fraction = 0.2;

  bool operator==(const DatasetSource&) const = default;
};

struct SeedSet {
  std::uint64_t partition = 0;
  std::uint64_t init = 0;
  std::uint64_t pruning = 0;
  std::uint64_t shuffle = 0;
};

struct RunConfig {
  std::string name = "run";
  Variant variant = Variant::app_default;
  std::optional<Pruner> pruner = Pruner::snip;  // nullopt only for the baseline
  double tau = 4.5;
  std::size_t megabatches = 8;
  ReplayMode replay = ReplayMode::full;
  std::size_t epochs = 30;
  std::size_t warmup_epochs = 20;
  LrMode lr_mode = LrMode::multistep_m1_only;
  double lr0 = 0.1;
  double gamma = 0.1;
  double post_m1_lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t batch_size = 32;
  double val_fraction = 0.1;
  double pi_fraction = 0.2;
  std::optional<std::size_t> per_class_cap;

  ModelKind model = ModelKind::mlp;
  std::vector<std::size_t> hidden{256, 128};
  std::vector<ConvLayerSpec> conv{{8, 3, 1, 1}, {16, 3, 1, 1}};
  std::optional<Shape> input_shape;

  DatasetSource dataset;

  std::uint64_t seed = 0;
  std::optional<std::uint64_t> seed_partition, seed_init, seed_pruning, seed_shuffle;

  // Per-purpose seeds; unset ones are derived from `seed`.
  SeedSet seeds() const;
  // Sets the master seed and drops per-purpose overrides.
  void override_seed(std::uint64_t s);

  bool operator==(const RunConfig&) const = default;
};

bool is_pruning_variant(Variant v) noexcept;

// Throws ConfigError naming the offending field.
void validate(const RunConfig& config);

// Flat "key: value" (or "key = value") text, '#' comments, unknown keys rejected. Relative
// dataset paths are resolved against base_dir.
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

// Canonical echo with every field resolved; parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& config);

// FNV-1a over the canonical echo.
std::uint64_t config_hash(const RunConfig& config);
std::string run_id(const RunConfig& config);

std::string to_string(Variant v);
std::string to_string(ReplayMode m);
std::string to_string(LrMode m);
std::string to_string(DatasetKind k);

}  // namespace anyprune
