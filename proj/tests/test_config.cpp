#include "anyprune/config.hpp"
#include "anyprune/errors.hpp"
#include "doctest.h"

using namespace anyprune;

namespace {

const char* kMinimal = R"(
variant: app_default
pruner: snip
tau: 4.5
megabatches: 8
dataset: synthetic_blobs
)";

std::string field_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

}  // namespace

TEST_CASE("minimal config fills defaults") {
  const RunConfig c = parse_config(kMinimal);
  RunConfig expected;
  expected.variant = Variant::app_default;
  expected.pruner = Pruner::snip;
  expected.tau = 4.5;
  expected.megabatches = 8;
  expected.dataset.kind = DatasetKind::synthetic_blobs;
  CHECK(c == expected);
  CHECK(c.epochs == 30);
  CHECK(c.warmup_epochs == 20);
  CHECK(c.batch_size == 32);
  CHECK(c.weight_decay == 0.0);
  CHECK(c.lr_mode == LrMode::multistep_m1_only);
}

TEST_CASE("both separators and comments") {
  const RunConfig c = parse_config("variant = baseline # dense\nmegabatches=3\ndataset: synthetic_spirals\n");
  CHECK(c.variant == Variant::baseline);
  CHECK_FALSE(c.pruner.has_value());
  CHECK(c.megabatches == 3);
}

TEST_CASE("echo round-trips") {
  RunConfig c = parse_config(std::string(kMinimal) +
                             "hidden: 64,32\nper_class_cap: 270\nconv: 4:3:1:1\ninput_shape: 1x28x28\n"
                             "seed_pruning: 99\nlr0: 0.05\ndataset.noise: 0.25\n");
  const std::string text = to_text(c);
  const RunConfig back = parse_config(text);
  CHECK(back == c);
  CHECK(to_text(back) == text);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(run_id(c).size() == 16);

  RunConfig other = c;
  other.tau = 4.0;
  CHECK(config_hash(other) != config_hash(c));
}

TEST_CASE("validation errors name the field") {
  const std::string base = "megabatches: 2\ndataset: synthetic_blobs\n";
  CHECK(field_of(base + "variant: app_default\ntau: 0.5\n") == "tau");
  CHECK(field_of(base + "variant: nonsense\n") == "variant");
  CHECK(field_of(base + "variant: app_default\nbogus: 1\n") == "bogus");
  CHECK(field_of("variant: app_default\ndataset: synthetic_blobs\n") == "megabatches");
  CHECK(field_of(base + "variant: baseline\npruner: snip\n") == "pruner");
  CHECK(field_of(base + "variant: anytime_osp\npruner: none\n") == "pruner");
  CHECK(field_of(base + "variant: app_noreplay_snip\npruner: grasp\n") == "pruner");
  CHECK(field_of(base + "variant: app_default\nmomentum: 1.0\n") == "momentum");
  CHECK(field_of(base + "variant: app_default\nepochs: -3\n") == "epochs");
  CHECK(field_of(base + "variant: app_default\nlr0: abc\n") == "lr0");
  CHECK(field_of(base + "variant: app_default\ntau: 2\ntau: 3\n") == "tau");
  CHECK(field_of("megabatches: 2\nvariant: app_default\ndataset: idx\n") == "dataset.images");
  CHECK(field_of(base + "variant: app_default\nthis line has no separator\n") == "line 4");
}

TEST_CASE("replay combinations") {
  const std::string base = "megabatches: 2\ndataset: synthetic_blobs\npruner: snip\nreplay: none\n";
  CHECK(field_of(base + "variant: app_default\n") == "<accepted>");
  CHECK(field_of(base + "variant: app_noreplay_snip\n") == "<accepted>");
}

TEST_CASE("relative dataset paths resolve against the config directory") {
  const RunConfig c = parse_config(
      "variant: baseline\nmegabatches: 2\ndataset: idx\ndataset.images: ../data/img\ndataset.labels: /abs/lbl\n",
      "/tmp/configs");
  CHECK(c.dataset.images == "/tmp/data/img");
  CHECK(c.dataset.labels == "/abs/lbl");
}

TEST_CASE("seeds derive from the master seed unless overridden") {
  RunConfig c = parse_config(kMinimal);
  const SeedSet a = c.seeds();
  CHECK(a.partition != a.init);
  CHECK(a.init != a.pruning);
  c.seed_init = 7;
  CHECK(c.seeds().init == 7);
  CHECK(c.seeds().partition == a.partition);
  c.override_seed(5);
  CHECK_FALSE(c.seed_init.has_value());
  CHECK(c.seeds().partition != a.partition);
}
