#include "anyprune/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "anyprune/errors.hpp"
#include "anyprune/rng.hpp"

namespace anyprune {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key, "expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) {
    throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v, char sep = ',') {
  std::vector<std::size_t> out;
  if (v == "none") return out;
  for (const auto& item : split(v, sep)) out.push_back(parse_size(key, item));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs, const std::string& sep) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += sep;
    if constexpr (std::is_same_v<T, std::string>) {
      s += xs[i];
    } else {
      s += std::to_string(xs[i]);
    }
  }
  return s;
}

template <typename E>
E parse_enum(const std::string& key, const std::string& v, std::initializer_list<E> options) {
  for (E e : options)
    if (to_string(e) == v) return e;
  std::string allowed;
  for (E e : options) allowed += (allowed.empty() ? "" : "|") + to_string(e);
  throw ConfigError(key, "unknown value '" + v + "' (expected " + allowed + ")");
}

std::string to_string(ModelKind k) { return k == ModelKind::mlp ? "mlp" : "convnet"; }

template <typename T>
std::string opt_str(const std::optional<T>& v) {
  if (!v) return "none";
  if constexpr (std::is_same_v<T, Shape>) {
    return join(*v, "x");
  } else {
    return std::to_string(*v);
  }
}

struct ParseState {
  std::filesystem::path base;
  bool pruner_set = false;
};

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&, ParseState&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string resolve_path(const std::string& v, const ParseState& st) {
  if (v.empty() || st.base.empty()) return v;
  const std::filesystem::path p(v);
  return p.is_absolute() ? v : (st.base / p).lexically_normal().string();
}

std::optional<std::uint64_t> opt_seed(const std::string& key, const std::string& v) {
  if (v == "none") return std::nullopt;
  return parse_u64(key, v);
}

#define NUM_FIELD(k, member) \
  Field { k, [](RunConfig& c, const std::string& v, ParseState&) { c.member = parse_double(k, v); }, \
          [](const RunConfig& c) { return fmt_double(c.member); } }
#define SIZE_FIELD(k, member) \
  Field { k, [](RunConfig& c, const std::string& v, ParseState&) { c.member = parse_size(k, v); }, \
          [](const RunConfig& c) { return std::to_string(c.member); } }
#define PATH_FIELD(k, member) \
  Field { k, [](RunConfig& c, const std::string& v, ParseState& st) { c.member = resolve_path(v, st); }, \
          [](const RunConfig& c) { return c.member; } }
#define SEED_FIELD(k, member) \
  Field { k, [](RunConfig& c, const std::string& v, ParseState&) { c.member = opt_seed(k, v); }, \
          [](const RunConfig& c) { return opt_str(c.member); } }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"name", [](RunConfig& c, const std::string& v, ParseState&) { c.name = v; },
            [](const RunConfig& c) { return c.name; }},
      Field{"variant",
            [](RunConfig& c, const std::string& v, ParseState&) {
              c.variant = parse_enum("variant", v,
                                     {Variant::baseline, Variant::anytime_osp, Variant::app_default, Variant::app_final,
                                      Variant::app_warmup, Variant::app_noreplay_snip});
            },
            [](const RunConfig& c) { return to_string(c.variant); }},
      Field{"pruner",
            [](RunConfig& c, const std::string& v, ParseState& st) {
              st.pruner_set = true;
              if (v == "none") {
                c.pruner.reset();
                return;
              }
              c.pruner = parse_pruner(v);
              if (!c.pruner) throw ConfigError("pruner", "unknown value '" + v + "' (expected snip|grasp|magnitude|random|none)");
            },
            [](const RunConfig& c) { return c.pruner ? to_string(*c.pruner) : std::string("none"); }},
      NUM_FIELD("tau", tau),
      SIZE_FIELD("megabatches", megabatches),
      Field{"replay",
            [](RunConfig& c, const std::string& v, ParseState&) {
              c.replay = parse_enum("replay", v, {ReplayMode::full, ReplayMode::none});
            },
            [](const RunConfig& c) { return to_string(c.replay); }},
      SIZE_FIELD("epochs", epochs),
      SIZE_FIELD("warmup_epochs", warmup_epochs),
      Field{"lr_mode",
            [](RunConfig& c, const std::string& v, ParseState&) {
              c.lr_mode = parse_enum("lr_mode", v, {LrMode::multistep_m1_only, LrMode::cyclic_every_mt});
            },
            [](const RunConfig& c) { return to_string(c.lr_mode); }},
      NUM_FIELD("lr0", lr0),
      NUM_FIELD("gamma", gamma),
      NUM_FIELD("post_m1_lr", post_m1_lr),
      NUM_FIELD("momentum", momentum),
      NUM_FIELD("weight_decay", weight_decay),
      SIZE_FIELD("batch_size", batch_size),
      NUM_FIELD("val_fraction", val_fraction),
      NUM_FIELD("pi_fraction", pi_fraction),
      Field{"per_class_cap",
            [](RunConfig& c, const std::string& v, ParseState&) {
              if (v == "none") {
                c.per_class_cap.reset();
              } else {
                c.per_class_cap = parse_size("per_class_cap", v);
              }
            },
            [](const RunConfig& c) { return opt_str(c.per_class_cap); }},
      Field{"model",
            [](RunConfig& c, const std::string& v, ParseState&) {
              if (v == "mlp") {
                c.model = ModelKind::mlp;
              } else if (v == "convnet") {
                c.model = ModelKind::convnet;
              } else {
                throw ConfigError("model", "unknown value '" + v + "' (expected mlp|convnet)");
              }
            },
            [](const RunConfig& c) { return to_string(c.model); }},
      Field{"hidden", [](RunConfig& c, const std::string& v, ParseState&) { c.hidden = parse_sizes("hidden", v); },
            [](const RunConfig& c) { return c.hidden.empty() ? std::string("none") : join(c.hidden, ","); }},
      Field{"conv",
            [](RunConfig& c, const std::string& v, ParseState&) {
              c.conv.clear();
              if (v == "none") return;
              for (const auto& layer : split(v, ',')) {
                const auto parts = parse_sizes("conv", layer, ':');
                if (parts.size() != 4) throw ConfigError("conv", "layers are out_channels:kernel:stride:padding");
                c.conv.push_back({parts[0], parts[1], parts[2], parts[3]});
              }
            },
            [](const RunConfig& c) {
              if (c.conv.empty()) return std::string("none");
              std::vector<std::string> items;
              for (const auto& l : c.conv)
                items.push_back(std::to_string(l.out_channels) + ":" + std::to_string(l.kernel) + ":" +
                                std::to_string(l.stride) + ":" + std::to_string(l.padding));
              return join(items, ",");
            }},
      Field{"input_shape",
            [](RunConfig& c, const std::string& v, ParseState&) {
              if (v == "none") {
                c.input_shape.reset();
              } else {
                c.input_shape = parse_sizes("input_shape", v, 'x');
              }
            },
            [](const RunConfig& c) { return opt_str(c.input_shape); }},
      Field{"dataset",
            [](RunConfig& c, const std::string& v, ParseState&) {
              c.dataset.kind = parse_enum("dataset", v,
                                          {DatasetKind::idx, DatasetKind::csv, DatasetKind::synthetic_blobs,
                                           DatasetKind::synthetic_spirals});
            },
            [](const RunConfig& c) { return to_string(c.dataset.kind); }},
      PATH_FIELD("dataset.images", dataset.images),
      PATH_FIELD("dataset.labels", dataset.labels),
      PATH_FIELD("dataset.test_images", dataset.test_images),
      PATH_FIELD("dataset.test_labels", dataset.test_labels),
      PATH_FIELD("dataset.csv", dataset.csv),
      PATH_FIELD("dataset.csv_test", dataset.csv_test),
      Field{"dataset.label_column",
            [](RunConfig& c, const std::string& v, ParseState&) { c.dataset.label_column = v; },
            [](const RunConfig& c) { return c.dataset.label_column; }},
      SIZE_FIELD("dataset.classes", dataset.classes),
      SIZE_FIELD("dataset.per_class", dataset.per_class),
      SIZE_FIELD("dataset.dim", dataset.dim),
      NUM_FIELD("dataset.noise", dataset.noise),
      Field{"dataset.seed",
            [](RunConfig& c, const std::string& v, ParseState&) { c.dataset.seed = parse_u64("dataset.seed", v); },
            [](const RunConfig& c) { return std::to_string(c.dataset.seed); }},
      Field{"dataset.test_per_class",
            [](RunConfig& c, const std::string& v, ParseState&) {
              if (v == "none") {
                c.dataset.test_per_class.reset();
              } else {
                c.dataset.test_per_class = parse_size("dataset.test_per_class", v);
              }
            },
            [](const RunConfig& c) { return opt_str(c.dataset.test_per_class); }},
      NUM_FIELD("dataset.test_fraction", dataset.test_fraction),
      Field{"seed", [](RunConfig& c, const std::string& v, ParseState&) { c.seed = parse_u64("seed", v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      SEED_FIELD("seed_partition", seed_partition),
      SEED_FIELD("seed_init", seed_init),
      SEED_FIELD("seed_pruning", seed_pruning),
      SEED_FIELD("seed_shuffle", seed_shuffle),
  };
  return table;
}

#undef NUM_FIELD
#undef SIZE_FIELD
#undef PATH_FIELD
#undef SEED_FIELD

void require(bool ok, const char* field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

}  // namespace

SeedSet RunConfig::seeds() const {
  return SeedSet{seed_partition.value_or(derive_seed(seed, 1)), seed_init.value_or(derive_seed(seed, 2)),
                 seed_pruning.value_or(derive_seed(seed, 3)), seed_shuffle.value_or(derive_seed(seed, 4))};
}

void RunConfig::override_seed(std::uint64_t s) {
  seed = s;
  seed_partition.reset();
  seed_init.reset();
  seed_pruning.reset();
  seed_shuffle.reset();
}

bool is_pruning_variant(Variant v) noexcept { return v != Variant::baseline; }

void validate(const RunConfig& c) {
  require(!c.name.empty(), "name", "must not be empty");
  require(c.tau >= 1.0 && std::isfinite(c.tau), "tau", "must be >= 1");
  require(c.megabatches >= 1, "megabatches", "must be >= 1");
  require(c.warmup_epochs >= 1, "warmup_epochs", "must be >= 1");
  require(c.lr0 > 0.0, "lr0", "must be positive");
  require(c.gamma > 0.0 && c.gamma <= 1.0, "gamma", "must lie in (0, 1]");
  require(c.post_m1_lr > 0.0, "post_m1_lr", "must be positive");
  require(c.momentum >= 0.0 && c.momentum < 1.0, "momentum", "must lie in [0, 1)");
  require(c.weight_decay >= 0.0, "weight_decay", "must be non-negative");
  require(c.batch_size >= 1, "batch_size", "must be >= 1");
  require(c.val_fraction > 0.0 && c.val_fraction < 1.0, "val_fraction", "must lie in (0, 1)");
  require(c.pi_fraction > 0.0 && c.pi_fraction <= 1.0, "pi_fraction", "must lie in (0, 1]");
  require(!c.per_class_cap || *c.per_class_cap >= 1, "per_class_cap", "must be >= 1");
  for (auto h : c.hidden) require(h >= 1, "hidden", "layer sizes must be positive");
  if (c.model == ModelKind::convnet) {
    require(!c.conv.empty(), "conv", "convnet needs at least one conv layer");
    for (const auto& l : c.conv) {
      require(l.out_channels >= 1 && l.kernel >= 1 && l.stride >= 1, "conv", "channels, kernel and stride must be >= 1");
    }
  }
  if (c.input_shape) {
    require(!c.input_shape->empty(), "input_shape", "must not be empty");
    for (auto d : *c.input_shape) require(d >= 1, "input_shape", "dimensions must be positive");
  }

  if (c.variant == Variant::baseline) {
    require(!c.pruner, "pruner", "the baseline never prunes; use 'none' or omit it");
  } else {
    require(c.pruner.has_value(), "pruner", "variant " + to_string(c.variant) + " needs a pruner");
  }
  if (c.variant == Variant::app_noreplay_snip) {
    require(c.pruner == Pruner::snip, "pruner", "app_noreplay_snip scores with snip");
  }

  const auto& d = c.dataset;
  switch (d.kind) {
    case DatasetKind::idx:
      require(!d.images.empty(), "dataset.images", "required for idx datasets");
      require(!d.labels.empty(), "dataset.labels", "required for idx datasets");
      require(d.test_images.empty() == d.test_labels.empty(), "dataset.test_images",
              "test images and labels must be given together");
      break;
    case DatasetKind::csv:
      require(!d.csv.empty(), "dataset.csv", "required for csv datasets");
      break;
    case DatasetKind::synthetic_blobs:
    case DatasetKind::synthetic_spirals:
      require(d.classes >= 2, "dataset.classes", "must be >= 2");
      require(d.per_class >= 1, "dataset.per_class", "must be >= 1");
      require(d.dim >= (d.kind == DatasetKind::synthetic_spirals ? 2u : 1u), "dataset.dim",
              "too small for this generator");
      require(d.noise >= 0.0, "dataset.noise", "must be non-negative");
      break;
  }
  require(d.test_fraction > 0.0 && d.test_fraction < 1.0, "dataset.test_fraction", "must lie in (0, 1)");
}

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig c;
  ParseState st{base_dir, false};
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find_first_of("=:");
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno), "expected 'key: value'");
    }
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw ConfigError(key, "unknown key");
    if (!seen.insert(key).second) throw ConfigError(key, "given more than once");
    it->set(c, value, st);
  }
  for (const char* req : {"variant", "megabatches", "dataset"}) {
    if (!seen.count(req)) throw ConfigError(req, "missing required field");
  }
  if (c.variant == Variant::baseline && !st.pruner_set) c.pruner.reset();
  validate(c);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path());
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) {
    const std::string v = f.get(config);
    out += f.key;
    out += v.empty() ? ":" : ": " + v;
    out += '\n';
  }
  return out;
}

std::uint64_t config_hash(const RunConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_text(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string run_id(const RunConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_hash(config)));
  return buf;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::anytime_osp: return "anytime_osp";
    case Variant::app_default: return "app_default";
    case Variant::app_final: return "app_final";
    case Variant::app_warmup: return "app_warmup";
    case Variant::app_noreplay_snip: return "app_noreplay_snip";
  }
  return "?";
}

std::string to_string(ReplayMode m) { return m == ReplayMode::full ? "full" : "none"; }

std::string to_string(LrMode m) {
  return m == LrMode::multistep_m1_only ? "multistep_m1_only" : "cyclic_every_mt";
}

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::idx: return "idx";
    case DatasetKind::csv: return "csv";
    case DatasetKind::synthetic_blobs: return "synthetic_blobs";
    case DatasetKind::synthetic_spirals: return "synthetic_spirals";
  }
  return "?";
}

}  // namespace anyprune
