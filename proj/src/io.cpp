#include "anyprune/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "anyprune/errors.hpp"
#include "anyprune/rng.hpp"
#include "json.hpp"

namespace anyprune {
namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at, const fs::path& path) {
  if (b.size() < at + 4) throw FormatError(path.string() + ": truncated header");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

std::size_t max_label_classes(const std::vector<int>& labels) {
  int top = -1;
  for (int y : labels) top = std::max(top, y);
  return static_cast<std::size_t>(top + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& raw, std::size_t line, const std::string& column) {
  std::string s = raw;
  s.erase(0, s.find_first_not_of(" \t"));
  s.erase(s.find_last_not_of(" \t") + 1);
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError("line " + std::to_string(line) + ", column '" + column + "': '" + raw + "' is not a number");
  }
  return v;
}

void table_check(const CsvTable& t, const std::string& what) {
  for (const auto& row : t.rows)
    if (row.size() != t.header.size()) throw ParseError(what + ": ragged row");
}

double num(const std::string& s) { return parse_cell(s, 0, "?"); }

// --- svg -----------------------------------------------------------------

constexpr double kW = 640, kH = 400, kL = 70, kR = 20, kT = 40, kB = 50;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kL + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.5) * (kW - kL - kR); }
  double py(double y) const { return kH - kB - (y1 > y0 ? (y - y0) / (y1 - y0) : 0.5) * (kH - kT - kB); }
};

std::string svg_head(const std::string& title, const std::string& xlabel, const std::string& ylabel) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n"
    << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">" << xlabel
    << "</text>\n"
    << "<text transform=\"translate(16," << (kT + kH - kB) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << ylabel
    << "</text>\n";
  return s.str();
}

std::string svg_axes(const Frame& f) {
  std::ostringstream s;
  s << "<g stroke=\"#444\" fill=\"none\"><line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR
    << "\" y2=\"" << kH - kB << "\"/><line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\""
    << kH - kB << "\"/></g>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    char yb[32], xb[32];
    std::snprintf(yb, sizeof yb, "%.3g", yv);
    std::snprintf(xb, sizeof xb, "%.4g", xv);
    s << "<text x=\"" << kL - 6 << "\" y=\"" << f.py(yv) + 4 << "\" text-anchor=\"end\">" << yb << "</text>\n";
    s << "<text x=\"" << f.px(xv) << "\" y=\"" << kH - kB + 16 << "\" text-anchor=\"middle\">" << xb << "</text>\n";
  }
  return s.str();
}

std::string line_chart(const std::string& title, const std::string& xl, const std::string& yl,
                       const std::vector<std::pair<double, double>>& pts, bool zero_line) {
  Frame f{0, 1, 0, 1};
  if (!pts.empty()) {
    f.x0 = f.x1 = pts.front().first;
    f.y0 = f.y1 = pts.front().second;
    for (auto [x, y] : pts) {
      f.x0 = std::min(f.x0, x), f.x1 = std::max(f.x1, x);
      f.y0 = std::min(f.y0, y), f.y1 = std::max(f.y1, y);
    }
    if (zero_line) f.y0 = std::min(f.y0, 0.0), f.y1 = std::max(f.y1, 0.0);
    if (f.y1 == f.y0) f.y1 = f.y0 + 1;
  }
  std::ostringstream s;
  s << svg_head(title, xl, yl) << svg_axes(f);
  if (zero_line) {
    s << "<line x1=\"" << kL << "\" x2=\"" << kW - kR << "\" y1=\"" << f.py(0) << "\" y2=\"" << f.py(0)
      << "\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>\n";
  }
  s << "<polyline fill=\"none\" stroke=\"" << kPalette[0] << "\" stroke-width=\"1.5\" points=\"";
  for (auto [x, y] : pts) s << f.px(x) << "," << f.py(y) << " ";
  s << "\"/>\n";
  for (auto [x, y] : pts)
    if (pts.size() <= 40) s << "<circle cx=\"" << f.px(x) << "\" cy=\"" << f.py(y) << "\" r=\"2.5\" fill=\"" << kPalette[0] << "\"/>\n";
  s << "</svg>\n";
  return s.str();
}

std::string bar_chart(const PlotData& d) {
  const std::size_t groups = d.layer_fractions.size();
  const std::size_t layers = d.layer_names.size();
  Frame f{0.5, static_cast<double>(groups) + 0.5, 0, 1};
  std::ostringstream s;
  s << svg_head("Pruned fraction per layer", "megabatch", "pruned fraction") << svg_axes(Frame{1, double(groups), 0, 1});
  const double slot = (kW - kL - kR) / std::max<double>(1, groups);
  const double bw = slot * 0.8 / std::max<double>(1, layers);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t l = 0; l < layers; ++l) {
      const double v = d.layer_fractions[g][l];
      const double x = f.px(g + 1.0) - slot * 0.4 + l * bw;
      s << "<rect x=\"" << x << "\" y=\"" << f.py(v) << "\" width=\"" << bw << "\" height=\"" << f.py(0) - f.py(v)
        << "\" fill=\"" << kPalette[l % 8] << "\"/>\n";
    }
  }
  for (std::size_t l = 0; l < layers; ++l) {
    s << "<rect x=\"" << kW - kR - 110 << "\" y=\"" << kT + 14 * l << "\" width=\"10\" height=\"10\" fill=\""
      << kPalette[l % 8] << "\"/><text x=\"" << kW - kR - 96 << "\" y=\"" << kT + 9 + 14 * l << "\">"
      << d.layer_names[l] << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace

// --- datasets ------------------------------------------------------------

Dataset load_idx(const fs::path& images, const fs::path& labels) {
  const auto ib = read_bytes(images);
  const auto lb = read_bytes(labels);
  if (be32(ib, 0, images) != 0x00000803) throw FormatError(images.string() + ": bad image magic");
  if (be32(lb, 0, labels) != 0x00000801) throw FormatError(labels.string() + ": bad label magic");
  const std::size_t n = be32(ib, 4, images), rows = be32(ib, 8, images), cols = be32(ib, 12, images);
  const std::size_t nl = be32(lb, 4, labels);
  if (n != nl) throw FormatError("image count " + std::to_string(n) + " != label count " + std::to_string(nl));
  const std::size_t d = rows * cols;
  if (n == 0 || d == 0) throw FormatError(images.string() + ": empty image set");
  if (ib.size() < 16 + n * d) throw FormatError(images.string() + ": truncated pixel data");
  if (lb.size() < 8 + n) throw FormatError(labels.string() + ": truncated label data");

  Dataset out{Tensor({n, d}), std::vector<int>(n), 0, Shape{1, rows, cols}};
  for (std::size_t i = 0; i < n * d; ++i) out.features[i] = static_cast<double>(ib[16 + i]) / 255.0;
  for (std::size_t i = 0; i < n; ++i) out.labels[i] = lb[8 + i];
  out.classes = max_label_classes(out.labels);
  return out;
}

void write_idx(const Dataset& data, const fs::path& images, const fs::path& labels) {
  std::size_t rows = 1, cols = data.dim();
  const Shape& s = data.sample_shape;
  if (s.size() == 3 && s[0] == 1) rows = s[1], cols = s[2];
  if (s.size() == 2) rows = s[0], cols = s[1];
  std::string img, lab;
  put_be32(img, 0x00000803);
  put_be32(img, static_cast<std::uint32_t>(data.size()));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  for (double v : data.features.values()) {
    const double k = std::round(v * 255.0);
    if (k < 0 || k > 255 || k / 255.0 != v) throw FormatError("feature value not representable as a pixel byte");
    img.push_back(static_cast<char>(static_cast<unsigned char>(k)));
  }
  put_be32(lab, 0x00000801);
  put_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int y : data.labels) {
    if (y < 0 || y > 255) throw FormatError("label does not fit in a byte");
    lab.push_back(static_cast<char>(static_cast<unsigned char>(y)));
  }
  write_text(images, img);
  write_text(labels, lab);
}

Dataset gen_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double noise, std::uint64_t seed) {
  if (classes < 2 || per_class < 1 || dim < 1) throw ParameterError("gen_blobs needs C >= 2, per_class >= 1, d >= 1");
  if (!(noise >= 0.0)) throw ParameterError("noise must be non-negative");
  constexpr double radius = 3.0;
  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim, 0.0));
  if (classes <= 2 * dim) {
    for (std::size_t c = 0; c < classes; ++c) centers[c][c / 2] = c % 2 ? -radius : radius;
  } else {
    Philox rng(derive_seed(seed, 1));
    for (auto& ctr : centers) {
      double norm = 0.0;
      while (norm < 1e-12) {
        norm = 0.0;
        for (auto& x : ctr) {
          x = rng.normal();
          norm += x * x;
        }
      }
      for (auto& x : ctr) x *= radius / std::sqrt(norm);
    }
  }
  Dataset out{Tensor({classes * per_class, dim}), {}, classes, Shape{dim}};
  Philox rng(derive_seed(seed, 2));
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t row = out.labels.size();
      for (std::size_t j = 0; j < dim; ++j) out.features[row * dim + j] = centers[c][j] + noise * rng.normal();
      out.labels.push_back(static_cast<int>(c));
    }
  }
  return out;
}

Dataset gen_spirals(std::size_t classes, std::size_t per_class, std::size_t dim, double noise, std::uint64_t seed) {
  if (classes < 2 || per_class < 1 || dim < 2) throw ParameterError("gen_spirals needs C >= 2, per_class >= 1, d >= 2");
  if (!(noise >= 0.0)) throw ParameterError("noise must be non-negative");
  Dataset out{Tensor({classes * per_class, dim}), {}, classes, Shape{dim}};
  Philox rng(seed);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t row = out.labels.size();
      const double r = 3.0 * static_cast<double>(i + 1) / static_cast<double>(per_class);
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes) + 1.75 * r;
      double* x = out.features.raw() + row * dim;
      x[0] = r * std::cos(theta) + noise * rng.normal();
      x[1] = r * std::sin(theta) + noise * rng.normal();
      for (std::size_t j = 2; j < dim; ++j) x[j] = noise * rng.normal();
      out.labels.push_back(static_cast<int>(c));
    }
  }
  return out;
}

Dataset load_csv(const fs::path& path, const std::string& label_column) {
  const CsvTable t = parse_csv(read_text(path));
  const std::size_t lc = t.column(label_column);
  if (t.rows.empty()) throw ParseError(path.string() + ": no data rows");
  const std::size_t d = t.header.size() - 1;
  if (d == 0) throw ParseError(path.string() + ": no feature columns");
  Dataset out{Tensor({t.rows.size(), d}), {}, 0, Shape{d}};
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != t.header.size()) {
      throw ParseError("line " + std::to_string(r + 2) + ": expected " + std::to_string(t.header.size()) + " cells");
    }
    std::size_t j = 0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double v = parse_cell(row[c], r + 2, t.header[c]);
      if (c == lc) {
        if (v < 0 || v != std::floor(v) || v > 1e9) {
          throw ParseError("line " + std::to_string(r + 2) + ": label '" + row[c] + "' is not a class index");
        }
        out.labels.push_back(static_cast<int>(v));
      } else {
        out.features[r * d + j++] = v;
      }
    }
  }
  out.classes = max_label_classes(out.labels);
  return out;
}

LoadedData split_holdout(const Dataset& data, const DatasetSource& source) {
  validate_dataset(data);
  std::vector<std::vector<std::size_t>> by_class(data.classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  std::vector<std::size_t> test_idx, pool_idx;
  for (std::size_t c = 0; c < data.classes; ++c) {
    const auto& members = by_class[c];
    const std::size_t want =
        source.test_per_class
            ? *source.test_per_class
            : static_cast<std::size_t>(std::floor(source.test_fraction * static_cast<double>(members.size()) + 0.5));
    if (want >= members.size()) {
      throw DataError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                      " samples; cannot hold out " + std::to_string(want));
    }
    Philox rng(derive_seed(source.seed, 0x7e57 + c));
    const auto perm = permutation(members.size(), rng);
    for (std::size_t k = 0; k < members.size(); ++k) (k < want ? test_idx : pool_idx).push_back(members[perm[k]]);
  }
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(pool_idx.begin(), pool_idx.end());
  if (test_idx.empty()) throw DataError("held-out test split is empty");
  return {subset(data, pool_idx), subset(data, test_idx)};
}

LoadedData load_source(const DatasetSource& source) {
  auto with_test = [&](Dataset pool, Dataset test) {
    const std::size_t c = std::max(pool.classes, test.classes);
    pool.classes = test.classes = c;
    validate_dataset(pool);
    validate_dataset(test);
    return LoadedData{std::move(pool), std::move(test)};
  };
  switch (source.kind) {
    case DatasetKind::idx: {
      Dataset all = load_idx(source.images, source.labels);
      if (!source.test_images.empty()) return with_test(std::move(all), load_idx(source.test_images, source.test_labels));
      return split_holdout(all, source);
    }
    case DatasetKind::csv: {
      Dataset all = load_csv(source.csv, source.label_column);
      if (!source.csv_test.empty()) return with_test(std::move(all), load_csv(source.csv_test, source.label_column));
      return split_holdout(all, source);
    }
    case DatasetKind::synthetic_blobs:
      return split_holdout(gen_blobs(source.classes, source.per_class, source.dim, source.noise, source.seed), source);
    case DatasetKind::synthetic_spirals:
      return split_holdout(gen_spirals(source.classes, source.per_class, source.dim, source.noise, source.seed), source);
  }
  throw DataError("unknown dataset kind");
}

// --- serialization -------------------------------------------------------

std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string curves_csv(const MetricsLog& log) {
  std::ostringstream s;
  for (std::size_t i = 0; i < kCurveColumns.size(); ++i) s << (i ? "," : "") << kCurveColumns[i];
  s << '\n';
  for (const auto& e : log.epochs) {
    s << log.run_id << ',' << log.variant << ',' << log.pruner << ',' << e.megabatch << ',' << e.epoch << ','
      << e.global_iter << ',' << format_number(e.lr) << ',' << format_number(e.train_acc()) << ','
      << format_number(e.train_loss) << ',' << format_number(e.val_acc()) << ',' << format_number(e.val_loss) << ','
      << e.kept_count << ',' << format_number(fraction(e.kept_count, log.dense_count)) << '\n';
  }
  return s.str();
}

std::string megabatch_csv(const MetricsLog& log) {
  std::ostringstream s;
  s << "megabatch,test_errors,test_acc,gen_gap";
  if (!log.megabatches.empty())
    for (const auto& l : log.megabatches.front().layers) s << ',' << l.name << "_pruned";
  s << '\n';
  for (const auto& m : log.megabatches) {
    s << m.megabatch << ',' << m.test_errors << ',' << format_number(m.test_acc()) << ','
      << format_number(m.gen_gap());
    for (const auto& l : m.layers) s << ',' << format_number(l.fraction());
    s << '\n';
  }
  return s.str();
}

std::string layers_csv(const MetricsLog& log) {
  std::ostringstream s;
  s << "megabatch,layer,total,kept,pruned,pruned_fraction\n";
  for (const auto& m : log.megabatches) {
    for (const auto& l : m.layers) {
      s << m.megabatch << ',' << l.name << ',' << l.total << ',' << l.kept << ',' << l.pruned() << ','
        << format_number(l.fraction()) << '\n';
    }
  }
  return s.str();
}

std::string prunes_csv(const MetricsLog& log) {
  std::ostringstream s;
  s << "megabatch,after_epoch,pi_source,pi_size,delta,keep_target,kept_before,kept_after\n";
  for (const auto& p : log.prunes) {
    s << p.megabatch << ',' << p.after_epoch << ',' << p.pi_source << ',' << p.pi_size << ','
      << format_number(p.delta) << ',' << p.keep_target << ',' << p.kept_before << ',' << p.kept_after << '\n';
  }
  return s.str();
}

std::string events_csv(const MetricsLog& log) {
  std::ostringstream s;
  s << "seq,event,megabatch,epoch,detail\n";
  for (std::size_t i = 0; i < log.events.size(); ++i) {
    const auto& e = log.events[i];
    std::string detail = e.detail;
    std::replace(detail.begin(), detail.end(), ',', ';');
    s << i << ',' << to_string(e.kind) << ',' << e.megabatch << ',' << e.epoch << ',' << detail << '\n';
  }
  return s.str();
}

std::string predictions_csv(const MetricsLog& log) {
  std::ostringstream s;
  s << "megabatch,sample,label,prediction\n";
  for (const auto& m : log.megabatches)
    for (std::size_t j = 0; j < m.predictions.size(); ++j)
      s << m.megabatch << ',' << j << ',' << log.test_labels[j] << ',' << m.predictions[j] << '\n';
  return s.str();
}

std::string summary_json(const RunSummary& s) {
  ordered_json j;
  j["final_test_accuracy"] = s.final_test_accuracy;
  j["cer"] = s.cer;
  j["final_gen_gap"] = s.final_gen_gap;
  j["kept_trajectory"] = s.kept_trajectory;
  j["test_errors"] = s.test_errors;
  j["dense_count"] = s.dense_count;
  j["test_size"] = s.test_size;
  return j.dump(2) + "\n";
}

RunSummary parse_summary_json(const std::string& text) {
  try {
    const auto j = ordered_json::parse(text);
    RunSummary s;
    s.final_test_accuracy = j.at("final_test_accuracy").get<double>();
    s.cer = j.at("cer").get<std::size_t>();
    s.final_gen_gap = j.at("final_gen_gap").get<double>();
    s.kept_trajectory = j.at("kept_trajectory").get<std::vector<std::size_t>>();
    s.test_errors = j.at("test_errors").get<std::vector<std::size_t>>();
    s.dense_count = j.at("dense_count").get<std::size_t>();
    s.test_size = j.at("test_size").get<std::size_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("summary json: ") + e.what());
  }
}

RunMetadata metadata_for(const RunConfig& config, const MetricsLog& log) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(config)));
  return {log.run_id, config.name, log.variant, log.pruner, hash, log.wall_seconds};
}

std::string metadata_json(const RunMetadata& meta, const RunConfig& config) {
  ordered_json j;
  j["run_id"] = meta.run_id;
  j["name"] = meta.name;
  j["variant"] = meta.variant;
  j["pruner"] = meta.pruner;
  j["config_hash"] = meta.config_hash;
  j["wall_seconds"] = meta.wall_seconds;
  ordered_json cfg = ordered_json::object();
  std::istringstream lines(to_text(config));
  std::string line;
  while (std::getline(lines, line)) {
    const auto colon = line.find(':');
    const std::string value = line.substr(colon + 1);
    cfg[line.substr(0, colon)] = value.empty() ? value : value.substr(1);
  }
  j["config"] = cfg;
  return j.dump(2) + "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_curves_csv(const MetricsLog& log, const fs::path& path) { write_text(path, curves_csv(log)); }
void write_summary_json(const RunSummary& summary, const fs::path& path) { write_text(path, summary_json(summary)); }
RunSummary read_summary_json(const fs::path& path) { return parse_summary_json(read_text(path)); }

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ParseError("missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) throw ParseError("csv has no header row");
  return t;
}

PlotData plot_data(const MetricsLog& log) {
  return plot_data_from_csv(curves_csv(log), megabatch_csv(log));
}

PlotData plot_data_from_csv(const std::string& curves, const std::string& megabatches) {
  PlotData d;
  const CsvTable c = parse_csv(curves);
  table_check(c, "curves");
  const std::size_t gi = c.column("global_iter"), ta = c.column("train_acc"), va = c.column("val_acc");
  for (const auto& row : c.rows) d.gap_curve.emplace_back(num(row[gi]), 100.0 * (num(row[ta]) - num(row[va])));

  const CsvTable m = parse_csv(megabatches);
  table_check(m, "megabatches");
  const std::size_t te = m.column("test_errors");
  std::vector<std::size_t> layer_cols;
  for (std::size_t i = 0; i < m.header.size(); ++i) {
    const std::string& h = m.header[i];
    if (h.size() > 7 && h.ends_with("_pruned")) {
      layer_cols.push_back(i);
      d.layer_names.push_back(h.substr(0, h.size() - 7));
    }
  }
  for (const auto& row : m.rows) {
    d.test_errors.push_back(static_cast<std::size_t>(num(row[te])));
    std::vector<double> fr;
    for (auto i : layer_cols) fr.push_back(num(row[i]));
    d.layer_fractions.push_back(std::move(fr));
  }
  return d;
}

void emit_svg(const PlotData& d, const std::string& prefix) {
  write_text(prefix + "gap.svg",
             line_chart("Generalization gap", "training iterations", "train - val accuracy (points)", d.gap_curve, true));
  std::vector<std::pair<double, double>> cer;
  double running = 0;
  for (std::size_t t = 0; t < d.test_errors.size(); ++t) {
    running += static_cast<double>(d.test_errors[t]);
    cer.emplace_back(static_cast<double>(t + 1), running);
  }
  write_text(prefix + "cer.svg", line_chart("Cumulative error rate", "megabatch", "CER (test errors)", cer, false));
  write_text(prefix + "layers.svg", bar_chart(d));
}

void write_run(const RunConfig& config, const MetricsLog& log, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "config.txt", to_text(config));
  write_text(dir / "run.json", metadata_json(metadata_for(config, log), config));
  write_summary_json(summarize(log), dir / "summary.json");
  write_curves_csv(log, dir / "curves.csv");
  write_text(dir / "megabatches.csv", megabatch_csv(log));
  write_text(dir / "layers.csv", layers_csv(log));
  write_text(dir / "prunes.csv", prunes_csv(log));
  write_text(dir / "events.csv", events_csv(log));
  write_text(dir / "predictions.csv", predictions_csv(log));
  emit_svg(log, (dir / "").string());
}

}  // namespace anyprune
