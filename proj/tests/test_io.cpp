#include <cmath>
#include <fstream>
#include <set>

#include "anyprune/alma.hpp"
#include "anyprune/errors.hpp"
#include "anyprune/io.hpp"
#include "doctest.h"

using namespace anyprune;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "anyprune_test_io";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, std::initializer_list<unsigned char> bytes) {
  std::ofstream out(p, std::ios::binary);
  for (unsigned char b : bytes) out.put(static_cast<char>(b));
}

// Two 2x2 images and their labels, written byte by byte.
void hand_idx(const fs::path& img, const fs::path& lab) {
  write_bytes(img, {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2,  //
                    0, 255, 51, 102,                                   //
                    255, 0, 0, 204});
  write_bytes(lab, {0, 0, 8, 1, 0, 0, 0, 2, 7, 3});
}

RunConfig tiny_run() {
  RunConfig c;
  c.variant = Variant::app_default;
  c.megabatches = 2;
  c.epochs = 3;
  c.hidden = {6};
  c.dataset.kind = DatasetKind::synthetic_blobs;
  c.dataset.classes = 3;
  c.dataset.per_class = 40;
  c.dataset.dim = 4;
  return c;
}

}  // namespace

TEST_CASE("load_idx reads a hand-made pair") {
  const auto img = scratch("hand.idx3"), lab = scratch("hand.idx1");
  hand_idx(img, lab);
  const Dataset d = load_idx(img, lab);
  CHECK(d.size() == 2);
  CHECK(d.dim() == 4);
  CHECK(d.sample_shape == Shape{1, 2, 2});
  CHECK(d.labels == std::vector<int>{7, 3});
  CHECK(d.classes == 8);
  CHECK(d.features.at(0, 1) == 1.0);
  CHECK(d.features.at(0, 2) == 0.2);
  CHECK(d.features.at(0, 3) == 0.4);
  CHECK(d.features.at(1, 3) == 0.8);
  CHECK(d.features.at(1, 1) == 0.0);

  SUBCASE("round trip") {
    const auto img2 = scratch("rt.idx3"), lab2 = scratch("rt.idx1");
    write_idx(d, img2, lab2);
    const Dataset back = load_idx(img2, lab2);
    CHECK(back.features == d.features);
    CHECK(back.labels == d.labels);
    CHECK(read_text(img2) == read_text(img));
  }
}

TEST_CASE("load_idx rejects malformed files") {
  const auto img = scratch("hand.idx3"), lab = scratch("hand.idx1");
  hand_idx(img, lab);
  const auto bad = scratch("bad.idx1");
  write_bytes(bad, {0, 0, 8, 3, 0, 0, 0, 2, 7, 3});
  CHECK_THROWS_AS(load_idx(img, bad), FormatError);
  write_bytes(bad, {0, 0, 8, 1, 0, 0, 0, 3, 7, 3, 1});
  CHECK_THROWS_AS(load_idx(img, bad), FormatError);  // count mismatch
  write_bytes(bad, {0, 0, 8, 1, 0, 0, 0, 2, 7});
  CHECK_THROWS_AS(load_idx(img, bad), FormatError);  // truncated
  const auto short_img = scratch("short.idx3");
  write_bytes(short_img, {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3});
  CHECK_THROWS_AS(load_idx(short_img, lab), FormatError);
  CHECK_THROWS_AS(load_idx(scratch("missing"), lab), IoError);
}

TEST_CASE("bundled digit subset round-trips") {
  const fs::path dir = fs::path(ANYPRUNE_SOURCE_DIR) / "data" / "mnist5k";
  const Dataset d = load_idx(dir / "images-idx3-ubyte", dir / "labels-idx1-ubyte");
  CHECK(d.size() == 5000);
  CHECK(d.dim() == 784);
  CHECK(d.classes == 10);
  const auto img = scratch("mnist.idx3"), lab = scratch("mnist.idx1");
  write_idx(d, img, lab);
  const Dataset back = load_idx(img, lab);
  CHECK(back.features == d.features);
  CHECK(back.labels == d.labels);
}

TEST_CASE("gen_blobs") {
  const Dataset d = gen_blobs(2, 50, 2, 0.1, 0);
  CHECK(d.size() == 100);
  CHECK(d.dim() == 2);
  CHECK(gen_blobs(2, 50, 2, 0.1, 0).features == d.features);
  CHECK(gen_blobs(2, 50, 2, 0.1, 1).features != d.features);

  // Perceptron with bias: converges to zero training errors iff separable.
  double w[3] = {0, 0, 0};
  std::size_t errors = 1;
  for (int epoch = 0; epoch < 1000 && errors; ++epoch) {
    errors = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double y = d.labels[i] == 0 ? 1.0 : -1.0;
      const double s = w[0] * d.features.at(i, 0) + w[1] * d.features.at(i, 1) + w[2];
      if (y * s <= 0) {
        w[0] += y * d.features.at(i, 0), w[1] += y * d.features.at(i, 1), w[2] += y;
        ++errors;
      }
    }
  }
  CHECK(errors == 0);

  // Class means sit near the radius-3 centres.
  const Dataset many = gen_blobs(6, 400, 3, 0.5, 4);
  for (std::size_t c = 0; c < 6; ++c) {
    double norm = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      double m = 0;
      for (std::size_t i = 0; i < many.size(); ++i)
        if (many.labels[i] == static_cast<int>(c)) m += many.features.at(i, j) / 400.0;
      norm += m * m;
    }
    CHECK(std::sqrt(norm) == doctest::Approx(3.0).epsilon(0.05));
  }
  const Dataset random_dirs = gen_blobs(9, 3, 2, 0.0, 2);
  for (std::size_t i = 0; i < random_dirs.size(); ++i) {
    CHECK(std::hypot(random_dirs.features.at(i, 0), random_dirs.features.at(i, 1)) == doctest::Approx(3.0));
  }
  CHECK_THROWS_AS(gen_blobs(1, 5, 2, 0.1, 0), ParameterError);
  CHECK_THROWS_AS(gen_blobs(2, 0, 2, 0.1, 0), ParameterError);
}

TEST_CASE("gen_spirals") {
  const Dataset d = gen_spirals(3, 30, 4, 0.05, 1);
  CHECK(d.size() == 90);
  CHECK(d.dim() == 4);
  CHECK(gen_spirals(3, 30, 4, 0.05, 1).features == d.features);
  CHECK_THROWS_AS(gen_spirals(3, 30, 1, 0.05, 1), ParameterError);
}

TEST_CASE("load_csv") {
  const auto p = scratch("ok.csv");
  write_text(p, "a,label,b\n1.5,0,2\n-1,1,3e2\r\n0,2,0\n");
  const Dataset d = load_csv(p);
  CHECK(d.size() == 3);
  CHECK(d.dim() == 2);
  CHECK(d.labels == std::vector<int>{0, 1, 2});
  CHECK(d.features.at(1, 1) == 300.0);
  CHECK(d.classes == 3);

  write_text(p, "x,y,label\n1.0,2.0,abc\n");
  CHECK_THROWS_AS(load_csv(p), ParseError);
  write_text(p, "x,y,label\n1.0,abc,1\n");
  CHECK_THROWS_AS(load_csv(p), ParseError);
  write_text(p, "x,y,label\n1.0,2.0\n");
  CHECK_THROWS_AS(load_csv(p), ParseError);
  write_text(p, "x,y,target\n1.0,2.0,1\n");
  CHECK_THROWS_AS(load_csv(p), ParseError);
  write_text(p, "x,label\n1.0,0.5\n");
  CHECK_THROWS_AS(load_csv(p), ParseError);
}

TEST_CASE("holdout split is disjoint and per-class") {
  DatasetSource src;
  src.kind = DatasetKind::synthetic_blobs;
  src.classes = 4;
  src.per_class = 50;
  src.dim = 3;
  src.test_per_class = 10;
  const LoadedData a = load_source(src);
  CHECK(a.test.size() == 40);
  CHECK(a.pool.size() == 160);
  std::set<std::vector<double>> rows;
  auto row = [](const Dataset& d, std::size_t i) {
    return std::vector<double>(d.features.raw() + i * d.dim(), d.features.raw() + (i + 1) * d.dim());
  };
  for (std::size_t i = 0; i < a.pool.size(); ++i) rows.insert(row(a.pool, i));
  for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(rows.count(row(a.test, i)) == 0);
  src.test_per_class.reset();
  src.test_fraction = 0.25;
  CHECK(load_source(src).test.size() == 52);  // round(12.5) per class
  src.test_per_class = 50;
  CHECK_THROWS_AS(load_source(src), DataError);
}

TEST_CASE("run artifacts") {
  const RunConfig c = tiny_run();
  const LoadedData data = load_source(c.dataset);
  const MetricsLog log = run(c, data.pool, data.test);

  SUBCASE("curves CSV schema and row count") {
    const std::string csv = curves_csv(log);
    const auto header = csv.substr(0, csv.find('\n'));
    CHECK(header ==
          "run_id,variant,pruner,megabatch,epoch,global_iter,lr,train_acc,train_loss,val_acc,val_loss,kept_count,"
          "kept_fraction");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
    CHECK(curves_csv(log) == csv);
  }
  SUBCASE("per-megabatch CSV") {
    const CsvTable t = parse_csv(megabatch_csv(log));
    CHECK(t.header == std::vector<std::string>{"megabatch", "test_errors", "test_acc", "gen_gap", "fc1.weight_pruned",
                                               "fc2.weight_pruned"});
    CHECK(t.rows.size() == 2);
  }
  SUBCASE("summary JSON round-trips") {
    const RunSummary s = summarize(log);
    const auto p = scratch("summary.json");
    write_summary_json(s, p);
    CHECK(read_summary_json(p) == s);
    CHECK(summary_json(read_summary_json(p)) == read_text(p));
    CHECK_THROWS_AS(parse_summary_json("{\"cer\": 1}"), ParseError);
  }
  SUBCASE("metadata echoes a config that parses back") {
    const RunMetadata m = metadata_for(c, log);
    CHECK(m.run_id == run_id(c));
    CHECK(metadata_json(m, c).find("\"config\"") != std::string::npos);
  }
  SUBCASE("plots can be rebuilt from the CSVs") {
    const PlotData a = plot_data(log);
    const PlotData b = plot_data_from_csv(curves_csv(log), megabatch_csv(log));
    CHECK(a.gap_curve == b.gap_curve);
    CHECK(a.test_errors == b.test_errors);
    CHECK(a.layer_fractions == b.layer_fractions);
    CHECK(a.gap_curve.size() == 6);
    CHECK(a.layer_names == std::vector<std::string>{"fc1.weight", "fc2.weight"});
  }
  SUBCASE("write_run produces the full set and re-runs identically from the echo") {
    const fs::path dir = scratch("run");
    fs::remove_all(dir);
    write_run(c, log, dir);
    for (const char* f : {"config.txt", "run.json", "summary.json", "curves.csv", "megabatches.csv", "layers.csv",
                          "prunes.csv", "events.csv", "predictions.csv", "gap.svg", "cer.svg", "layers.svg"}) {
      CHECK(fs::exists(dir / f));
    }
    const RunConfig echoed = load_config(dir / "config.txt");
    CHECK(echoed == c);
    const LoadedData again = load_source(echoed.dataset);
    CHECK(summary_json(summarize(run(echoed, again.pool, again.test))) == read_text(dir / "summary.json"));
  }
  SUBCASE("unwritable path") {
    CHECK_THROWS_AS(write_curves_csv(log, "/nonexistent-dir/x/curves.csv"), IoError);
  }
}
