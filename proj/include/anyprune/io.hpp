#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "anyprune/config.hpp"
#include "anyprune/dataset.hpp"
#include "anyprune/metrics.hpp"

namespace anyprune {

namespace fs = std::filesystem;

// IDX pair: images magic 0x00000803 (n x rows x cols, unsigned bytes),
// labels magic 0x00000801. Pixels are scaled by 1/255; the sample shape is
// {1, rows, cols}.
Dataset load_idx(const fs::path& images, const fs::path& labels);
// Features must be multiples of 1/255 in [0, 1].
void write_idx(const Dataset& data, const fs::path& images, const fs::path& labels);

// Class c is centred on a fixed point of the radius-3 sphere: +-3 e_{c/2}
// while C <= 2d, seeded random directions otherwise.
Dataset gen_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double noise, std::uint64_t seed);
// C interleaved spiral arms in the first two coordinates; remaining
// coordinates are pure noise.
Dataset gen_spirals(std::size_t classes, std::size_t per_class, std::size_t dim, double noise, std::uint64_t seed);

// Header row required; every column but label_column is a feature.
Dataset load_csv(const fs::path& path, const std::string& label_column = "label");

struct LoadedData {
  Dataset pool;  // stream source
  Dataset test;  // fixed held-out set
};

// Loads or generates the source. Without explicit test files a per-class
// holdout is carved out of the data.
LoadedData load_source(const DatasetSource& source);
LoadedData split_holdout(const Dataset& data, const DatasetSource& source);

// --- run artifacts -------------------------------------------------------

inline const std::vector<std::string> kCurveColumns = {
    "run_id", "variant", "pruner", "megabatch", "epoch", "global_iter", "lr",
    "train_acc", "train_loss", "val_acc", "val_loss", "kept_count", "kept_fraction"};

std::string format_number(double v);

std::string curves_csv(const MetricsLog& log);
std::string megabatch_csv(const MetricsLog& log);  // megabatch, test_errors, test_acc, gen_gap, <layer>_pruned...
std::string layers_csv(const MetricsLog& log);     // long form with exact counts
std::string prunes_csv(const MetricsLog& log);
std::string events_csv(const MetricsLog& log);
std::string predictions_csv(const MetricsLog& log);

std::string summary_json(const RunSummary& summary);
RunSummary parse_summary_json(const std::string& text);
std::string metadata_json(const RunMetadata& meta, const RunConfig& config);

RunMetadata metadata_for(const RunConfig& config, const MetricsLog& log);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

void write_curves_csv(const MetricsLog& log, const fs::path& path);
void write_summary_json(const RunSummary& summary, const fs::path& path);
RunSummary read_summary_json(const fs::path& path);

// Parsed CSV: header plus rows of raw cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t column(const std::string& name) const;  // throws ParseError
};
CsvTable parse_csv(const std::string& text);

// Everything the plots need, recoverable from the CSVs alone.
struct PlotData {
  std::vector<std::pair<double, double>> gap_curve;  // (global_iter, gap in points)
  std::vector<std::size_t> test_errors;              // per megabatch
  std::vector<std::string> layer_names;
  std::vector<std::vector<double>> layer_fractions;  // [megabatch][layer]
};
PlotData plot_data(const MetricsLog& log);
PlotData plot_data_from_csv(const std::string& curves, const std::string& megabatches);

// Writes <prefix>gap.svg, <prefix>cer.svg and <prefix>layers.svg.
void emit_svg(const PlotData& data, const std::string& path_prefix);
inline void emit_svg(const MetricsLog& log, const std::string& path_prefix) { emit_svg(plot_data(log), path_prefix); }

// Writes the complete artifact set of one run into dir.
void write_run(const RunConfig& config, const MetricsLog& log, const fs::path& dir);

}  // namespace anyprune
