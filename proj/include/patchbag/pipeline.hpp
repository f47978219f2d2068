#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "patchbag/bovw.hpp"
#include "patchbag/eval.hpp"
#include "patchbag/geometry.hpp"
#include "patchbag/slide.hpp"
#include "patchbag/tiler.hpp"

namespace patchbag {

struct RegionExtraction {
  std::vector<OrientedRegion> regions;
  std::vector<SkipRecord> skipped;
};

/// Rasterizes, reads and orients every annotation at `scale`. Regions that
/// exceed the pixel budget or whose geometry is degenerate are recorded in
/// `skipped` instead.
RegionExtraction extract_regions(const SlideSource& slide,
                                 std::span<const PolygonAnnotation> annotations, int scale,
                                 const OrientOptions& options = {});

/// Flat key = value configuration. Blank lines and lines starting with '#'
/// are ignored; unknown keys are errors.
struct PipelineConfig {
  std::filesystem::path ds1_root;
  std::filesystem::path ds2_root;
  std::filesystem::path work_dir = "work";
  /// ds1 (microscopy images) or ds2 (annotated slides).
  std::string dataset = "ds2";
  int scale = 0;
  ScanOrder scan_order = ScanOrder::Raster;
  double background_threshold = 0.2;
  /// baseline or imported.
  std::string extractor = "baseline";
  std::filesystem::path imported_features_dir;
  int baseline_grid = kDefaultBaselineGrid;
  std::size_t k = 100;
  double trim_fraction = 0.8;
  VocabScope vocab_scope = VocabScope::PerRegion;
  std::size_t mlp_hidden = 100;
  double mlp_lambda = 0.2;
  double mlp_learning_rate = 0.01;
  int mlp_epochs = 200;
  std::size_t mlp_batch_size = 32;
  int folds = 5;
  std::uint64_t seed = 0;
  std::uint64_t max_region_pixels = std::uint64_t{1} << 30;
  int background_level = 230;
  int normal_regions_per_slide = 1;
  int normal_region_size = 512;
  SpreadStatistic error_statistic = SpreadStatistic::StdDev;

  /// Relative paths in a config file resolve against `base`.
  static PipelineConfig parse(std::string_view text, const std::filesystem::path& base = {});
  static PipelineConfig load(const std::filesystem::path& path);
  /// Sets one key from its textual value.
  void set(std::string_view key, std::string_view value,
           const std::filesystem::path& base = {});
  std::string to_text() const;
  void validate() const;

  std::uint64_t stage_seed(std::string_view stage) const { return derive_seed(seed, stage); }
  MlpConfig mlp_config() const;
  VocabularyOptions vocabulary_options() const;
  CrossValOptions crossval_options() const;
};

inline constexpr std::array<std::string_view, 8> kStageCommands = {
    "extract-regions", "tile", "features", "vocab", "encode", "train", "crossval", "synth"};
inline constexpr std::array<std::string_view, 4> kExperiments = {"exp1-ds1", "exp1-ds2",
                                                                 "exp2-merged", "exp3-scales"};

/// Options that apply to a single invocation rather than the experiment.
struct RunOptions {
  /// Recompute stages even when the cache is current.
  bool force = false;
  std::ostream* log = nullptr;
};

/// Stage output directory for a dataset: <work>/ds1 or <work>/ds2/scale<s>.
std::filesystem::path dataset_dir(const PipelineConfig& config, std::string_view dataset);

/// Runs one stage for config.dataset. Returns true when the stage ran,
/// false when cached outputs were current.
bool run_command(std::string_view command, const PipelineConfig& config,
                 const RunOptions& options = {});

/// Runs every stage an experiment needs, then writes and returns its reports
/// keyed by name (e.g. "ds1", "ds2", "merged", "scale0").
std::vector<std::pair<std::string, MetricsReport>> run_experiment(
    std::string_view name, const PipelineConfig& config, const RunOptions& options = {});

/// Non-empty descriptor sets of a dataset in set-manifest order.
std::vector<DescriptorSet> load_feature_sets(const std::filesystem::path& dataset_dir);

/// One run manifest record.
struct StageRecord {
  std::string stage;
  std::string dataset_dir;
  std::string stage_key;
  std::string params_json;
  std::vector<std::pair<std::string, std::string>> outputs;  // path, hash
};

/// Records of <work>/manifest.jsonl in append order.
std::vector<StageRecord> read_run_manifest(const std::filesystem::path& work_dir);

/// FNV-1a 64 of a file's bytes as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

}  // namespace patchbag
