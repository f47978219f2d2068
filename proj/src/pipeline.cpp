#include "patchbag/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "patchbag/binary_io.hpp"
#include "patchbag/png_io.hpp"
#include "patchbag/synthetic.hpp"

namespace patchbag {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::ConfigError,
                "config key '" + std::string(key) + "': cannot parse '" + std::string(value) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  try {
    std::size_t used = 0;
    const std::string s(value);
    const double v = std::stod(s, &used);
    if (used == s.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::ConfigError,
              "config key '" + std::string(key) + "': cannot parse '" + std::string(value) + "'");
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void log_line(const RunOptions& o, const std::string& text) {
  if (o.log) *o.log << text << '\n';
}

/// Regular files under `p` (or `p` itself), sorted by path.
std::vector<fs::path> list_files(const fs::path& p) {
  std::vector<fs::path> out;
  if (fs::is_regular_file(p)) {
    out.push_back(p);
  } else if (fs::is_directory(p)) {
    for (const auto& e : fs::recursive_directory_iterator(p)) {
      if (e.is_regular_file()) out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string relative_to(const fs::path& p, const fs::path& base) {
  return p.lexically_relative(base).generic_string();
}

/// Combined hash of every file under `paths`, names included.
std::string tree_hash(const std::vector<fs::path>& paths) {
  std::string acc;
  for (const fs::path& root : paths) {
    const fs::path base = fs::is_directory(root) ? root : root.parent_path();
    acc += root.filename().generic_string() + "\n";
    for (const fs::path& f : list_files(root)) {
      acc += relative_to(f, base) + ":" + file_hash(f) + "\n";
    }
  }
  return hex64(fnv1a64(acc));
}

// Region store -------------------------------------------------------------

constexpr std::string_view kRegionHeader =
    "region_id,label,scale,rotation_deg,bbox_x,bbox_y,width,height";

void write_region_store(const RegionExtraction& ex, const fs::path& dir) {
  fs::create_directories(dir);
  std::ostringstream index;
  index << kRegionHeader << '\n';
  char rot[64];
  for (const OrientedRegion& r : ex.regions) {
    write_png(dir / (r.region_id + ".png"), r.image);
    std::vector<std::uint8_t> mask(r.mask.bitmap.size());
    std::transform(r.mask.bitmap.begin(), r.mask.bitmap.end(), mask.begin(),
                   [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
    write_png_gray(dir / (r.region_id + "_mask.png"), r.mask.width, r.mask.height, mask);
    std::snprintf(rot, sizeof rot, "%.17g", r.rotation_deg);
    index << r.region_id << ',' << label_index(r.label) << ',' << r.scale << ',' << rot << ','
          << r.bbox.x << ',' << r.bbox.y << ',' << r.bbox.width << ',' << r.bbox.height << '\n';
  }
  atomic_write_text(dir / "regions.csv", index.str());
  std::ostringstream skips;
  skips << "region_id,reason,pixel_count\n";
  for (const SkipRecord& s : ex.skipped) {
    skips << s.region_id << ',' << s.reason << ',' << s.pixel_count << '\n';
  }
  atomic_write_text(dir / "skipped.csv", skips.str());
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

OrientedRegion load_region(const fs::path& dir, const std::vector<std::string>& f) {
  OrientedRegion r;
  r.region_id = f[0];
  const auto label = label_from_code(parse_number<int>("label", f[1]));
  if (!label) throw Error(ErrorCode::InvalidLabel, "regions.csv: bad label for " + f[0]);
  r.label = *label;
  r.scale = parse_number<int>("scale", f[2]);
  r.rotation_deg = parse_real("rotation_deg", f[3]);
  r.bbox = {parse_number<std::int64_t>("bbox_x", f[4]), parse_number<std::int64_t>("bbox_y", f[5]),
            parse_number<std::int64_t>("width", f[6]), parse_number<std::int64_t>("height", f[7])};
  r.image = read_png(dir / (r.region_id + ".png"));
  const GrayImage m = read_png_gray(dir / (r.region_id + "_mask.png"));
  r.mask.origin_x = r.bbox.x;
  r.mask.origin_y = r.bbox.y;
  r.mask.width = m.width;
  r.mask.height = m.height;
  r.mask.bitmap.resize(m.pixels.size());
  std::transform(m.pixels.begin(), m.pixels.end(), r.mask.bitmap.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 1 : 0); });
  return r;
}

std::vector<OrientedRegion> load_region_store(const fs::path& dir) {
  std::ifstream in(dir / "regions.csv");
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + (dir / "regions.csv").string());
  std::string line;
  std::getline(in, line);
  if (line != kRegionHeader) {
    throw Error(ErrorCode::ParseError, (dir / "regions.csv").string() + ": unexpected header");
  }
  std::vector<OrientedRegion> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw Error(ErrorCode::ParseError, "regions.csv: malformed row '" + line + "'");
    out.push_back(load_region(dir, f));
  }
  return out;
}

// Reports -------------------------------------------------------------------

MetricsReport read_report(const fs::path& dir, SpreadStatistic spread) {
  std::ifstream in(dir / "folds.csv");
  if (!in) throw Error(ErrorCode::MissingArtifact, "missing " + (dir / "folds.csv").string());
  std::string line;
  std::getline(in, line);
  std::map<int, FoldMetrics> folds;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 3) throw Error(ErrorCode::ParseError, "folds.csv: malformed row");
    FoldMetrics& m = folds[parse_number<int>("fold", f[0])];
    m.fold = parse_number<int>("fold", f[0]);
    const double v = parse_real("value", f[2]);
    if (f[1] == "precision") m.precision = v;
    else if (f[1] == "recall") m.recall = v;
    else if (f[1] == "f1") m.f1 = v;
    else if (f[1] == "accuracy") m.accuracy = v;
    else if (f[1] == "auc") m.auc = v;
    else if (f[1] == "loss") m.loss = v;
  }
  std::ifstream cin(dir / "confusion.csv");
  if (!cin) throw Error(ErrorCode::MissingArtifact, "missing " + (dir / "confusion.csv").string());
  Confusion c{};
  std::getline(cin, line);
  for (std::size_t t = 0; t < kNumClasses && std::getline(cin, line); ++t) {
    const auto f = split_csv(line);
    if (f.size() != kNumClasses + 1) throw Error(ErrorCode::ParseError, "confusion.csv: malformed row");
    for (std::size_t p = 0; p < kNumClasses; ++p) {
      c[t][p] = parse_number<std::uint64_t>("count", f[p + 1]);
    }
  }
  std::vector<FoldMetrics> list;
  for (auto& [id, m] : folds) list.push_back(m);
  return summarize(std::move(list), c, spread);
}

// Stages --------------------------------------------------------------------

struct Input {
  fs::path path;
  /// Command that produces the input, or a hint when it is user-provided.
  std::string producer;
};

struct Stage {
  std::string name;
  fs::path dir;  // dataset directory the stage works in
  json params;
  std::vector<Input> inputs;
  std::vector<fs::path> outputs;
};

fs::path manifest_path(const PipelineConfig& c) { return c.work_dir / "manifest.jsonl"; }

std::vector<std::pair<std::string, std::string>> hash_outputs(const Stage& s, const fs::path& work) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const fs::path& o : s.outputs) {
    for (const fs::path& f : list_files(o)) out.emplace_back(relative_to(f, work), file_hash(f));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Runs `body` unless the last manifest record for this stage has the same
/// key and its outputs are still intact.
bool run_stage(const PipelineConfig& config, const RunOptions& options, const Stage& stage,
               const std::function<void()>& body) {
  for (const Input& in : stage.inputs) {
    if (!fs::exists(in.path)) {
      throw Error(ErrorCode::MissingArtifact, "missing " + in.path.string() + "; " + in.producer);
    }
  }
  std::vector<fs::path> input_paths;
  for (const Input& in : stage.inputs) input_paths.push_back(in.path);
  const std::string input_hash = tree_hash(input_paths);
  const std::string rel_dir = relative_to(stage.dir, config.work_dir);
  const std::string key =
      hex64(fnv1a64(stage.name + "\n" + stage.params.dump() + "\n" + input_hash));

  if (!options.force) {
    const auto records = read_run_manifest(config.work_dir);
    for (auto it = records.rbegin(); it != records.rend(); ++it) {
      if (it->stage != stage.name || it->dataset_dir != rel_dir) continue;
      if (it->stage_key == key && !it->outputs.empty() &&
          hash_outputs(stage, config.work_dir) == it->outputs) {
        log_line(options, stage.name + " [" + rel_dir + "]: up to date");
        return false;
      }
      log_line(options, stage.name + " [" + rel_dir + "]: stale, recomputing");
      break;
    }
  }
  for (const fs::path& o : stage.outputs) fs::remove_all(o);
  fs::create_directories(stage.dir);
  body();

  json rec;
  rec["stage"] = stage.name;
  rec["dataset_dir"] = rel_dir;
  rec["stage_key"] = key;
  rec["input_hash"] = input_hash;
  rec["params"] = stage.params;
  json outs = json::object();
  const auto hashes = hash_outputs(stage, config.work_dir);
  for (const auto& [p, h] : hashes) outs[p] = h;
  rec["outputs"] = outs;
  fs::create_directories(config.work_dir);
  std::ofstream m(manifest_path(config), std::ios::app);
  if (!m) throw Error(ErrorCode::IoError, "cannot append to " + manifest_path(config).string());
  m << rec.dump() << '\n';
  log_line(options, stage.name + " [" + rel_dir + "]: done, " + std::to_string(hashes.size()) +
                        " output file(s)");
  return true;
}

std::string produced_by(std::string_view command) {
  return "run `patchbag " + std::string(command) + "` first";
}

json mlp_params(const PipelineConfig& c) {
  return {{"mlp_hidden", c.mlp_hidden},
          {"mlp_lambda", c.mlp_lambda},
          {"mlp_learning_rate", c.mlp_learning_rate},
          {"mlp_epochs", c.mlp_epochs},
          {"mlp_batch_size", c.mlp_batch_size},
          {"seed", c.seed}};
}

json vocab_params(const PipelineConfig& c) {
  return {{"k", c.k},
          {"trim_fraction", c.trim_fraction},
          {"vocab_scope", std::string(vocab_scope_name(c.vocab_scope))},
          {"seed", c.seed}};
}

bool is_ds1(const PipelineConfig& c) { return c.dataset == "ds1"; }

std::vector<fs::path> slide_dirs(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool cmd_extract_regions(const PipelineConfig& c, const RunOptions& o) {
  if (is_ds1(c)) {
    log_line(o, "extract-regions: ds1 images are tiled whole; nothing to extract");
    return false;
  }
  const fs::path dir = dataset_dir(c, "ds2");
  Stage s{"extract-regions",
          dir,
          {{"dataset", "ds2"},
           {"scale", c.scale},
           {"max_region_pixels", c.max_region_pixels},
           {"background_level", c.background_level},
           {"normal_regions_per_slide", c.normal_regions_per_slide},
           {"normal_region_size", c.normal_region_size},
           {"seed", c.seed}},
          {{c.ds2_root, "set ds2_root to a slide directory (or run `patchbag synth`)"}},
          {dir / "regions"}};
  return run_stage(c, o, s, [&] {
    RegionExtraction all;
    OrientOptions orient;
    orient.max_pixels = c.max_region_pixels;
    for (const fs::path& sd : slide_dirs(c.ds2_root)) {
      const std::string slide_id = sd.filename().string();
      const fs::path ann_path = sd / "annotations.xml";
      if (!fs::exists(ann_path)) {
        throw Error(ErrorCode::MissingArtifact, "missing " + ann_path.string());
      }
      const auto bytes = read_file_bytes(ann_path);
      const auto annotations = parse_annotations_text(
          std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), slide_id);
      if (annotations.empty()) {
        log_line(o, slide_id + ": no annotations");
        continue;
      }
      const DirectorySlide slide(sd);
      RegionExtraction ex = extract_regions(slide, annotations, c.scale, orient);
      NormalSamplingOptions ns;
      ns.count = c.normal_regions_per_slide;
      ns.seed = derive_seed(c.stage_seed("normal-sampling"), slide_id);
      ns.scale = c.scale;
      ns.region_size = c.normal_region_size;
      ns.background_level = c.background_level;
      NormalSampling normals = sample_normal_regions(slide, annotations, ns, slide_id);
      for (const std::string& w : normals.warnings) log_line(o, slide_id + ": " + w);
      log_line(o, slide_id + ": " + std::to_string(ex.regions.size()) + " annotated, " +
                      std::to_string(normals.regions.size()) + " normal, " +
                      std::to_string(ex.skipped.size()) + " skipped");
      for (auto& r : ex.regions) all.regions.push_back(std::move(r));
      for (auto& r : normals.regions) all.regions.push_back(std::move(r));
      for (auto& k : ex.skipped) all.skipped.push_back(std::move(k));
    }
    write_region_store(all, dir / "regions");
  });
}

bool cmd_tile(const PipelineConfig& c, const RunOptions& o) {
  const fs::path dir = dataset_dir(c, c.dataset);
  Stage s{"tile",
          dir,
          {{"dataset", c.dataset},
           {"scan_order", std::string(scan_order_name(c.scan_order))},
           {"background_threshold", c.background_threshold}},
          {},
          {dir / "patches"}};
  if (is_ds1(c)) {
    s.inputs.push_back({c.ds1_root, "set ds1_root to a microscopy image directory"});
  } else {
    s.inputs.push_back({dir / "regions", produced_by("extract-regions")});
  }
  return run_stage(c, o, s, [&] {
    const fs::path out = dir / "patches";
    fs::create_directories(out);
    // The manifest must exist even when no set is emitted.
    atomic_write_text(out / "sets.csv", std::string(kSetManifestHeader) + "\n");
    if (is_ds1(c)) {
      for (ClassLabel label : kAllLabels) {
        const fs::path class_dir = c.ds1_root / std::string(label_name(label));
        if (!fs::is_directory(class_dir)) {
          log_line(o, "tile: no " + class_dir.string());
          continue;
        }
        std::vector<fs::path> images;
        for (const auto& e : fs::directory_iterator(class_dir)) {
          if (e.is_regular_file() && to_lower(e.path().extension().string()) == ".png") {
            images.push_back(e.path());
          }
        }
        std::sort(images.begin(), images.end());
        for (const fs::path& img : images) {
          const std::string id = std::string(label_name(label)) + "_" + img.stem().string();
          emit_patches(tile_microscopy(read_png(img), id, label), out);
        }
      }
      return;
    }
    for (const OrientedRegion& r : load_region_store(dir / "regions")) {
      const PatchSet set = tile_region(r, c.scan_order, c.background_threshold);
      if (set.n_patches() == 0) log_line(o, "tile: " + r.region_id + " yields no patches");
      emit_patches(set, out);
    }
  });
}

bool cmd_features(const PipelineConfig& c, const RunOptions& o) {
  const fs::path dir = dataset_dir(c, c.dataset);
  Stage s{"features",
          dir,
          {{"extractor", c.extractor}, {"baseline_grid", c.baseline_grid}},
          {{dir / "patches", produced_by("tile")}},
          {dir / "features"}};
  const bool imported = c.extractor == "imported";
  if (imported) {
    s.inputs.push_back({c.imported_features_dir, "set imported_features_dir"});
  }
  return run_stage(c, o, s, [&] {
    const fs::path out = dir / "features";
    fs::create_directories(out);
    for (const ManifestRecord& rec : read_set_manifest(dir / "patches" / "sets.csv")) {
      const fs::path file = out / (rec.region_id + ".pbfv");
      if (!imported) {
        write_feature_file(extract_baseline_set(load_patch_set(dir / "patches", rec), c.baseline_grid),
                           file);
        continue;
      }
      const fs::path src = c.imported_features_dir / (rec.region_id + ".pbfv");
      if (!fs::exists(src)) {
        throw Error(ErrorCode::MissingArtifact, "missing imported feature file " + src.string());
      }
      const auto bytes = read_file_bytes(src);
      const DescriptorSet set = decode_feature_file(bytes);
      if (set.region_id != rec.region_id || set.label != rec.label ||
          set.n_patches() != rec.n_patches) {
        throw Error(ErrorCode::DataError, src.string() + " does not match set '" +
                                              rec.region_id + "' in the set manifest");
      }
      atomic_write_file(file, bytes);
    }
  });
}

/// Writes vocab/<key>.pbcb plus vocab/index.txt listing keys in order.
void write_vocabulary(const Vocabulary& v, const fs::path& dir) {
  fs::create_directories(dir);
  std::string index;
  for (const Codebook& cb : v.codebooks) {
    write_codebook(cb, dir / (cb.key + ".pbcb"));
    index += cb.key + "\n";
  }
  atomic_write_text(dir / "index.txt", index);
}

Vocabulary read_vocabulary(const fs::path& dir) {
  std::ifstream in(dir / "index.txt");
  if (!in) throw Error(ErrorCode::MissingArtifact, "missing " + (dir / "index.txt").string());
  Vocabulary v;
  std::string key;
  while (std::getline(in, key)) {
    if (key.empty()) continue;
    v.codebooks.push_back(read_codebook(dir / (key + ".pbcb")));
  }
  if (v.codebooks.empty()) throw Error(ErrorCode::DataError, "vocabulary index is empty");
  v.scope = v.codebooks.front().scope;
  return v;
}

void check_sets(const std::vector<DescriptorSet>& sets, const fs::path& dir) {
  if (sets.empty()) {
    throw Error(ErrorCode::EmptyInput, "no descriptor sets in " + dir.string());
  }
}

bool cmd_vocab(const PipelineConfig& c, const RunOptions& o) {
  const fs::path dir = dataset_dir(c, c.dataset);
  Stage s{"vocab", dir, vocab_params(c), {{dir / "features", produced_by("features")}}, {dir / "vocab"}};
  return run_stage(c, o, s, [&] {
    const auto sets = load_feature_sets(dir);
    check_sets(sets, dir);
    write_vocabulary(fit_vocabulary(sets, c.vocabulary_options()), dir / "vocab");
  });
}

bool cmd_encode(const PipelineConfig& c, const RunOptions& o) {
  const fs::path dir = dataset_dir(c, c.dataset);
  Stage s{"encode",
          dir,
          json::object(),
          {{dir / "features", produced_by("features")}, {dir / "vocab", produced_by("vocab")}},
          {dir / "encoded.csv"}};
  return run_stage(c, o, s, [&] {
    const auto sets = load_feature_sets(dir);
    check_sets(sets, dir);
    write_table_csv(encode_sets(sets, read_vocabulary(dir / "vocab")), dir / "encoded.csv");
  });
}

bool cmd_train(const PipelineConfig& c, const RunOptions& o) {
  const fs::path dir = dataset_dir(c, c.dataset);
  Stage s{"train", dir, mlp_params(c), {{dir / "encoded.csv", produced_by("encode")}},
          {dir / "model.pbml"}};
  return run_stage(c, o, s, [&] {
    const MlpModel m = train_mlp(read_table_csv(dir / "encoded.csv"), c.mlp_config());
    write_model(m, dir / "model.pbml");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", m.final_loss);
    log_line(o, std::string("train: final training loss ") + buf);
  });
}

json crossval_params(const PipelineConfig& c) {
  json p = vocab_params(c);
  p.update(mlp_params(c));
  p["folds"] = c.folds;
  p["error_statistic"] = std::string(spread_name(c.error_statistic));
  return p;
}

MetricsReport crossval_sets(const PipelineConfig& c, const std::vector<DescriptorSet>& sets,
                            const fs::path& dir, const RunOptions& o) {
  check_sets(sets, dir);
  const MetricsReport r = cross_validate(sets, c.vocabulary_options(), c.crossval_options());
  write_report(r, dir / "report");
  log_line(o, format_report_table(r));
  return r;
}

bool cmd_crossval(const PipelineConfig& c, const RunOptions& o) {
  const fs::path dir = dataset_dir(c, c.dataset);
  Stage s{"crossval", dir, crossval_params(c), {{dir / "features", produced_by("features")}},
          {dir / "report"}};
  return run_stage(c, o, s, [&] { crossval_sets(c, load_feature_sets(dir), dir, o); });
}

bool cmd_synth(const PipelineConfig& c, const RunOptions& o) {
  if (c.ds1_root.empty() && c.ds2_root.empty()) {
    throw Error(ErrorCode::ConfigError, "synth needs ds1_root and/or ds2_root");
  }
  if (!c.ds2_root.empty()) {
    SyntheticSlideOptions so;
    so.seed = c.stage_seed("synth-ds2");
    write_synthetic_slides(c.ds2_root, 4, so);
    log_line(o, "synth: wrote 4 slides to " + c.ds2_root.string());
  }
  if (!c.ds1_root.empty()) {
    write_synthetic_microscopy(c.ds1_root, 5, c.stage_seed("synth-ds1"));
    log_line(o, "synth: wrote 20 images to " + c.ds1_root.string());
  }
  return true;
}

void run_through(const PipelineConfig& c, const RunOptions& o, std::string_view last) {
  static constexpr std::string_view order[] = {"extract-regions", "tile", "features", "vocab",
                                               "encode", "train", "crossval"};
  for (std::string_view cmd : order) {
    run_command(cmd, c, o);
    if (cmd == last) return;
  }
}

std::pair<std::string, MetricsReport> single_dataset(const PipelineConfig& c, const RunOptions& o,
                                                     std::string key) {
  run_through(c, o, "crossval");
  return {std::move(key), read_report(dataset_dir(c, c.dataset) / "report", c.error_statistic)};
}

std::pair<std::string, MetricsReport> merged(const PipelineConfig& config, const RunOptions& o) {
  PipelineConfig c1 = config;
  c1.dataset = "ds1";
  run_through(c1, o, "features");
  PipelineConfig c2 = config;
  c2.dataset = "ds2";
  run_through(c2, o, "features");

  const fs::path d1 = dataset_dir(config, "ds1");
  const fs::path d2 = dataset_dir(config, "ds2");
  const fs::path dir = dataset_dir(config, "merged");
  const auto load_both = [&] {
    auto sets = load_feature_sets(d1);
    auto more = load_feature_sets(d2);
    sets.insert(sets.end(), std::make_move_iterator(more.begin()),
                std::make_move_iterator(more.end()));
    return sets;
  };
  const std::vector<Input> inputs = {{d1 / "features", produced_by("features")},
                                     {d2 / "features", produced_by("features")}};
  run_stage(config, o, {"vocab", dir, vocab_params(config), inputs, {dir / "vocab"}}, [&] {
    write_vocabulary(fit_vocabulary(load_both(), config.vocabulary_options()), dir / "vocab");
  });
  auto enc_inputs = inputs;
  enc_inputs.push_back({dir / "vocab", produced_by("run-experiment exp2-merged")});
  run_stage(config, o, {"encode", dir, json::object(), enc_inputs, {dir / "encoded.csv"}}, [&] {
    const EncodedTable t = encode_sets(load_both(), read_vocabulary(dir / "vocab"));
    write_table_csv(t, dir / "encoded.csv");
    log_line(o, "encode: merged table has " + std::to_string(t.size()) + " rows");
  });
  run_stage(config, o, {"crossval", dir, crossval_params(config), inputs, {dir / "report"}},
            [&] { crossval_sets(config, load_both(), dir, o); });
  return {"merged", read_report(dir / "report", config.error_statistic)};
}

}  // namespace

RegionExtraction extract_regions(const SlideSource& slide,
                                 std::span<const PolygonAnnotation> annotations, int scale,
                                 const OrientOptions& options) {
  RegionExtraction out;
  const std::int64_t f = scale_factor(scale);
  const LevelSize level = slide.level_size(scale);
  for (const PolygonAnnotation& a : annotations) {
    try {
      const RegionMask mask = rasterize_mask(a, scale);
      const std::uint64_t box = static_cast<std::uint64_t>(mask.width) *
                                static_cast<std::uint64_t>(mask.height);
      if (box > options.max_pixels) {
        out.skipped.push_back({a.region_id, "region_too_large", box});
        continue;
      }
      // Parts of the mask box outside the slide read as white.
      const Rect want = mask.bounds();
      const Rect inside{std::max<std::int64_t>(want.x, 0), std::max<std::int64_t>(want.y, 0),
                        0, 0};
      const std::int64_t x1 = std::min(want.x + want.width, level.width);
      const std::int64_t y1 = std::min(want.y + want.height, level.height);
      RgbImage image(mask.width, mask.height);
      if (x1 > inside.x && y1 > inside.y) {
        const Rect r{inside.x, inside.y, x1 - inside.x, y1 - inside.y};
        const RgbImage part =
            extract_region_at_scale(slide, {r.x * f, r.y * f, r.width * f, r.height * f}, scale);
        image = crop(part, {want.x - r.x, want.y - r.y, want.width, want.height});
      }
      OrientedRegion region = orient_region(image, mask, options);
      region.region_id = a.region_id;
      region.label = a.label;
      region.scale = scale;
      out.regions.push_back(std::move(region));
    } catch (const RegionSkipped& e) {
      out.skipped.push_back({a.region_id, "region_too_large", e.pixels()});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateMask && e.code() != ErrorCode::ZeroLengthAxis &&
          e.code() != ErrorCode::DegenerateGeometry) {
        throw;
      }
      out.skipped.push_back({a.region_id, std::string(error_code_name(e.code())), 0});
    }
  }
  return out;
}

// Config ----------------------------------------------------------------------

void PipelineConfig::set(std::string_view key, std::string_view raw, const fs::path& base) {
  const std::string value = trim(raw);
  const auto path = [&] {
    fs::path p(value);
    return p.is_relative() && !base.empty() && !value.empty() ? base / p : p;
  };
  if (key == "ds1_root") ds1_root = path();
  else if (key == "ds2_root") ds2_root = path();
  else if (key == "work_dir") work_dir = path();
  else if (key == "imported_features_dir") imported_features_dir = path();
  else if (key == "dataset") dataset = to_lower(value);
  else if (key == "scale") scale = parse_number<int>(key, value);
  else if (key == "scan_order") scan_order = parse_scan_order(value);
  else if (key == "background_threshold") background_threshold = parse_real(key, value);
  else if (key == "extractor") extractor = to_lower(value);
  else if (key == "baseline_grid") baseline_grid = parse_number<int>(key, value);
  else if (key == "k") k = parse_number<std::size_t>(key, value);
  else if (key == "trim_fraction") trim_fraction = parse_real(key, value);
  else if (key == "vocab_scope") vocab_scope = parse_vocab_scope(value);
  else if (key == "mlp_hidden") mlp_hidden = parse_number<std::size_t>(key, value);
  else if (key == "mlp_lambda") mlp_lambda = parse_real(key, value);
  else if (key == "mlp_learning_rate") mlp_learning_rate = parse_real(key, value);
  else if (key == "mlp_epochs") mlp_epochs = parse_number<int>(key, value);
  else if (key == "mlp_batch_size") mlp_batch_size = parse_number<std::size_t>(key, value);
  else if (key == "folds") folds = parse_number<int>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "max_region_pixels") max_region_pixels = parse_number<std::uint64_t>(key, value);
  else if (key == "background_level") background_level = parse_number<int>(key, value);
  else if (key == "normal_regions_per_slide") normal_regions_per_slide = parse_number<int>(key, value);
  else if (key == "normal_region_size") normal_region_size = parse_number<int>(key, value);
  else if (key == "error_statistic") error_statistic = parse_spread(value);
  else throw Error(ErrorCode::ConfigError, "unknown config key '" + std::string(key) + "'");
}

PipelineConfig PipelineConfig::parse(std::string_view text, const fs::path& base) {
  PipelineConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigError, "config line " + std::to_string(n) + ": expected key = value");
    }
    c.set(trim(t.substr(0, eq)), t.substr(eq + 1), base);
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path());
}

std::string PipelineConfig::to_text() const {
  std::ostringstream out;
  char buf[64];
  const auto real = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "ds1_root = " << ds1_root.generic_string() << '\n'
      << "ds2_root = " << ds2_root.generic_string() << '\n'
      << "work_dir = " << work_dir.generic_string() << '\n'
      << "dataset = " << dataset << '\n'
      << "scale = " << scale << '\n'
      << "scan_order = " << scan_order_name(scan_order) << '\n'
      << "background_threshold = " << real(background_threshold) << '\n'
      << "extractor = " << extractor << '\n'
      << "imported_features_dir = " << imported_features_dir.generic_string() << '\n'
      << "baseline_grid = " << baseline_grid << '\n'
      << "k = " << k << '\n'
      << "trim_fraction = " << real(trim_fraction) << '\n'
      << "vocab_scope = " << vocab_scope_name(vocab_scope) << '\n'
      << "mlp_hidden = " << mlp_hidden << '\n'
      << "mlp_lambda = " << real(mlp_lambda) << '\n'
      << "mlp_learning_rate = " << real(mlp_learning_rate) << '\n'
      << "mlp_epochs = " << mlp_epochs << '\n'
      << "mlp_batch_size = " << mlp_batch_size << '\n'
      << "folds = " << folds << '\n'
      << "seed = " << seed << '\n'
      << "max_region_pixels = " << max_region_pixels << '\n'
      << "background_level = " << background_level << '\n'
      << "normal_regions_per_slide = " << normal_regions_per_slide << '\n'
      << "normal_region_size = " << normal_region_size << '\n'
      << "error_statistic = " << spread_name(error_statistic) << '\n';
  return out.str();
}

void PipelineConfig::validate() const {
  const auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
  if (dataset != "ds1" && dataset != "ds2") fail("dataset must be ds1 or ds2");
  if (scale < 0 || scale > kMaxScale) fail("scale must be 0, 1 or 2");
  if (!(background_threshold >= 0.0 && background_threshold <= 1.0)) {
    fail("background_threshold must be in [0, 1]");
  }
  if (extractor != "baseline" && extractor != "imported") fail("extractor must be baseline or imported");
  if (baseline_grid < 1 || kPatchSize % baseline_grid != 0) fail("baseline_grid must divide 256");
  if (k == 0) fail("k must be positive");
  if (!(trim_fraction > 0.0 && trim_fraction <= 1.0)) fail("trim_fraction must be in (0, 1]");
  if (mlp_hidden == 0) fail("mlp_hidden must be positive");
  if (!(mlp_lambda >= 0.0)) fail("mlp_lambda must be non-negative");
  if (!(mlp_learning_rate > 0.0)) fail("mlp_learning_rate must be positive");
  if (mlp_epochs < 0) fail("mlp_epochs must be non-negative");
  if (mlp_batch_size == 0) fail("mlp_batch_size must be positive");
  if (folds < 2) fail("folds must be at least 2");
  if (normal_regions_per_slide < 0) fail("normal_regions_per_slide must be non-negative");
  if (normal_region_size <= 0 || normal_region_size % kPatchSize != 0) {
    fail("normal_region_size must be a positive multiple of 256");
  }
  if (background_level < 0 || background_level > 255) fail("background_level must be in [0, 255]");
}

MlpConfig PipelineConfig::mlp_config() const {
  MlpConfig m;
  m.hidden = mlp_hidden;
  m.lambda = mlp_lambda;
  m.learning_rate = mlp_learning_rate;
  m.epochs = mlp_epochs;
  m.batch_size = mlp_batch_size;
  m.seed = stage_seed("mlp");
  return m;
}

VocabularyOptions PipelineConfig::vocabulary_options() const {
  VocabularyOptions v;
  v.scope = vocab_scope;
  v.k = k;
  v.trim_fraction = trim_fraction;
  v.seed = stage_seed("vocab");
  return v;
}

CrossValOptions PipelineConfig::crossval_options() const {
  CrossValOptions cv;
  cv.folds = folds;
  cv.seed = stage_seed("folds");
  cv.mlp = mlp_config();
  cv.spread = error_statistic;
  return cv;
}

// Commands ---------------------------------------------------------------------

fs::path dataset_dir(const PipelineConfig& config, std::string_view dataset) {
  if (dataset == "ds1") return config.work_dir / "ds1";
  return config.work_dir / std::string(dataset) / ("scale" + std::to_string(config.scale));
}

bool run_command(std::string_view command, const PipelineConfig& config,
                 const RunOptions& options) {
  config.validate();
  if (command == "extract-regions") return cmd_extract_regions(config, options);
  if (command == "tile") return cmd_tile(config, options);
  if (command == "features") return cmd_features(config, options);
  if (command == "vocab") return cmd_vocab(config, options);
  if (command == "encode") return cmd_encode(config, options);
  if (command == "train") return cmd_train(config, options);
  if (command == "crossval") return cmd_crossval(config, options);
  if (command == "synth") return cmd_synth(config, options);
  throw Error(ErrorCode::ConfigError, "unknown command '" + std::string(command) + "'");
}

std::vector<std::pair<std::string, MetricsReport>> run_experiment(std::string_view name,
                                                                  const PipelineConfig& config,
                                                                  const RunOptions& options) {
  config.validate();
  std::vector<std::pair<std::string, MetricsReport>> out;
  if (name == "exp1-ds1" || name == "exp1-ds2") {
    PipelineConfig c = config;
    c.dataset = name == "exp1-ds1" ? "ds1" : "ds2";
    out.push_back(single_dataset(c, options, c.dataset));
  } else if (name == "exp2-merged") {
    out.push_back(merged(config, options));
  } else if (name == "exp3-scales") {
    std::ostringstream summary;
    summary << "scale,metric,mean," << spread_name(config.error_statistic) << '\n';
    for (int s = 0; s <= kMaxScale; ++s) {
      PipelineConfig c = config;
      c.dataset = "ds2";
      c.scale = s;
      const std::string key = "scale" + std::to_string(s);
      log_line(options, "== " + key + " ==");
      auto result = single_dataset(c, options, key);
      for (const MetricSummary& m : result.second.summary) {
        char buf[128];
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g", m.mean, m.spread);
        summary << key << ',' << m.metric << buf << '\n';
      }
      out.push_back(std::move(result));
    }
    atomic_write_text(config.work_dir / "ds2" / "exp3_summary.csv", summary.str());
  } else {
    throw Error(ErrorCode::ConfigError, "unknown experiment '" + std::string(name) + "'");
  }
  return out;
}

std::vector<DescriptorSet> load_feature_sets(const fs::path& dir) {
  const fs::path manifest = dir / "patches" / "sets.csv";
  if (!fs::exists(manifest)) {
    throw Error(ErrorCode::MissingArtifact, "missing " + manifest.string() + "; " + produced_by("tile"));
  }
  std::vector<DescriptorSet> sets;
  for (const ManifestRecord& rec : read_set_manifest(manifest)) {
    const fs::path file = dir / "features" / (rec.region_id + ".pbfv");
    if (!fs::exists(file)) {
      throw Error(ErrorCode::MissingArtifact, "missing " + file.string() + "; " + produced_by("features"));
    }
    DescriptorSet set = read_feature_file(file);
    if (set.n_patches() > 0) sets.push_back(std::move(set));
  }
  return sets;
}

std::vector<StageRecord> read_run_manifest(const fs::path& work_dir) {
  std::vector<StageRecord> out;
  std::ifstream in(work_dir / "manifest.jsonl");
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, "run manifest: " + std::string(e.what()));
    }
    StageRecord r;
    r.stage = j.value("stage", "");
    r.dataset_dir = j.value("dataset_dir", "");
    r.stage_key = j.value("stage_key", "");
    r.params_json = j.contains("params") ? j["params"].dump() : "{}";
    if (j.contains("outputs")) {
      for (const auto& [p, h] : j["outputs"].items()) r.outputs.emplace_back(p, h.get<std::string>());
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string file_hash(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return hex64(fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
}

}  // namespace patchbag
