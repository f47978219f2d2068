#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "oracles.hpp"
#include "patchbag/binary_io.hpp"
#include "patchbag/pipeline.hpp"
#include "patchbag/synthetic.hpp"

using namespace patchbag;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) out.push_back(l);
  return out;
}

PolygonAnnotation rect(const std::string& id, ClassLabel label, double x, double y, double w,
                       double h) {
  PolygonAnnotation a;
  a.region_id = id;
  a.label = label;
  a.vertices = {{x, y}, {x + w, y}, {x + w, y + h}, {x, y + h}};
  return a;
}

/// A 2048x1024 slide with one 500x760 lesion per class, written as a slide
/// directory with its annotation file.
std::vector<PolygonAnnotation> write_fixture_slide(const fs::path& dir, std::uint64_t seed,
                                                   bool annotate = true) {
  RgbImage img = texture_image(ClassLabel::Normal, 2048, 1024, seed);
  std::vector<PolygonAnnotation> anns = {
      rect("b", ClassLabel::Benign, 40, 100, 500, 760),
      rect("s", ClassLabel::InSitu, 560, 100, 500, 760),
      rect("v", ClassLabel::Invasive, 1080, 100, 500, 760)};
  for (std::size_t i = 0; i < anns.size(); ++i)
    paint_polygon(img, anns[i].vertices, anns[i].label, seed + i + 1);
  fs::create_directories(dir);
  const std::string id = dir.filename().string();
  atomic_write_text(dir / "annotations.xml",
                    annotate ? format_annotations(id, anns) : std::string{});
  write_slide_directory(MemorySlide(img), dir);
  return anns;
}

PipelineConfig fixture_config(const fs::path& root) {
  PipelineConfig c;
  c.ds1_root = root / "ds1";
  c.ds2_root = root / "ds2";
  c.work_dir = root / "work";
  c.background_threshold = 0.5;
  c.k = 8;
  c.vocab_scope = VocabScope::Global;
  c.mlp_hidden = 16;
  c.mlp_lambda = 0.001;
  c.mlp_learning_rate = 0.1;
  c.mlp_epochs = 40;
  c.folds = 2;
  c.seed = 7;
  c.normal_regions_per_slide = 2;
  c.normal_region_size = 256;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PATCHBAG_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, ParsesKeysAndResolvesPaths) {
  const auto c = PipelineConfig::parse(
      "# comment\n\nds2_root = slides\nwork_dir=/tmp/w\nk = 50\nvocab_scope = global\n"
      "scan_order = serpentine\nmlp_lambda = 0.05\nerror_statistic = stderr\n",
      "/data/cfg");
  EXPECT_EQ(c.ds2_root, fs::path("/data/cfg/slides"));
  EXPECT_EQ(c.work_dir, fs::path("/tmp/w"));
  EXPECT_EQ(c.k, 50u);
  EXPECT_EQ(c.vocab_scope, VocabScope::Global);
  EXPECT_EQ(c.scan_order, ScanOrder::Serpentine);
  EXPECT_DOUBLE_EQ(c.mlp_lambda, 0.05);
  EXPECT_EQ(c.error_statistic, SpreadStatistic::StdError);
  const auto back = PipelineConfig::parse(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  for (const char* text : {"colour = blue\n", "k\n", "scale = 5\n", "folds = 1\n",
                           "trim_fraction = 0\n", "normal_region_size = 300\n"}) {
    try {
      PipelineConfig::parse(text);
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ConfigError) << text;
    }
  }
}

TEST(Config, StageSeedsDiffer) {
  PipelineConfig c;
  c.seed = 3;
  EXPECT_NE(c.mlp_config().seed, c.vocabulary_options().seed);
  EXPECT_NE(c.crossval_options().seed, c.vocabulary_options().seed);
}

TEST(Pipeline, EmptyAnnotationsGiveEmptyStore) {
  oracle::TempDir root("pipe_empty");
  auto c = fixture_config(root.path());
  write_fixture_slide(c.ds2_root / "slide_00", 1, false);
  EXPECT_TRUE(run_command("extract-regions", c));
  const fs::path dir = dataset_dir(c, "ds2");
  EXPECT_EQ(lines_of(dir / "regions" / "regions.csv").size(), 1u);
  EXPECT_TRUE(run_command("tile", c));
  EXPECT_EQ(lines_of(dir / "patches" / "sets.csv").size(), 1u);
}

TEST(Pipeline, ExtractsLabeledRegionsAndNormals) {
  oracle::TempDir root("pipe_regions");
  auto c = fixture_config(root.path());
  write_fixture_slide(c.ds2_root / "slide_00", 2);
  run_command("extract-regions", c);
  const auto rows = lines_of(dataset_dir(c, "ds2") / "regions" / "regions.csv");
  ASSERT_EQ(rows.size(), 1u + 3u + 2u);
  EXPECT_EQ(rows[0], "region_id,label,scale,rotation_deg,bbox_x,bbox_y,width,height");
  std::map<std::string, int> labels;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto id = rows[i].substr(0, rows[i].find(','));
    const auto rest = rows[i].substr(rows[i].find(',') + 1);
    labels[id] = std::stoi(rest.substr(0, rest.find(',')));
  }
  EXPECT_EQ(labels["slide_00_b"], 1);
  EXPECT_EQ(labels["slide_00_s"], 2);
  EXPECT_EQ(labels["slide_00_v"], 3);
  EXPECT_EQ(labels["slide_00_normal0"], 0);
  EXPECT_TRUE(fs::exists(dataset_dir(c, "ds2") / "regions" / "slide_00_b.png"));
  EXPECT_TRUE(fs::exists(dataset_dir(c, "ds2") / "regions" / "slide_00_b_mask.png"));

  run_command("tile", c);
  const auto sets = read_set_manifest(dataset_dir(c, "ds2") / "patches" / "sets.csv");
  ASSERT_EQ(sets.size(), 5u);
  for (const auto& s : sets) EXPECT_EQ(s.n_patches, s.label == ClassLabel::Normal ? 1u : 6u);
}

TEST(Pipeline, OversizedRegionsGoToSkipLog) {
  oracle::TempDir root("pipe_skip");
  auto c = fixture_config(root.path());
  c.max_region_pixels = 300000;
  write_fixture_slide(c.ds2_root / "slide_00", 3);
  run_command("extract-regions", c);
  const fs::path dir = dataset_dir(c, "ds2") / "regions";
  const auto skipped = lines_of(dir / "skipped.csv");
  ASSERT_EQ(skipped.size(), 4u);
  EXPECT_EQ(skipped[0], "region_id,reason,pixel_count");
  EXPECT_EQ(skipped[1].rfind("slide_00_b,region_too_large,", 0), 0u);
  EXPECT_EQ(lines_of(dir / "regions.csv").size(), 3u);
}

TEST(Pipeline, MissingArtifactNamesProducer) {
  oracle::TempDir root("pipe_missing");
  const auto c = fixture_config(root.path());
  for (auto [cmd, producer] : {std::pair{"tile", "extract-regions"}, {"features", "tile"},
                               {"vocab", "features"}, {"train", "encode"}}) {
    try {
      run_command(cmd, c);
      FAIL() << cmd;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::MissingArtifact);
      EXPECT_NE(std::string(e.what()).find(std::string("patchbag ") + producer), std::string::npos)
          << e.what();
    }
  }
}

TEST(Pipeline, StagesAreCachedAndForceIsDeterministic) {
  oracle::TempDir root("pipe_cache");
  auto c = fixture_config(root.path());
  write_fixture_slide(c.ds2_root / "slide_00", 4);
  const auto first = run_experiment("exp1-ds2", c);
  ASSERT_EQ(first.size(), 1u);
  EXPECT_EQ(first[0].first, "ds2");
  const fs::path dir = dataset_dir(c, "ds2");
  const std::string folds = slurp(dir / "report" / "folds.csv");
  const std::string model = slurp(dir / "model.pbml");
  const auto n_records = read_run_manifest(c.work_dir).size();
  EXPECT_EQ(n_records, 7u);

  std::ostringstream log;
  RunOptions cached;
  cached.log = &log;
  run_experiment("exp1-ds2", c, cached);
  EXPECT_EQ(read_run_manifest(c.work_dir).size(), n_records);
  EXPECT_NE(log.str().find("up to date"), std::string::npos);
  EXPECT_FALSE(run_command("crossval", c));

  RunOptions force;
  force.force = true;
  EXPECT_TRUE(run_command("train", c, force));
  run_experiment("exp1-ds2", c, force);
  EXPECT_EQ(slurp(dir / "report" / "folds.csv"), folds);
  EXPECT_EQ(slurp(dir / "model.pbml"), model);

  const auto records = read_run_manifest(c.work_dir);
  std::map<std::string, std::vector<const StageRecord*>> by_stage;
  for (const auto& r : records) by_stage[r.stage].push_back(&r);
  for (const auto& [stage, recs] : by_stage) {
    EXPECT_EQ(recs.front()->outputs, recs.back()->outputs) << stage;
    EXPECT_EQ(recs.front()->stage_key, recs.back()->stage_key) << stage;
  }

  c.k = 6;
  EXPECT_FALSE(run_command("features", c));
  EXPECT_TRUE(run_command("vocab", c));
}

TEST(Pipeline, TouchedOutputTriggersRecompute) {
  oracle::TempDir root("pipe_touch");
  auto c = fixture_config(root.path());
  write_fixture_slide(c.ds2_root / "slide_00", 5);
  run_command("extract-regions", c);
  run_command("tile", c);
  std::ofstream(dataset_dir(c, "ds2") / "patches" / "sets.csv", std::ios::app) << "junk\n";
  EXPECT_TRUE(run_command("tile", c));
  EXPECT_FALSE(run_command("tile", c));
}

TEST(Pipeline, MergedTableStacksBothDatasets) {
  oracle::TempDir root("pipe_merged");
  auto c = fixture_config(root.path());
  write_fixture_slide(c.ds2_root / "slide_00", 6);
  write_synthetic_microscopy(c.ds1_root, 1, 8);
  const auto out = run_experiment("exp2-merged", c);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].first, "merged");
  std::size_t n1 = 0, n2 = 0;
  for (const auto& r : read_set_manifest(dataset_dir(c, "ds1") / "patches" / "sets.csv"))
    n1 += r.n_patches;
  for (const auto& r : read_set_manifest(dataset_dir(c, "ds2") / "patches" / "sets.csv"))
    n2 += r.n_patches;
  EXPECT_EQ(n1, 4u * 48u);
  EXPECT_EQ(n2, 20u);
  const auto table = read_table_csv(dataset_dir(c, "merged") / "encoded.csv");
  EXPECT_EQ(table.size(), n1 + n2);
  EXPECT_EQ(table.rows.cols, 8u);
  EXPECT_TRUE(fs::exists(dataset_dir(c, "merged") / "report" / "summary.csv"));
}

TEST(Cli, RunsStagesAndReportsErrors) {
  oracle::TempDir root("pipe_cli");
  auto c = fixture_config(root.path());
  write_fixture_slide(c.ds2_root / "slide_00", 9);
  const fs::path cfg = root.path() / "run.cfg";
  atomic_write_text(cfg, c.to_text());
  EXPECT_EQ(run_cli("run-experiment exp1-ds2 --config " + cfg.string() + " --jobs 2"), 0);
  EXPECT_TRUE(fs::exists(dataset_dir(c, "ds2") / "report" / "summary.csv"));
  EXPECT_EQ(run_cli("crossval --config " + cfg.string()), 0);
  EXPECT_EQ(run_cli("crossval --config " + cfg.string() + " --force --seed 11"), 0);

  const fs::path bad = root.path() / "bad.cfg";
  atomic_write_text(bad, "flavour = strong\n");
  EXPECT_EQ(run_cli("tile --config " + bad.string()), 1);
  EXPECT_EQ(run_cli("tile --config " + (root.path() / "none.cfg").string()), 1);
  EXPECT_NE(run_cli("frobnicate"), 0);
}
