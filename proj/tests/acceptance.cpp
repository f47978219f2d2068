// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "patchbag/binary_io.hpp"
#include "patchbag/eval.hpp"
#include "patchbag/features.hpp"
#include "patchbag/pipeline.hpp"
#include "patchbag/slide.hpp"
#include "patchbag/synthetic.hpp"
#include "patchbag/tiler.hpp"

using namespace patchbag;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

struct Criterion {
  std::string name;
  double time_limit_s;  // 0 = none
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

template <class F>
bool throws_code(F&& f, ErrorCode code) {
  try {
    f();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

Outcome micro_identity() {
  Outcome o;
  std::mt19937 g(1);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    Confusion c{};
    for (auto& row : c)
      for (auto& v : row) v = g() % 200;
    c[g() % 4][g() % 4] += 1;
    const Prf p = micro_prf(c);
    const double hm = 2 * p.precision * p.recall / (p.precision + p.recall);
    worst = std::max({worst, std::abs(p.f1 - hm), std::abs(p.precision - accuracy(c)),
                      std::abs(p.recall - accuracy(c))});
  }
  o.require(worst <= 1e-12, "micro identity violated by " + fmt("%g", worst));
  o.detail = o.pass ? "1000 matrices, max deviation " + fmt("%g", worst) : o.detail;
  return o;
}

Outcome hand_till_cases() {
  Outcome o;
  std::mt19937 g(2);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 4 + g() % 12;
    std::vector<int> labels = {0, 1, 2, 3};
    while (labels.size() < n) labels.push_back(static_cast<int>(g() % 4));
    std::shuffle(labels.begin(), labels.end(), g);
    std::vector<double> s(n * 4);
    const bool ties = t % 3 == 0;
    for (double& v : s) v = ties ? static_cast<double>(g() % 3) : std::uniform_real_distribution<>(0, 1)(g);
    worst = std::max(worst, std::abs(hand_till_auc(s, 4, labels) - oracle::hand_till(s, 4, labels)));
  }
  o.require(worst <= 1e-12, "multiclass deviation " + fmt("%g", worst));
  std::vector<int> labels;
  std::vector<double> s, pos, neg;
  for (int i = 0; i < 15; ++i) {
    const int y = i < 2 ? i : static_cast<int>(g() % 2);
    const double p = std::uniform_real_distribution<>(0, 1)(g);
    labels.push_back(y);
    s.push_back(1 - p);
    s.push_back(p);
    (y ? pos : neg).push_back(p);
  }
  const double bin = std::abs(hand_till_auc(s, 2, labels) - oracle::pair_count_auc(pos, neg));
  o.require(bin <= 1e-12, "binary case deviates from AUC by " + fmt("%g", bin));
  if (o.pass) o.detail = "200 cases, max deviation " + fmt("%g", worst);
  return o;
}

Outcome kmeans_runs() {
  Outcome o;
  for (unsigned r = 0; r < 100 && o.pass; ++r) {
    std::mt19937 g(r);
    const std::size_t n = 20 + g() % 200;
    const std::size_t d = 2 + g() % 16;
    const auto pts = oracle::random_matrix(n, d, 1000 + r);
    KMeansOptions opt;
    opt.k = 2 + g() % 15;
    opt.seed = r;
    const auto a = kmeans(pts, opt);
    for (std::size_t i = 1; i < a.sse_history.size(); ++i)
      o.require(a.sse_history[i] <= a.sse_history[i - 1], "SSE increased in run " + std::to_string(r));
    const auto b = kmeans(pts, opt);
    o.require(a.centroids == b.centroids && a.assignment == b.assignment,
              "run " + std::to_string(r) + " not reproducible");
    if (r % 10 == 0) {
      const auto small = oracle::random_matrix(opt.k, d, 2000 + r);
      KMeansOptions all = opt;
      const auto z = kmeans(small, all);
      o.require(z.sse == 0.0, "k = N gave SSE " + fmt("%g", z.sse));
    }
  }
  if (o.pass) o.detail = "100 runs";
  return o;
}

Outcome trim_law() {
  Outcome o;
  for (std::size_t n = 1; n <= 1000; ++n) {
    o.require(trim_count(n, 0.8) == (4 * n + 4) / 5, "trim count wrong at N=" + std::to_string(n));
  }
  for (unsigned t = 0; t < 50; ++t) {
    auto m = oracle::random_matrix(10 + t * 7, 6, 300 + t);
    for (std::size_t i = 3; i < m.rows; i += 5)
      for (std::size_t j = 0; j < 6; ++j) m(i, j) = m(1, j);
    std::vector<double> strength(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) strength[i] = oracle::two_pass_variance(m.row(i));
    std::vector<std::size_t> idx(m.rows);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return strength[a] > strength[b]; });
    idx.resize((4 * m.rows + 4) / 5);
    std::sort(idx.begin(), idx.end());
    o.require(trim_strongest(m, 0.8) == idx, "trim selection differs from sort oracle");
  }
  if (o.pass) o.detail = "N = 1..1000, 50 tie-heavy selections";
  return o;
}

Outcome encoding() {
  Outcome o;
  for (unsigned t = 0; t < 100; ++t) {
    Codebook cb;
    cb.centroids = oracle::random_matrix(5 + t % 20, 8, 400 + t);
    const std::uint32_t R = 1 + t % 24;
    auto desc = oracle::random_matrix(R, 8, 500 + t);
    const auto h = encode_patch(desc.data, R, cb);
    std::vector<float> want(cb.k(), 0.0f);
    for (std::size_t r = 0; r < R; ++r) want[oracle::nearest(desc.row(r), cb.centroids)] += 1.0f / R;
    double sum = 0.0;
    for (std::size_t b = 0; b < cb.k(); ++b) {
      sum += h[b];
      o.require(std::abs(h[b] - want[b]) <= 1e-6, "histogram differs from brute force");
      if (R == 1) o.require(h[b] == 0.0f || h[b] == 1.0f, "R = 1 is not one-hot");
    }
    o.require(std::abs(sum - 1.0) <= 1e-6, "histogram not L1-normalized");
    std::vector<std::size_t> perm(R);
    std::iota(perm.begin(), perm.end(), 0);
    Rng(t).shuffle(perm);
    FloatMatrix shuffled(R, 8);
    for (std::size_t r = 0; r < R; ++r) std::copy_n(desc.row(perm[r]).begin(), 8, shuffled.row(r).begin());
    o.require(encode_patch(shuffled.data, R, cb) == h, "descriptor order changed the histogram");
  }
  // Scan order only reorders rows.
  OrientedRegion region;
  region.region_id = "scan";
  region.image = texture_image(ClassLabel::Invasive, 1024, 768, 3);
  region.mask.width = 1024;
  region.mask.height = 768;
  region.mask.bitmap.assign(1024 * 768, 1);
  const auto rows_for = [&](ScanOrder order) {
    const std::vector sets = {extract_baseline_set(tile_region(region, order))};
    VocabularyOptions v;
    v.k = 20;
    const auto t = build_and_encode(sets, v);
    std::vector<std::vector<float>> rows;
    for (std::size_t i = 0; i < t.size(); ++i) rows.emplace_back(t.rows.row(i).begin(), t.rows.row(i).end());
    std::sort(rows.begin(), rows.end());
    return rows;
  };
  o.require(rows_for(ScanOrder::Raster) == rows_for(ScanOrder::Serpentine),
            "scan order changed the encoded multiset");
  if (o.pass) o.detail = "100 instances plus scan-order check";
  return o;
}

Outcome table_shapes() {
  Outcome o;
  std::vector<DescriptorSet> sets;
  const std::size_t sizes[] = {5, 7, 9};
  for (int i = 0; i < 3; ++i) {
    DescriptorSet s;
    s.region_id = "set" + std::to_string(i);
    s.label = static_cast<ClassLabel>(i + 1);
    s.R = 32;
    s.d = 16;
    s.values = oracle::random_matrix(sizes[i], 32 * 16, 600 + i).data;
    sets.push_back(s);
  }
  for (auto scope : {VocabScope::PerRegion, VocabScope::Global}) {
    VocabularyOptions v;
    v.scope = scope;
    v.k = 100;
    const auto t = build_and_encode(sets, v);
    o.require(t.rows.rows == 21 && t.rows.cols == 100 && t.labels.size() == 21,
              "table is " + std::to_string(t.rows.rows) + "x" + std::to_string(t.rows.cols));
  }
  if (o.pass) o.detail = "21 x 100 in both scopes";
  return o;
}

Outcome geometry() {
  Outcome o;
  Rng rng(12);
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    PolygonAnnotation a;
    a.region_id = "g";
    const double semi = 200 + 300 * rng.uniform();
    a.vertices = ellipse_polygon(800, 800, semi, 0.3 * semi + 30, 3.14159 * rng.uniform(), 64);
    const RegionMask m = rasterize_mask(a, 0);
    const RgbImage img = oracle::random_image(m.width, m.height, 50 + t);
    const OrientedRegion r = orient_region(img, m);
    const double ang = std::abs(major_axis(r.mask).angle_deg);
    worst = std::max(worst, 90.0 - ang);
    o.require(ang >= 89.0 && ang <= 91.0, "axis at " + fmt("%.3f", ang) + " deg after orientation");
    o.require(r.bbox.width % 256 == 0 && r.bbox.height % 256 == 0, "box not a multiple of 256");
    OrientedRegion full = r;
    full.mask.bitmap.assign(full.mask.bitmap.size(), 1);
    const PatchSet set = tile_region(full);
    RgbImage rebuilt(r.image.width, r.image.height, 0);
    for (const Patch& p : set.patches)
      for (int y = 0; y < 256; ++y)
        std::copy_n(p.pixels.at(0, y), 256 * 3, rebuilt.at(p.col * 256, p.row * 256 + y));
    o.require(rebuilt == r.image, "patches do not reconstruct the region");
  }
  const PatchSet micro =
      tile_microscopy(oracle::random_image(kMicroscopyWidth, kMicroscopyHeight, 9), "m", ClassLabel::Benign);
  o.require(micro.n_patches() == 48, "microscopy image gave " + std::to_string(micro.n_patches()));
  if (o.pass) o.detail = "max axis deviation " + fmt("%.3f", worst) + " deg";
  return o;
}

Outcome gradient_check() {
  Outcome o;
  MlpConfig c;
  c.hidden = 8;
  c.seed = 4;
  MlpModel m = init_mlp(10, c);
  for (double& b : m.b1) b = 0.05;
  const auto x = oracle::random_matrix(16, 10, 7);
  std::vector<ClassLabel> y;
  for (int i = 0; i < 16; ++i) y.push_back(static_cast<ClassLabel>(i % 4));
  const MlpGradient g = objective_gradient(m, x, y);
  std::vector<double*> p;
  std::vector<double> an;
  for (auto [v, gv] : {std::pair{&m.w1, &g.w1}, {&m.b1, &g.b1}, {&m.w2, &g.w2}, {&m.b2, &g.b2}})
    for (std::size_t i = 0; i < v->size(); ++i) {
      p.push_back(&(*v)[i]);
      an.push_back((*gv)[i]);
    }
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = *p[i];
    *p[i] = keep + 1e-6;
    const double up = regularized_objective(m, x, y);
    *p[i] = keep - 1e-6;
    const double down = regularized_objective(m, x, y);
    *p[i] = keep;
    const double num = (up - down) / 2e-6;
    worst = std::max(worst, std::abs(num - an[i]) / std::max(1.0, std::abs(num) + std::abs(an[i])));
  }
  o.require(worst <= 1e-5, "relative gradient error " + fmt("%g", worst));
  if (o.pass) o.detail = "max relative error " + fmt("%.2e", worst);
  return o;
}

std::vector<DescriptorSet> synthetic_sets(int slides, std::uint64_t seed, std::size_t& regions) {
  std::vector<DescriptorSet> sets;
  regions = 0;
  for (int i = 0; i < slides; ++i) {
    SyntheticSlideOptions so;
    so.seed = seed;
    const std::string id = "slide_" + std::to_string(i);
    SyntheticSlide s = make_synthetic_slide(id, so);
    const MemorySlide slide(std::move(s.level0));
    RegionExtraction ex = extract_regions(slide, s.annotations, 0);
    NormalSamplingOptions ns;
    ns.seed = derive_seed(seed, id);
    NormalSampling normals = sample_normal_regions(slide, s.annotations, ns, id);
    for (auto& r : normals.regions) ex.regions.push_back(std::move(r));
    for (const OrientedRegion& r : ex.regions) {
      ++regions;
      const PatchSet ps = tile_region(r);
      if (ps.n_patches() > 0) sets.push_back(extract_baseline_set(ps));
    }
  }
  return sets;
}

Outcome end_to_end() {
  Outcome o;
  std::size_t regions = 0;
  const auto sets = synthetic_sets(10, 2024, regions);
  std::size_t patches = 0;
  for (const auto& s : sets) patches += s.n_patches();
  o.require(regions == 40, std::to_string(regions) + " regions instead of 40");

  VocabularyOptions v;
  v.scope = VocabScope::Global;
  v.k = 100;
  v.seed = 1;
  CrossValOptions cv;
  cv.folds = 5;
  cv.seed = 2;
  cv.mlp.hidden = 100;
  cv.mlp.lambda = 0.01;
  cv.mlp.learning_rate = 0.1;
  cv.mlp.epochs = 500;
  cv.mlp.seed = 3;
  const MetricsReport r = cross_validate(sets, v, cv);
  const double acc = r.metric("accuracy").mean;
  const double auc = r.metric("auc").mean;
  o.require(acc >= 0.95, "accuracy " + fmt("%.4f", acc));
  o.require(auc >= 0.98, "auc " + fmt("%.4f", auc));

  // Control: labels permuted across patches carry no signal.
  std::vector<ClassLabel> labels;
  for (const auto& s : sets) labels.insert(labels.end(), s.n_patches(), s.label);
  Rng(99).shuffle(labels);
  std::vector<DescriptorSet> shuffled;
  std::size_t k = 0;
  for (const auto& s : sets)
    for (std::size_t p = 0; p < s.n_patches(); ++p) {
      const std::vector<std::size_t> one = {p};
      DescriptorSet single = s.subset(one);
      char id[32];
      std::snprintf(id, sizeof id, "#%05zu", p);
      single.region_id = s.region_id + id;
      single.label = labels[k++];
      shuffled.push_back(std::move(single));
    }
  const double control = cross_validate(shuffled, v, cv).metric("auc").mean;
  o.require(control >= 0.45 && control <= 0.55, "shuffled-label auc " + fmt("%.4f", control));
  o.detail = (o.pass ? "" : o.detail + "; ") + std::to_string(regions) + " regions, " +
             std::to_string(patches) + " patches, accuracy " + fmt("%.4f", acc) + ", auc " +
             fmt("%.4f", auc) + ", shuffled auc " + fmt("%.4f", control);
  return o;
}

Outcome serialization() {
  Outcome o;
  DescriptorSet ds;
  ds.region_id = "slide_1_r2";
  ds.label = ClassLabel::InSitu;
  ds.scale = 1;
  ds.extractor_id = "x";
  ds.R = 3;
  ds.d = 5;
  ds.values = oracle::random_matrix(4, 15, 70, -2, 2).data;
  const auto fv = encode_feature_file(ds);
  o.require(decode_feature_file(fv) == ds, "feature file round trip");

  Codebook cb;
  cb.key = "global";
  cb.scope = VocabScope::Global;
  cb.seed = 77;
  cb.centroids = oracle::random_matrix(6, 5, 71);
  const auto cbb = encode_codebook(cb);
  const Codebook cb2 = decode_codebook(cbb);
  o.require(cb2.centroids == cb.centroids && cb2.seed == cb.seed && cb2.scope == cb.scope,
            "codebook round trip");

  MlpConfig mc;
  mc.hidden = 6;
  mc.seed = 8;
  const MlpModel m = init_mlp(5, mc);
  MlpModel rounded = decode_model(encode_model(m));
  const auto mb = encode_model(rounded);
  o.require(decode_model(mb) == rounded && encode_model(decode_model(mb)) == mb, "model round trip");

  for (const auto* bytes : {&fv, &cbb, &mb}) {
    auto bad = *bytes;
    bad[bad.size() / 2] ^= 0x04;
    const bool rejected = throws_code([&] { decode_feature_file(bad); }, ErrorCode::CrcMismatch) ||
                          throws_code([&] { decode_codebook(bad); }, ErrorCode::CrcMismatch) ||
                          throws_code([&] { decode_model(bad); }, ErrorCode::CrcMismatch);
    o.require(rejected, "corrupted file accepted");
  }
  o.require(throws_code([&] { decode_feature_file(std::vector<std::uint8_t>(fv.begin(), fv.end() - 5)); },
                        ErrorCode::Truncated),
            "truncated feature file accepted");

  EncodedTable t;
  t.rows = oracle::random_matrix(3, 4, 72);
  t.labels = {ClassLabel::Normal, ClassLabel::Benign, ClassLabel::Invasive};
  t.provenance = {{"a", 0}, {"a", 1}, {"b", 0}};
  oracle::TempDir dir("accept");
  write_table_csv(t, dir.path() / "t.csv");
  const auto back = read_table_csv(dir.path() / "t.csv");
  o.require(back.rows == t.rows && back.labels == t.labels, "table CSV round trip");
  if (o.pass) o.detail = "PBFV, PBCB, PBML, CSV";
  return o;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"micro-f1-identity", 1.0, micro_identity},
      {"hand-till-auc", 5.0, hand_till_cases},
      {"kmeans-properties", 10.0, kmeans_runs},
      {"trim-law", 0.0, trim_law},
      {"bovw-encoding", 0.0, encoding},
      {"table-shapes", 0.0, table_shapes},
      {"orientation-and-tiling", 0.0, geometry},
      {"mlp-gradient-check", 1.0, gradient_check},
      {"end-to-end-synthetic", 120.0, end_to_end},
      {"serialization", 0.0, serialization},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit_s > 0 && secs > c.time_limit_s) {
      o.pass = false;
      o.detail += " (took " + fmt("%.2f", secs) + " s, limit " + fmt("%.0f", c.time_limit_s) + " s)";
    }
    std::printf("%s %-24s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
