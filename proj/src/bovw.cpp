#include "patchbag/bovw.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "patchbag/binary_io.hpp"
#include "patchbag/kernels.hpp"

namespace patchbag {
namespace {

constexpr char kCodebookMagic[4] = {'P', 'B', 'C', 'B'};

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = static_cast<double>(a[j]) - b[j];
    s += diff * diff;
  }
  return s;
}

bool row_less(const FloatMatrix& m, std::size_t a, std::size_t b) {
  const auto ra = m.row(a);
  const auto rb = m.row(b);
  for (std::size_t j = 0; j < m.cols; ++j) {
    if (ra[j] < rb[j]) return true;
    if (rb[j] < ra[j]) return false;
  }
  return a < b;
}

FloatMatrix gather_rows(const FloatMatrix& m, std::span<const std::size_t> rows) {
  FloatMatrix out(rows.size(), m.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(m.row(rows[i]).data(), m.cols, out.row(i).data());
  }
  return out;
}

FloatMatrix canonical_order(const FloatMatrix& m) {
  std::vector<std::size_t> order(m.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return row_less(m, a, b); });
  return gather_rows(m, order);
}

}  // namespace

double descriptor_strength(std::span<const float> v) {
  if (v.empty()) return 0.0;
  // Welford's update; tests check it against a two-pass computation.
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (float x : v) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
  return m2 / static_cast<double>(n);
}

std::size_t trim_count(std::size_t n, double fraction) {
  const double x = fraction * static_cast<double>(n);
  const double nearest = std::round(x);
  std::size_t keep = std::abs(x - nearest) <= 1e-9 * std::max(1.0, x)
                         ? static_cast<std::size_t>(nearest)
                         : static_cast<std::size_t>(std::ceil(x));
  return std::clamp<std::size_t>(keep, n == 0 ? 0 : 1, n);
}

std::vector<std::size_t> trim_strongest(const FloatMatrix& descriptors, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::ConfigError, "trim fraction must be in (0, 1]");
  }
  if (descriptors.rows == 0) {
    throw Error(ErrorCode::EmptyInput, "cannot trim an empty descriptor set");
  }
  std::vector<double> strength(descriptors.rows);
  for (std::size_t i = 0; i < descriptors.rows; ++i) {
    strength[i] = descriptor_strength(descriptors.row(i));
  }
  std::vector<std::size_t> order(descriptors.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return strength[a] > strength[b]; });
  order.resize(trim_count(descriptors.rows, fraction));
  std::sort(order.begin(), order.end());
  return order;
}

KMeansResult kmeans(const FloatMatrix& points, const KMeansOptions& options) {
  const std::size_t n = points.rows;
  const std::size_t k = options.k;
  const std::size_t d = points.cols;
  if (k == 0) throw Error(ErrorCode::ConfigError, "k must be positive");
  if (n < k) {
    throw Error(ErrorCode::InsufficientData,
                "k-means needs at least k=" + std::to_string(k) + " descriptors, got " +
                    std::to_string(n) + "; use the global vocabulary scope or a smaller k");
  }
  for (float v : points.data) {
    if (!std::isfinite(v)) throw Error(ErrorCode::DataError, "k-means input holds a non-finite value");
  }

  Rng rng(options.seed);
  KMeansResult result;
  result.centroids = FloatMatrix(k, d);

  // k-means++ seeding.
  std::vector<double> nearest(n);
  std::size_t chosen = static_cast<std::size_t>(rng.below(n));
  std::copy_n(points.row(chosen).data(), d, result.centroids.row(0).data());
  for (std::size_t i = 0; i < n; ++i) {
    nearest[i] = squared_distance(points.row(i), result.centroids.row(0));
  }
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : nearest) total += v;
    if (!(total > 0.0)) {
      throw Error(ErrorCode::InsufficientData,
                  "k-means found only " + std::to_string(c) + " distinct descriptors, k=" +
                      std::to_string(k));
    }
    const double target = rng.uniform() * total;
    double cumulative = 0.0;
    chosen = n;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (nearest[i] <= 0.0) continue;
      last_positive = i;
      cumulative += nearest[i];
      if (cumulative > target) {
        chosen = i;
        break;
      }
    }
    if (chosen == n) chosen = last_positive;
    std::copy_n(points.row(chosen).data(), d, result.centroids.row(c).data());
    const auto centre = result.centroids.row(c);
    const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < count; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      nearest[idx] = std::min(nearest[idx], squared_distance(points.row(idx), centre));
    }
  }

  // Lloyd iterations. Reductions run serially in point order so results do
  // not depend on the thread count.
  std::vector<std::uint32_t> labels(n, 0);
  std::vector<std::uint32_t> previous;
  std::vector<double> dist2(n);
  std::vector<double> sums(k * d);
  std::vector<std::size_t> counts(k);
  for (int iter = 0; iter < std::max(1, options.max_iter); ++iter) {
    kernels::assign_nearest(points, result.centroids, labels, dist2);
    double sse = 0.0;
    for (double v : dist2) sse += v;
    result.sse_history.push_back(sse);
    result.iterations = iter + 1;

    if (iter > 0) {
      const double prev = result.sse_history[result.sse_history.size() - 2];
      if (labels == previous || prev - sse <= options.tol * prev) break;
    }
    if (iter + 1 >= options.max_iter) break;
    previous = labels;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = points.row(i);
      double* acc = sums.data() + labels[i] * d;
      for (std::size_t j = 0; j < d; ++j) acc[j] += row[j];
      ++counts[labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < d; ++j) {
          result.centroids(c, j) =
              static_cast<float>(sums[c * d + j] / static_cast<double>(counts[c]));
        }
        continue;
      }
      // Empty cluster: take the point farthest from its centroid.
      std::size_t far = 0;
      for (std::size_t i = 1; i < n; ++i) {
        if (dist2[i] > dist2[far]) far = i;
      }
      std::copy_n(points.row(far).data(), d, result.centroids.row(c).data());
      dist2[far] = -1.0;
    }
  }
  result.assignment = std::move(labels);
  result.sse = result.sse_history.back();
  return result;
}

std::string_view vocab_scope_name(VocabScope scope) {
  return scope == VocabScope::PerRegion ? "region" : "global";
}

VocabScope parse_vocab_scope(std::string_view text) {
  const std::string key = to_lower(text);
  if (key == "region" || key == "perregion" || key == "per-region") return VocabScope::PerRegion;
  if (key == "global") return VocabScope::Global;
  throw Error(ErrorCode::ConfigError, "unknown vocabulary scope '" + std::string(text) + "'");
}

std::vector<float> encode_patch(std::span<const float> descriptors, std::uint32_t R,
                                const Codebook& codebook, bool raw_counts) {
  if (R == 0) throw Error(ErrorCode::ZeroDescriptors, "patch has no descriptors");
  const std::size_t d = codebook.d();
  if (descriptors.size() != static_cast<std::size_t>(R) * d) {
    throw Error(ErrorCode::ShapeError, "descriptor block does not match codebook width " +
                                           std::to_string(d));
  }
  FloatMatrix block(R, d);
  std::copy(descriptors.begin(), descriptors.end(), block.data.begin());
  std::vector<std::uint32_t> labels(R);
  std::vector<double> dist(R);
  kernels::serial::assign_nearest(block, codebook.centroids, labels, dist);
  std::vector<float> hist(codebook.k(), 0.0f);
  for (std::uint32_t l : labels) hist[l] += 1.0f;
  if (!raw_counts) {
    for (float& h : hist) h /= static_cast<float>(R);
  }
  return hist;
}

FloatMatrix encode_set(const DescriptorSet& set, const Codebook& codebook, bool raw_counts) {
  if (set.R == 0) throw Error(ErrorCode::ZeroDescriptors, set.region_id + ": R = 0");
  if (set.d != codebook.d()) {
    throw Error(ErrorCode::ShapeError, set.region_id + ": descriptor width " +
                                           std::to_string(set.d) + " vs codebook width " +
                                           std::to_string(codebook.d()));
  }
  const std::size_t n = set.n_patches();
  const FloatMatrix stacked = set.stacked();
  std::vector<std::uint32_t> labels(stacked.rows);
  std::vector<double> dist(stacked.rows);
  kernels::assign_nearest(stacked, codebook.centroids, labels, dist);
  FloatMatrix out(n, codebook.k());
  for (std::size_t p = 0; p < n; ++p) {
    auto row = out.row(p);
    for (std::size_t r = 0; r < set.R; ++r) row[labels[p * set.R + r]] += 1.0f;
    if (!raw_counts) {
      for (float& h : row) h /= static_cast<float>(set.R);
    }
  }
  return out;
}

void EncodedTable::append(const EncodedTable& other) {
  if (rows.rows == 0 && rows.cols == 0) rows.cols = other.rows.cols;
  if (other.rows.cols != rows.cols && other.rows.rows > 0) {
    throw Error(ErrorCode::ShapeError, "cannot concatenate tables of width " +
                                           std::to_string(rows.cols) + " and " +
                                           std::to_string(other.rows.cols));
  }
  rows.data.insert(rows.data.end(), other.rows.data.begin(), other.rows.data.end());
  rows.rows += other.rows.rows;
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  provenance.insert(provenance.end(), other.provenance.begin(), other.provenance.end());
}

const Codebook& Vocabulary::for_region(std::string_view region_id) const {
  if (scope == VocabScope::Global) {
    if (codebooks.empty()) throw Error(ErrorCode::MissingArtifact, "vocabulary is empty");
    return codebooks.front();
  }
  for (const Codebook& cb : codebooks) {
    if (cb.key == region_id) return cb;
  }
  throw Error(ErrorCode::MissingArtifact,
              "no codebook for region '" + std::string(region_id) + "'");
}

std::uint64_t codebook_seed(std::uint64_t seed, std::size_t index) {
  return seed + static_cast<std::uint64_t>(index) * 0x9e3779b97f4a7c15ULL;
}

FloatMatrix trimmed_pool(const DescriptorSet& set, double fraction) {
  const FloatMatrix sorted = canonical_order(set.stacked());
  return gather_rows(sorted, trim_strongest(sorted, fraction));
}

Vocabulary fit_vocabulary(std::span<const DescriptorSet> sets, const VocabularyOptions& options) {
  if (sets.empty()) throw Error(ErrorCode::EmptyInput, "no descriptor sets to build a vocabulary from");
  Vocabulary vocab;
  vocab.scope = options.scope;
  KMeansOptions km;
  km.k = options.k;
  km.max_iter = options.max_iter;
  km.tol = options.tol;

  const auto make = [&](std::string key, const FloatMatrix& pool, std::uint64_t seed) {
    km.seed = seed;
    Codebook cb;
    cb.key = std::move(key);
    cb.scope = options.scope;
    cb.seed = seed;
    cb.trim_fraction = static_cast<float>(options.trim_fraction);
    cb.source_descriptor_count = pool.rows;
    cb.centroids = kmeans(pool, km).centroids;
    return cb;
  };

  if (options.scope == VocabScope::PerRegion) {
    for (std::size_t i = 0; i < sets.size(); ++i) {
      if (sets[i].n_patches() == 0) {
        throw Error(ErrorCode::InsufficientData,
                    "set '" + sets[i].region_id + "' has no patches to build a codebook from");
      }
      const FloatMatrix pool = trimmed_pool(sets[i], options.trim_fraction);
      if (pool.rows < options.k) {
        throw Error(ErrorCode::InsufficientData,
                    "set '" + sets[i].region_id + "' has " + std::to_string(pool.rows) +
                        " descriptors after trimming, fewer than k=" + std::to_string(options.k) +
                        "; use the global vocabulary scope or a smaller k");
      }
      vocab.codebooks.push_back(make(sets[i].region_id, pool, codebook_seed(options.seed, i)));
    }
    return vocab;
  }

  FloatMatrix pool;
  pool.cols = sets.front().d;
  for (const DescriptorSet& set : sets) {
    if (set.d != pool.cols) {
      throw Error(ErrorCode::ShapeError, "sets disagree on descriptor width");
    }
    if (set.n_patches() == 0) continue;
    const FloatMatrix part = trimmed_pool(set, options.trim_fraction);
    pool.data.insert(pool.data.end(), part.data.begin(), part.data.end());
    pool.rows += part.rows;
  }
  vocab.codebooks.push_back(make("global", canonical_order(pool), codebook_seed(options.seed, 0)));
  return vocab;
}

EncodedTable encode_sets(std::span<const DescriptorSet> sets, const Vocabulary& vocabulary,
                         bool raw_counts) {
  EncodedTable table;
  for (const DescriptorSet& set : sets) {
    const Codebook& cb = vocabulary.for_region(set.region_id);
    EncodedTable part;
    part.rows = encode_set(set, cb, raw_counts);
    part.labels.assign(set.n_patches(), set.label);
    for (std::size_t i = 0; i < set.n_patches(); ++i) {
      part.provenance.push_back({set.region_id, static_cast<std::uint32_t>(i)});
    }
    table.append(part);
  }
  if (table.rows.cols == 0 && !vocabulary.codebooks.empty()) {
    table.rows.cols = vocabulary.codebooks.front().k();
  }
  return table;
}

EncodedTable build_and_encode(std::span<const DescriptorSet> sets,
                              const VocabularyOptions& options) {
  return encode_sets(sets, fit_vocabulary(sets, options), options.raw_counts);
}

std::vector<std::uint8_t> encode_codebook(const Codebook& codebook) {
  ByteWriter w;
  w.raw(std::string_view(kCodebookMagic, 4));
  w.u16(kCodebookFileVersion);
  w.u8(static_cast<std::uint8_t>(codebook.scope));
  w.u32(static_cast<std::uint32_t>(codebook.k()));
  w.u32(static_cast<std::uint32_t>(codebook.d()));
  w.u64(codebook.seed);
  w.f32(codebook.trim_fraction);
  for (float v : codebook.centroids.data) w.f32(v);
  w.seal_crc();
  return w.take();
}

Codebook decode_codebook(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kCodebookMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, "not a PBCB codebook file");
  }
  ByteReader r(bytes);
  r.raw(4);
  const std::uint16_t version = r.u16();
  if (version != kCodebookFileVersion) {
    throw Error(ErrorCode::VersionMismatch,
                "codebook version " + std::to_string(version) + " is not supported");
  }
  Codebook cb;
  const std::uint8_t scope = r.u8();
  if (scope > 1) throw Error(ErrorCode::DataError, "codebook has an unknown scope code");
  cb.scope = static_cast<VocabScope>(scope);
  const std::uint32_t k = r.u32();
  const std::uint32_t d = r.u32();
  cb.seed = r.u64();
  cb.trim_fraction = r.f32();
  const std::uint64_t expected = r.position() + static_cast<std::uint64_t>(k) * d * 4 + 4;
  if (bytes.size() != expected) {
    throw Error(bytes.size() < expected ? ErrorCode::Truncated : ErrorCode::InconsistentShape,
                "codebook body does not match k x d");
  }
  checked_payload(bytes);
  cb.centroids = FloatMatrix(k, d);
  for (float& v : cb.centroids.data) {
    v = r.f32();
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "codebook holds a non-finite value");
  }
  cb.source_descriptor_count = 0;
  return cb;
}

void write_codebook(const Codebook& codebook, const std::filesystem::path& path) {
  atomic_write_file(path, encode_codebook(codebook));
}

Codebook read_codebook(const std::filesystem::path& path) {
  Codebook cb = decode_codebook(read_file_bytes(path));
  cb.key = path.stem().string();
  return cb;
}

std::string format_table_csv(const EncodedTable& table) {
  std::string out = "region_id,seq_index,label";
  for (std::size_t j = 0; j < table.rows.cols; ++j) out += ",h" + std::to_string(j);
  out += "\n";
  char buf[32];
  for (std::size_t i = 0; i < table.size(); ++i) {
    out += table.provenance[i].region_id;
    out += "," + std::to_string(table.provenance[i].seq_index);
    out += "," + std::to_string(label_index(table.labels[i]));
    for (float v : table.rows.row(i)) {
      std::snprintf(buf, sizeof(buf), ",%.9g", static_cast<double>(v));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

void write_table_csv(const EncodedTable& table, const std::filesystem::path& path) {
  atomic_write_text(path, format_table_csv(table));
}

EncodedTable read_table_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("region_id,seq_index,label", 0) != 0) {
    throw Error(ErrorCode::ParseError, path.string() + ": not an encoded table");
  }
  const std::size_t k = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 2;
  EncodedTable table;
  table.rows.cols = k;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    EncodedTable::Source src;
    src.region_id = field;
    std::getline(ss, field, ',');
    src.seq_index = static_cast<std::uint32_t>(std::stoul(field));
    std::getline(ss, field, ',');
    const auto label = parse_label(field);
    if (!label) throw Error(ErrorCode::InvalidLabel, path.string() + ": bad label " + field);
    for (std::size_t j = 0; j < k; ++j) {
      if (!std::getline(ss, field, ',')) {
        throw Error(ErrorCode::ParseError, path.string() + ": short row");
      }
      table.rows.data.push_back(std::strtof(field.c_str(), nullptr));
    }
    table.rows.rows += 1;
    table.labels.push_back(*label);
    table.provenance.push_back(src);
  }
  return table;
}

}  // namespace patchbag
