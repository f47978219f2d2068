#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "patchbag/common.hpp"
#include "patchbag/features.hpp"

namespace patchbag {

/// Population variance of a descriptor's own components.
double descriptor_strength(std::span<const float> descriptor);

/// ceil(fraction * n), immune to the representation error of `fraction`
/// (0.8 * 10 is 8, not 9).
std::size_t trim_count(std::size_t n, double fraction);

/// Indices of the ceil(fraction * N) strongest rows, ties to the lower
/// index, returned in ascending index order.
std::vector<std::size_t> trim_strongest(const FloatMatrix& descriptors, double fraction = 0.8);

struct KMeansOptions {
  std::size_t k = 100;
  int max_iter = 100;
  /// Stop when the relative SSE decrease falls below this.
  double tol = 1e-4;
  std::uint64_t seed = 0;
};

struct KMeansResult {
  FloatMatrix centroids;               // k x d
  std::vector<std::uint32_t> assignment;
  /// Within-cluster SSE after each assignment step.
  std::vector<double> sse_history;
  double sse = 0.0;
  int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are reseeded
/// with the point farthest from its assigned centroid.
KMeansResult kmeans(const FloatMatrix& points, const KMeansOptions& options);

enum class VocabScope : std::uint8_t { PerRegion = 0, Global = 1 };

std::string_view vocab_scope_name(VocabScope scope);
VocabScope parse_vocab_scope(std::string_view text);

struct Codebook {
  /// Region the vocabulary belongs to, or "global".
  std::string key;
  VocabScope scope = VocabScope::PerRegion;
  std::uint64_t seed = 0;
  float trim_fraction = 0.8f;
  FloatMatrix centroids;  // k x d
  std::uint64_t source_descriptor_count = 0;

  std::size_t k() const { return centroids.rows; }
  std::size_t d() const { return centroids.cols; }
};

/// Histogram of nearest-centroid assignments of the R descriptors in
/// `descriptors` (R x d, row-major), divided by R unless `raw_counts`.
std::vector<float> encode_patch(std::span<const float> descriptors, std::uint32_t R,
                                const Codebook& codebook, bool raw_counts = false);

/// One histogram row per patch, in seq_index order: n_patches x k.
FloatMatrix encode_set(const DescriptorSet& set, const Codebook& codebook,
                       bool raw_counts = false);

struct EncodedTable {
  FloatMatrix rows;  // n x k
  std::vector<ClassLabel> labels;
  struct Source {
    std::string region_id;
    std::uint32_t seq_index = 0;
  };
  std::vector<Source> provenance;

  std::size_t size() const { return rows.rows; }
  /// Row-wise concatenation of `other` below this table.
  void append(const EncodedTable& other);
};

struct VocabularyOptions {
  VocabScope scope = VocabScope::PerRegion;
  std::size_t k = 100;
  double trim_fraction = 0.8;
  std::uint64_t seed = 0;
  int max_iter = 100;
  double tol = 1e-4;
  bool raw_counts = false;
};

/// The codebooks fitted for a collection of sets: one per region, or a
/// single global one.
struct Vocabulary {
  VocabScope scope = VocabScope::PerRegion;
  std::vector<Codebook> codebooks;

  const Codebook& for_region(std::string_view region_id) const;
};

/// Seed for the i-th independently fitted codebook; index 0 keeps `seed`.
std::uint64_t codebook_seed(std::uint64_t seed, std::size_t index);

/// Training pool of a set: its descriptors in a canonical (lexicographic)
/// order, so the fitted codebook does not depend on patch or descriptor
/// order, then trimmed to the strongest `fraction`.
FloatMatrix trimmed_pool(const DescriptorSet& set, double fraction);

Vocabulary fit_vocabulary(std::span<const DescriptorSet> sets, const VocabularyOptions& options);

EncodedTable encode_sets(std::span<const DescriptorSet> sets, const Vocabulary& vocabulary,
                         bool raw_counts = false);

/// fit_vocabulary followed by encode_sets; per-set tables are concatenated
/// in input order.
EncodedTable build_and_encode(std::span<const DescriptorSet> sets,
                              const VocabularyOptions& options);

// Codebook file ("PBCB", version 1), little-endian:
//   magic | u16 version | u8 scope | u32 k | u32 d | u64 seed |
//   f32 trim_fraction | k*d f32 centroids | u32 CRC-32
inline constexpr std::uint16_t kCodebookFileVersion = 1;

std::vector<std::uint8_t> encode_codebook(const Codebook& codebook);
Codebook decode_codebook(std::span<const std::uint8_t> bytes);
void write_codebook(const Codebook& codebook, const std::filesystem::path& path);
Codebook read_codebook(const std::filesystem::path& path);

/// CSV with header region_id,seq_index,label,h0..h{k-1}.
std::string format_table_csv(const EncodedTable& table);
void write_table_csv(const EncodedTable& table, const std::filesystem::path& path);
EncodedTable read_table_csv(const std::filesystem::path& path);

}  // namespace patchbag
