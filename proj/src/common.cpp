#include "patchbag/common.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

namespace patchbag {

std::string_view label_name(ClassLabel label) {
  switch (label) {
    case ClassLabel::Normal:
      return "Normal";
    case ClassLabel::Benign:
      return "Benign";
    case ClassLabel::InSitu:
      return "InSitu";
    case ClassLabel::Invasive:
      return "Invasive";
  }
  return "Unknown";
}

std::optional<ClassLabel> label_from_code(int code) {
  if (code < 0 || code >= kNumClasses) return std::nullopt;
  return static_cast<ClassLabel>(code);
}

std::optional<ClassLabel> parse_label(std::string_view text) {
  std::string key;
  for (char c : text) {
    if (c == ' ' || c == '_' || c == '-' || c == '\t') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (key == "normal" || key == "0") return ClassLabel::Normal;
  if (key == "benign" || key == "1") return ClassLabel::Benign;
  if (key == "insitu" || key == "2") return ClassLabel::InSitu;
  if (key == "invasive" || key == "3") return ClassLabel::Invasive;
  return std::nullopt;
}

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "parse-error";
    case ErrorCode::InvalidLabel: return "invalid-label";
    case ErrorCode::DegenerateGeometry: return "degenerate-geometry";
    case ErrorCode::DegenerateMask: return "degenerate-mask";
    case ErrorCode::ZeroLengthAxis: return "zero-length-axis";
    case ErrorCode::RegionTooLarge: return "region-too-large";
    case ErrorCode::RangeError: return "range-error";
    case ErrorCode::ConfigError: return "config-error";
    case ErrorCode::EmptySet: return "empty-set";
    case ErrorCode::DimensionError: return "dimension-error";
    case ErrorCode::IoError: return "io-error";
    case ErrorCode::BadMagic: return "bad-magic";
    case ErrorCode::VersionMismatch: return "version-mismatch";
    case ErrorCode::Truncated: return "truncated";
    case ErrorCode::NonFinite: return "non-finite";
    case ErrorCode::InconsistentShape: return "inconsistent-shape";
    case ErrorCode::CrcMismatch: return "crc-mismatch";
    case ErrorCode::EmptyInput: return "empty-input";
    case ErrorCode::InsufficientData: return "insufficient-data";
    case ErrorCode::DataError: return "data-error";
    case ErrorCode::ZeroDescriptors: return "zero-descriptors";
    case ErrorCode::ShapeError: return "shape-error";
    case ErrorCode::DegenerateLabels: return "degenerate-labels";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::StratificationError: return "stratification-error";
    case ErrorCode::UndefinedMetric: return "undefined-metric";
    case ErrorCode::MissingArtifact: return "missing-artifact";
  }
  return "unknown";
}

RgbImage crop(const RgbImage& image, const Rect& rect) {
  RgbImage out(static_cast<int>(rect.width), static_cast<int>(rect.height), 255);
  const std::int64_t x0 = std::max<std::int64_t>(rect.x, 0);
  const std::int64_t x1 = std::min<std::int64_t>(rect.x + rect.width, image.width);
  if (x1 <= x0) return out;
  for (std::int64_t y = 0; y < rect.height; ++y) {
    const std::int64_t sy = rect.y + y;
    if (sy < 0 || sy >= image.height) continue;
    std::copy_n(image.at(static_cast<int>(x0), static_cast<int>(sy)),
                (x1 - x0) * 3,
                out.at(static_cast<int>(x0 - rect.x), static_cast<int>(y)));
  }
  return out;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view stage) {
  return mix64(master ^ fnv1a64(stage));
}

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound <= 1) return 0;
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % bound;
}

double Rng::normal() {
  // Box-Muller; discards the second variate to keep the stream simple.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

}  // namespace patchbag
