#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace patchbag {

/// Class labels. The numeric values are the on-disk encoding used by every
/// file the pipeline writes.
enum class ClassLabel : std::uint8_t {
  Normal = 0,
  Benign = 1,
  InSitu = 2,
  Invasive = 3,
};

inline constexpr int kNumClasses = 4;
inline constexpr std::array<ClassLabel, kNumClasses> kAllLabels = {
    ClassLabel::Normal, ClassLabel::Benign, ClassLabel::InSitu,
    ClassLabel::Invasive};

std::string_view label_name(ClassLabel label);

/// Case-insensitive; accepts "InSitu", "In situ", "in_situ" and the numeric
/// codes "0".."3".
std::optional<ClassLabel> parse_label(std::string_view text);

std::optional<ClassLabel> label_from_code(int code);

inline int label_index(ClassLabel label) { return static_cast<int>(label); }

enum class ErrorCode {
  ParseError,
  InvalidLabel,
  DegenerateGeometry,
  DegenerateMask,
  ZeroLengthAxis,
  RegionTooLarge,
  RangeError,
  ConfigError,
  EmptySet,
  DimensionError,
  IoError,
  BadMagic,
  VersionMismatch,
  Truncated,
  NonFinite,
  InconsistentShape,
  CrcMismatch,
  EmptyInput,
  InsufficientData,
  DataError,
  ZeroDescriptors,
  ShapeError,
  DegenerateLabels,
  Divergence,
  StratificationError,
  UndefinedMetric,
  MissingArtifact,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct Rect {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t width = 0;
  std::int64_t height = 0;

  std::int64_t area() const { return width * height; }
  bool operator==(const Rect&) const = default;
};

/// Interleaved 8-bit RGB raster, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 255)
      : width(w), height(h),
        pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3,
               fill) {}

  std::uint8_t* at(int x, int y) {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }

  bool operator==(const RgbImage&) const = default;
};

/// Copies `rect` out of `image`; pixels outside the source are white.
RgbImage crop(const RgbImage& image, const Rect& rect);

/// Dense row-major float matrix.
struct FloatMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  FloatMatrix() = default;
  FloatMatrix(std::size_t r, std::size_t c, float fill = 0.0f)
      : rows(r), cols(c), data(r * c, fill) {}

  std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const float> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }
  float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  bool operator==(const FloatMatrix&) const = default;
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// FNV-1a over bytes.
std::uint64_t fnv1a64(std::string_view bytes);

/// Derives a stage seed from a master seed and a stage name.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage);

/// Seeded generator used everywhere randomness is needed. Only the raw
/// 64-bit stream of mt19937_64 is consumed so outputs do not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  double normal();

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::string to_lower(std::string_view text);

}  // namespace patchbag
