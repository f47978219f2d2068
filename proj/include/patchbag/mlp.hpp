#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "patchbag/bovw.hpp"
#include "patchbag/common.hpp"

namespace patchbag {

struct MlpConfig {
  std::size_t hidden = 100;
  /// L2 coefficient on weights (biases are not penalised).
  double lambda = 0.2;
  double learning_rate = 0.01;
  int epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

/// inputs -> hidden (ReLU) -> 4 (softmax). Weights are row-major
/// [out][in].
struct MlpModel {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  std::size_t outputs = kNumClasses;
  std::vector<double> w1, b1, w2, b2;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  MlpConfig config;
  /// Mean training cross-entropy after the last epoch.
  double final_loss = 0.0;

  std::vector<std::size_t> layer_dims() const { return {inputs, hidden, outputs}; }
  bool operator==(const MlpModel& o) const {
    return inputs == o.inputs && hidden == o.hidden && outputs == o.outputs && w1 == o.w1 &&
           b1 == o.b1 && w2 == o.w2 && b2 == o.b2 && lambda == o.lambda && seed == o.seed;
  }
};

struct MlpGradient {
  std::vector<double> w1, b1, w2, b2;
};

/// Random initial weights (He-uniform for the ReLU layer), zero biases.
MlpModel init_mlp(std::size_t inputs, const MlpConfig& config);

/// All parameters zero.
MlpModel zero_mlp(std::size_t inputs, std::size_t hidden);

/// Mean cross-entropy over `rows` plus (lambda/2) * sum of squared weights.
double regularized_objective(const MlpModel& model, const FloatMatrix& x,
                             std::span<const ClassLabel> labels);

/// Gradient of regularized_objective restricted to `rows` (all rows when
/// empty).
MlpGradient objective_gradient(const MlpModel& model, const FloatMatrix& x,
                               std::span<const ClassLabel> labels,
                               std::span<const std::size_t> rows = {});

/// Mini-batch SGD with seeded shuffling. Parameters are rounded to float32
/// at the end so the in-memory model equals what a model file stores.
MlpModel train_mlp(const FloatMatrix& x, std::span<const ClassLabel> labels,
                   const MlpConfig& config);
MlpModel train_mlp(const EncodedTable& table, const MlpConfig& config);

struct Prediction {
  std::vector<double> probabilities;  // n x 4
  std::vector<ClassLabel> labels;
};

Prediction predict(const MlpModel& model, const FloatMatrix& x);

/// Mean cross-entropy, probabilities clamped at 1e-12; no regularization.
double loss(const MlpModel& model, const FloatMatrix& x, std::span<const ClassLabel> labels);

// Model file ("PBML", version 1), little-endian:
//   magic | u16 version | u32 n_layers | u32 dims[n_layers] | f64 lambda |
//   u64 seed | f32 w1, b1, w2, b2 | u32 CRC-32
inline constexpr std::uint16_t kModelFileVersion = 1;

std::vector<std::uint8_t> encode_model(const MlpModel& model);
MlpModel decode_model(std::span<const std::uint8_t> bytes);
void write_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel read_model(const std::filesystem::path& path);

}  // namespace patchbag
