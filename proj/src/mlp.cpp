#include "patchbag/mlp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include "patchbag/binary_io.hpp"

namespace patchbag {
namespace {

constexpr char kModelMagic[4] = {'P', 'B', 'M', 'L'};
constexpr double kProbabilityFloor = 1e-12;

/// Forward pass for one row. Zero inputs are skipped, which matters for the
/// sparse histogram rows this network sees.
struct Forward {
  std::vector<std::size_t> nonzero;
  std::vector<double> hidden;
  std::vector<double> probs;

  void run(const MlpModel& m, std::span<const float> x) {
    nonzero.clear();
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j] != 0.0f) nonzero.push_back(j);
    }
    hidden.resize(m.hidden);
    for (std::size_t h = 0; h < m.hidden; ++h) {
      const double* w = m.w1.data() + h * m.inputs;
      double z = m.b1[h];
      for (std::size_t j : nonzero) z += w[j] * x[j];
      hidden[h] = z > 0.0 ? z : 0.0;
    }
    probs.resize(m.outputs);
    double top = -INFINITY;
    for (std::size_t o = 0; o < m.outputs; ++o) {
      const double* w = m.w2.data() + o * m.hidden;
      double z = m.b2[o];
      for (std::size_t h = 0; h < m.hidden; ++h) z += w[h] * hidden[h];
      probs[o] = z;
      top = std::max(top, z);
    }
    double total = 0.0;
    for (double& p : probs) {
      p = std::exp(p - top);
      total += p;
    }
    for (double& p : probs) p /= total;
  }
};

void check_inputs(const MlpModel& model, const FloatMatrix& x) {
  if (x.cols != model.inputs) {
    throw Error(ErrorCode::ShapeError, "input width " + std::to_string(x.cols) +
                                           " does not match model width " +
                                           std::to_string(model.inputs));
  }
}

double weight_penalty(const MlpModel& m) {
  double s = 0.0;
  for (double w : m.w1) s += w * w;
  for (double w : m.w2) s += w * w;
  return 0.5 * m.lambda * s;
}

void round_to_float(std::vector<double>& v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace

MlpModel zero_mlp(std::size_t inputs, std::size_t hidden) {
  MlpModel m;
  m.inputs = inputs;
  m.hidden = hidden;
  m.outputs = kNumClasses;
  m.w1.assign(hidden * inputs, 0.0);
  m.b1.assign(hidden, 0.0);
  m.w2.assign(m.outputs * hidden, 0.0);
  m.b2.assign(m.outputs, 0.0);
  return m;
}

MlpModel init_mlp(std::size_t inputs, const MlpConfig& config) {
  if (inputs == 0 || config.hidden == 0) {
    throw Error(ErrorCode::ConfigError, "network layers must be non-empty");
  }
  MlpModel m = zero_mlp(inputs, config.hidden);
  m.lambda = config.lambda;
  m.seed = config.seed;
  m.config = config;
  Rng rng(derive_seed(config.seed, "mlp-init"));
  const double a1 = std::sqrt(6.0 / static_cast<double>(inputs));
  for (double& w : m.w1) w = (2.0 * rng.uniform() - 1.0) * a1;
  const double a2 = std::sqrt(6.0 / static_cast<double>(config.hidden + m.outputs));
  for (double& w : m.w2) w = (2.0 * rng.uniform() - 1.0) * a2;
  return m;
}

double regularized_objective(const MlpModel& model, const FloatMatrix& x,
                             std::span<const ClassLabel> labels) {
  return loss(model, x, labels) + weight_penalty(model);
}

MlpGradient objective_gradient(const MlpModel& m, const FloatMatrix& x,
                               std::span<const ClassLabel> labels,
                               std::span<const std::size_t> rows) {
  check_inputs(m, x);
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(x.rows);
    std::iota(all.begin(), all.end(), std::size_t{0});
    rows = all;
  }
  MlpGradient g;
  g.w1.assign(m.w1.size(), 0.0);
  g.b1.assign(m.b1.size(), 0.0);
  g.w2.assign(m.w2.size(), 0.0);
  g.b2.assign(m.b2.size(), 0.0);
  Forward f;
  std::vector<double> dz2(m.outputs);
  std::vector<double> dz1(m.hidden);
  for (std::size_t r : rows) {
    const auto row = x.row(r);
    f.run(m, row);
    const auto target = static_cast<std::size_t>(label_index(labels[r]));
    for (std::size_t o = 0; o < m.outputs; ++o) {
      dz2[o] = f.probs[o] - (o == target ? 1.0 : 0.0);
      g.b2[o] += dz2[o];
      double* gw = g.w2.data() + o * m.hidden;
      for (std::size_t h = 0; h < m.hidden; ++h) gw[h] += dz2[o] * f.hidden[h];
    }
    for (std::size_t h = 0; h < m.hidden; ++h) {
      if (f.hidden[h] <= 0.0) {
        dz1[h] = 0.0;
        continue;
      }
      double s = 0.0;
      for (std::size_t o = 0; o < m.outputs; ++o) s += m.w2[o * m.hidden + h] * dz2[o];
      dz1[h] = s;
    }
    for (std::size_t h = 0; h < m.hidden; ++h) {
      if (dz1[h] == 0.0) continue;
      g.b1[h] += dz1[h];
      double* gw = g.w1.data() + h * m.inputs;
      for (std::size_t j : f.nonzero) gw[j] += dz1[h] * row[j];
    }
  }
  const double scale = 1.0 / static_cast<double>(rows.size());
  for (std::size_t i = 0; i < g.w1.size(); ++i) g.w1[i] = g.w1[i] * scale + m.lambda * m.w1[i];
  for (std::size_t i = 0; i < g.w2.size(); ++i) g.w2[i] = g.w2[i] * scale + m.lambda * m.w2[i];
  for (double& v : g.b1) v *= scale;
  for (double& v : g.b2) v *= scale;
  return g;
}

MlpModel train_mlp(const FloatMatrix& x, std::span<const ClassLabel> labels,
                   const MlpConfig& config) {
  if (x.rows != labels.size()) {
    throw Error(ErrorCode::ShapeError, "row and label counts differ");
  }
  if (config.batch_size == 0 || config.epochs < 0 || !(config.learning_rate > 0.0)) {
    throw Error(ErrorCode::ConfigError, "invalid training configuration");
  }
  std::array<bool, kNumClasses> present{};
  for (ClassLabel l : labels) present[static_cast<std::size_t>(label_index(l))] = true;
  if (std::count(present.begin(), present.end(), true) < 2) {
    throw Error(ErrorCode::DegenerateLabels, "training data must contain at least two classes");
  }
  for (float v : x.data) {
    if (!std::isfinite(v)) throw Error(ErrorCode::DataError, "training rows must be finite");
  }

  MlpModel m = init_mlp(x.cols, config);
  Rng rng(derive_seed(config.seed, "mlp-shuffle"));
  std::vector<std::size_t> order(x.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const double lr = config.learning_rate;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const auto g = objective_gradient(
          m, x, labels, std::span<const std::size_t>(order.data() + start, end - start));
      for (std::size_t i = 0; i < m.w1.size(); ++i) m.w1[i] -= lr * g.w1[i];
      for (std::size_t i = 0; i < m.b1.size(); ++i) m.b1[i] -= lr * g.b1[i];
      for (std::size_t i = 0; i < m.w2.size(); ++i) m.w2[i] -= lr * g.w2[i];
      for (std::size_t i = 0; i < m.b2.size(); ++i) m.b2[i] -= lr * g.b2[i];
    }
    const double epoch_loss = loss(m, x, labels);
    if (!std::isfinite(epoch_loss) || !std::isfinite(weight_penalty(m))) {
      throw Error(ErrorCode::Divergence,
                  "training diverged at epoch " + std::to_string(epoch + 1));
    }
    m.final_loss = epoch_loss;
  }
  round_to_float(m.w1);
  round_to_float(m.b1);
  round_to_float(m.w2);
  round_to_float(m.b2);
  m.final_loss = loss(m, x, labels);
  return m;
}

MlpModel train_mlp(const EncodedTable& table, const MlpConfig& config) {
  return train_mlp(table.rows, table.labels, config);
}

Prediction predict(const MlpModel& model, const FloatMatrix& x) {
  check_inputs(model, x);
  Prediction out;
  out.probabilities.resize(x.rows * model.outputs);
  out.labels.resize(x.rows);
  const auto n = static_cast<std::int64_t>(x.rows);
#pragma omp parallel
  {
    Forward f;
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      const auto r = static_cast<std::size_t>(i);
      f.run(model, x.row(r));
      std::copy(f.probs.begin(), f.probs.end(), out.probabilities.begin() + r * model.outputs);
      const auto best = std::max_element(f.probs.begin(), f.probs.end()) - f.probs.begin();
      out.labels[r] = static_cast<ClassLabel>(best);
    }
  }
  return out;
}

double loss(const MlpModel& model, const FloatMatrix& x, std::span<const ClassLabel> labels) {
  check_inputs(model, x);
  if (labels.size() != x.rows) throw Error(ErrorCode::ShapeError, "row and label counts differ");
  if (x.rows == 0) return 0.0;
  const Prediction p = predict(model, x);
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double prob = p.probabilities[i * model.outputs + static_cast<std::size_t>(label_index(labels[i]))];
    total -= std::log(std::max(prob, kProbabilityFloor));
  }
  return total / static_cast<double>(x.rows);
}

std::vector<std::uint8_t> encode_model(const MlpModel& model) {
  ByteWriter w;
  w.raw(std::string_view(kModelMagic, 4));
  w.u16(kModelFileVersion);
  const auto dims = model.layer_dims();
  w.u32(static_cast<std::uint32_t>(dims.size()));
  for (std::size_t d : dims) w.u32(static_cast<std::uint32_t>(d));
  w.u64(std::bit_cast<std::uint64_t>(model.lambda));
  w.u64(model.seed);
  for (const auto* v : {&model.w1, &model.b1, &model.w2, &model.b2}) {
    for (double x : *v) {
      const auto f = static_cast<float>(x);
      if (!std::isfinite(f)) throw Error(ErrorCode::NonFinite, "model parameter is not finite");
      w.f32(f);
    }
  }
  w.seal_crc();
  return w.take();
}

MlpModel decode_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, "not a PBML model file");
  }
  ByteReader r(bytes);
  r.raw(4);
  const std::uint16_t version = r.u16();
  if (version != kModelFileVersion) {
    throw Error(ErrorCode::VersionMismatch,
                "model version " + std::to_string(version) + " is not supported");
  }
  const std::uint32_t layers = r.u32();
  if (layers != 3) {
    throw Error(ErrorCode::InconsistentShape,
                "expected 3 layer sizes, file declares " + std::to_string(layers));
  }
  const std::uint32_t in = r.u32();
  const std::uint32_t hidden = r.u32();
  const std::uint32_t out = r.u32();
  if (out != kNumClasses) {
    throw Error(ErrorCode::InconsistentShape, "model output width must be 4");
  }
  MlpModel m = zero_mlp(in, hidden);
  m.lambda = std::bit_cast<double>(r.u64());
  m.seed = r.u64();
  m.config.hidden = hidden;
  m.config.lambda = m.lambda;
  m.config.seed = m.seed;
  const std::size_t expected = (m.w1.size() + m.b1.size() + m.w2.size() + m.b2.size()) * 4;
  if (r.remaining() != expected + 4) {
    throw Error(r.remaining() < expected + 4 ? ErrorCode::Truncated : ErrorCode::InconsistentShape,
                "model parameter block does not match the declared layer sizes");
  }
  checked_payload(bytes);
  for (auto* v : {&m.w1, &m.b1, &m.w2, &m.b2}) {
    for (double& x : *v) {
      const float f = r.f32();
      if (!std::isfinite(f)) throw Error(ErrorCode::NonFinite, "model parameter is not finite");
      x = f;
    }
  }
  return m;
}

void write_model(const MlpModel& model, const std::filesystem::path& path) {
  atomic_write_file(path, encode_model(model));
}

MlpModel read_model(const std::filesystem::path& path) {
  return decode_model(read_file_bytes(path));
}

}  // namespace patchbag
