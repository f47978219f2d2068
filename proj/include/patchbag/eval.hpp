#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "patchbag/bovw.hpp"
#include "patchbag/common.hpp"
#include "patchbag/features.hpp"
#include "patchbag/mlp.hpp"

namespace patchbag {

struct FoldSplit {
  int fold_id = 0;
  std::vector<std::size_t> train_indices;  // ascending
  std::vector<std::size_t> test_indices;   // ascending
};

/// Shuffles each class's indices with a seeded generator, then deals them
/// round-robin into `folds` test sets. The deal position carries over from
/// one class to the next so fold sizes stay balanced overall.
std::vector<FoldSplit> stratified_kfold(std::span<const ClassLabel> labels, int folds = 5,
                                        std::uint64_t seed = 0);

/// confusion[true][predicted].
using Confusion = std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>;

Confusion confusion_matrix(std::span<const ClassLabel> truth,
                           std::span<const ClassLabel> predicted);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Micro-averaged precision, recall and F1.
Prf micro_prf(const Confusion& confusion);
double accuracy(const Confusion& confusion);

/// Hand & Till multiclass AUC. `scores` is n x classes, row-major; `labels`
/// holds class indices in [0, classes).
double hand_till_auc(std::span<const double> scores, std::size_t classes,
                     std::span<const int> labels);
double hand_till_auc(const Prediction& prediction, std::span<const ClassLabel> labels);

/// Mean cross-entropy of predicted probabilities, clamped at 1e-12.
double cross_entropy(const Prediction& prediction, std::span<const ClassLabel> labels);

enum class SpreadStatistic { StdDev, StdError };

std::string_view spread_name(SpreadStatistic s);
SpreadStatistic parse_spread(std::string_view text);

struct FoldMetrics {
  int fold = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  double auc = 0.0;
  double loss = 0.0;
};

struct MetricSummary {
  std::string metric;
  double mean = 0.0;
  double spread = 0.0;
};

struct MetricsReport {
  std::vector<FoldMetrics> folds;
  std::vector<MetricSummary> summary;  // precision, recall, f1, accuracy, auc, loss
  Confusion confusion{};               // summed over folds
  SpreadStatistic spread = SpreadStatistic::StdDev;

  const MetricSummary& metric(std::string_view name) const;
};

inline constexpr std::array<std::string_view, 6> kMetricNames = {
    "precision", "recall", "f1", "accuracy", "auc", "loss"};

/// Mean and spread over folds (population std, or std / sqrt(folds)).
MetricsReport summarize(std::vector<FoldMetrics> folds, const Confusion& confusion,
                        SpreadStatistic spread);

struct CrossValOptions {
  int folds = 5;
  std::uint64_t seed = 0;
  MlpConfig mlp;
  SpreadStatistic spread = SpreadStatistic::StdDev;
};

/// Cross-validates the MLP on an already encoded table.
MetricsReport cross_validate(const EncodedTable& table, const CrossValOptions& options);

/// Cross-validates vocabulary fitting, encoding and the MLP together. Folds
/// split patches; every codebook is fitted on training-fold patches only
/// (per region in the region scope).
MetricsReport cross_validate(std::span<const DescriptorSet> sets,
                             const VocabularyOptions& vocabulary,
                             const CrossValOptions& options);

std::string format_fold_csv(const MetricsReport& report);
std::string format_summary_csv(const MetricsReport& report);
std::string format_confusion_csv(const Confusion& confusion);
std::string format_report_table(const MetricsReport& report);

/// Writes folds.csv, summary.csv and confusion.csv into `dir`.
void write_report(const MetricsReport& report, const std::filesystem::path& dir);

}  // namespace patchbag
