#include "patchbag/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <sstream>

#include "patchbag/binary_io.hpp"

namespace patchbag {
namespace {

constexpr double kProbabilityFloor = 1e-12;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

/// Probability that a random class-i sample outscores a random class-j
/// sample on column i, ties counting one half (Mann-Whitney with mid-ranks).
double pairwise_auc(std::span<const double> scores, std::size_t classes,
                    std::span<const int> labels, int i, int j) {
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] == i || labels[r] == j) {
      items.push_back({scores[r * classes + static_cast<std::size_t>(i)], labels[r] == i});
    }
  }
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.score < b.score; });
  double rank_sum = 0.0;
  double n_pos = 0.0;
  std::size_t start = 0;
  while (start < items.size()) {
    std::size_t end = start;
    while (end < items.size() && items[end].score == items[start].score) ++end;
    const double mid = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t t = start; t < end; ++t) {
      if (items[t].positive) {
        rank_sum += mid;
        n_pos += 1.0;
      }
    }
    start = end;
  }
  const double n_neg = static_cast<double>(items.size()) - n_pos;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

struct FoldOutcome {
  FoldMetrics metrics;
  Confusion confusion{};
};

FoldOutcome evaluate_fold(int fold, const EncodedTable& train, const EncodedTable& test,
                          const MlpConfig& mlp) {
  const MlpModel model = train_mlp(train, mlp);
  const Prediction p = predict(model, test.rows);
  FoldOutcome out;
  out.confusion = confusion_matrix(test.labels, p.labels);
  const Prf prf = micro_prf(out.confusion);
  out.metrics.fold = fold;
  out.metrics.precision = prf.precision;
  out.metrics.recall = prf.recall;
  out.metrics.f1 = prf.f1;
  out.metrics.accuracy = accuracy(out.confusion);
  out.metrics.auc = hand_till_auc(p, test.labels);
  out.metrics.loss = cross_entropy(p, test.labels);
  return out;
}

EncodedTable take_rows(const EncodedTable& table, std::span<const std::size_t> rows) {
  EncodedTable out;
  out.rows = FloatMatrix(rows.size(), table.rows.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = table.rows.row(rows[i]);
    std::copy(src.begin(), src.end(), out.rows.row(i).begin());
    out.labels.push_back(table.labels[rows[i]]);
    if (!table.provenance.empty()) out.provenance.push_back(table.provenance[rows[i]]);
  }
  return out;
}

/// Runs `body(f)` for every fold, in parallel, and rethrows the first
/// failure in fold order.
template <class Body>
std::vector<FoldOutcome> run_folds(int folds, Body body) {
  std::vector<FoldOutcome> outcomes(static_cast<std::size_t>(folds));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(folds));
#pragma omp parallel for schedule(dynamic, 1)
  for (int f = 0; f < folds; ++f) {
    try {
      outcomes[static_cast<std::size_t>(f)] = body(f);
    } catch (...) {
      errors[static_cast<std::size_t>(f)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return outcomes;
}

MetricsReport reduce(const std::vector<FoldOutcome>& outcomes, SpreadStatistic spread) {
  std::vector<FoldMetrics> folds;
  Confusion total{};
  for (const FoldOutcome& o : outcomes) {
    folds.push_back(o.metrics);
    for (int t = 0; t < kNumClasses; ++t) {
      for (int p = 0; p < kNumClasses; ++p) total[t][p] += o.confusion[t][p];
    }
  }
  return summarize(std::move(folds), total, spread);
}

std::string fold_stage(int fold) { return "fold" + std::to_string(fold); }

}  // namespace

std::vector<FoldSplit> stratified_kfold(std::span<const ClassLabel> labels, int folds,
                                        std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorCode::ConfigError, "need at least 2 folds");
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[static_cast<std::size_t>(label_index(labels[i]))].push_back(i);
  }
  for (int c = 0; c < kNumClasses; ++c) {
    const auto n = by_class[static_cast<std::size_t>(c)].size();
    if (n > 0 && n < static_cast<std::size_t>(folds)) {
      throw Error(ErrorCode::StratificationError,
                  "class " + std::string(label_name(static_cast<ClassLabel>(c))) + " has " +
                      std::to_string(n) + " samples, fewer than " + std::to_string(folds) +
                      " folds");
    }
  }
  Rng rng(seed);
  std::vector<int> fold_of(labels.size(), 0);
  std::size_t deal = 0;
  for (auto& members : by_class) {
    rng.shuffle(members);
    for (std::size_t idx : members) {
      fold_of[idx] = static_cast<int>(deal % static_cast<std::size_t>(folds));
      ++deal;
    }
  }
  std::vector<FoldSplit> splits(static_cast<std::size_t>(folds));
  for (int f = 0; f < folds; ++f) splits[static_cast<std::size_t>(f)].fold_id = f;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (int f = 0; f < folds; ++f) {
      auto& s = splits[static_cast<std::size_t>(f)];
      (fold_of[i] == f ? s.test_indices : s.train_indices).push_back(i);
    }
  }
  return splits;
}

Confusion confusion_matrix(std::span<const ClassLabel> truth,
                           std::span<const ClassLabel> predicted) {
  if (truth.size() != predicted.size()) {
    throw Error(ErrorCode::ShapeError, "truth and prediction counts differ");
  }
  Confusion c{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++c[static_cast<std::size_t>(label_index(truth[i]))]
       [static_cast<std::size_t>(label_index(predicted[i]))];
  }
  return c;
}

Prf micro_prf(const Confusion& c) {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  for (int t = 0; t < kNumClasses; ++t) {
    for (int p = 0; p < kNumClasses; ++p) {
      if (t == p) {
        tp += c[t][p];
      } else {
        fp += c[t][p];  // a false positive for class p
        fn += c[t][p];  // and a false negative for class t
      }
    }
  }
  if (tp + fp == 0) throw Error(ErrorCode::UndefinedMetric, "confusion matrix is empty");
  Prf out;
  out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  out.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  out.f1 = static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
  return out;
}

double accuracy(const Confusion& c) {
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
  for (int t = 0; t < kNumClasses; ++t) {
    for (int p = 0; p < kNumClasses; ++p) {
      total += c[t][p];
      if (t == p) correct += c[t][p];
    }
  }
  if (total == 0) throw Error(ErrorCode::UndefinedMetric, "confusion matrix is empty");
  return static_cast<double>(correct) / static_cast<double>(total);
}

double hand_till_auc(std::span<const double> scores, std::size_t classes,
                     std::span<const int> labels) {
  if (classes < 2) throw Error(ErrorCode::UndefinedMetric, "AUC needs at least two classes");
  if (scores.size() != labels.size() * classes) {
    throw Error(ErrorCode::ShapeError, "score matrix does not match label count");
  }
  std::vector<std::size_t> count(classes, 0);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw Error(ErrorCode::InvalidLabel, "label " + std::to_string(l) + " out of range");
    }
    ++count[static_cast<std::size_t>(l)];
  }
  std::string absent;
  for (std::size_t c = 0; c < classes; ++c) {
    if (count[c] == 0) absent += (absent.empty() ? "" : ", ") + std::to_string(c);
  }
  if (!absent.empty()) {
    throw Error(ErrorCode::UndefinedMetric, "classes absent from labels: " + absent);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < classes; ++i) {
    for (std::size_t j = i + 1; j < classes; ++j) {
      const int a = static_cast<int>(i);
      const int b = static_cast<int>(j);
      total += 0.5 * (pairwise_auc(scores, classes, labels, a, b) +
                      pairwise_auc(scores, classes, labels, b, a));
    }
  }
  return 2.0 * total / static_cast<double>(classes * (classes - 1));
}

double hand_till_auc(const Prediction& prediction, std::span<const ClassLabel> labels) {
  std::vector<int> idx(labels.size());
  std::transform(labels.begin(), labels.end(), idx.begin(), label_index);
  try {
    return hand_till_auc(prediction.probabilities, kNumClasses, idx);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UndefinedMetric) throw;
    std::string names;
    std::array<bool, kNumClasses> seen{};
    for (int l : idx) seen[static_cast<std::size_t>(l)] = true;
    for (int c = 0; c < kNumClasses; ++c) {
      if (!seen[static_cast<std::size_t>(c)]) {
        names += (names.empty() ? "" : ", ") + std::string(label_name(static_cast<ClassLabel>(c)));
      }
    }
    throw Error(ErrorCode::UndefinedMetric, "classes absent from labels: " + names);
  }
}

double cross_entropy(const Prediction& prediction, std::span<const ClassLabel> labels) {
  if (prediction.probabilities.size() != labels.size() * kNumClasses) {
    throw Error(ErrorCode::ShapeError, "probability matrix does not match label count");
  }
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = prediction.probabilities[i * kNumClasses +
                                              static_cast<std::size_t>(label_index(labels[i]))];
    total -= std::log(std::max(p, kProbabilityFloor));
  }
  return total / static_cast<double>(labels.size());
}

std::string_view spread_name(SpreadStatistic s) {
  return s == SpreadStatistic::StdDev ? "std" : "stderr";
}

SpreadStatistic parse_spread(std::string_view text) {
  const std::string t = to_lower(text);
  if (t == "std" || t == "stddev") return SpreadStatistic::StdDev;
  if (t == "stderr" || t == "se") return SpreadStatistic::StdError;
  throw Error(ErrorCode::ConfigError, "unknown error statistic '" + std::string(text) + "'");
}

const MetricSummary& MetricsReport::metric(std::string_view name) const {
  for (const MetricSummary& m : summary) {
    if (m.metric == name) return m;
  }
  throw Error(ErrorCode::DataError, "report has no metric '" + std::string(name) + "'");
}

MetricsReport summarize(std::vector<FoldMetrics> folds, const Confusion& confusion,
                        SpreadStatistic spread) {
  MetricsReport r;
  r.folds = std::move(folds);
  r.confusion = confusion;
  r.spread = spread;
  const auto n = static_cast<double>(r.folds.size());
  const auto field = [](const FoldMetrics& f, std::size_t m) {
    const double v[] = {f.precision, f.recall, f.f1, f.accuracy, f.auc, f.loss};
    return v[m];
  };
  for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
    MetricSummary s;
    s.metric = std::string(kMetricNames[m]);
    if (!r.folds.empty()) {
      double sum = 0.0;
      for (const auto& f : r.folds) sum += field(f, m);
      s.mean = sum / n;
      double sq = 0.0;
      for (const auto& f : r.folds) sq += (field(f, m) - s.mean) * (field(f, m) - s.mean);
      if (spread == SpreadStatistic::StdDev) {
        s.spread = std::sqrt(sq / n);
      } else {
        s.spread = n > 1 ? std::sqrt(sq / (n - 1.0)) / std::sqrt(n) : 0.0;
      }
    }
    r.summary.push_back(s);
  }
  return r;
}

MetricsReport cross_validate(const EncodedTable& table, const CrossValOptions& options) {
  if (table.labels.size() != table.rows.rows) {
    throw Error(ErrorCode::ShapeError, "table rows and labels differ in count");
  }
  // Canonical row order, so the report does not depend on how the table
  // happens to be ordered.
  std::vector<std::size_t> order(table.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const bool has_prov = table.provenance.size() == table.size();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (has_prov) {
      const auto& pa = table.provenance[a];
      const auto& pb = table.provenance[b];
      if (pa.region_id != pb.region_id) return pa.region_id < pb.region_id;
      if (pa.seq_index != pb.seq_index) return pa.seq_index < pb.seq_index;
    }
    if (table.labels[a] != table.labels[b]) return table.labels[a] < table.labels[b];
    const auto ra = table.rows.row(a);
    const auto rb = table.rows.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  const EncodedTable canon = take_rows(table, order);
  const auto splits = stratified_kfold(canon.labels, options.folds, options.seed);
  const auto outcomes = run_folds(options.folds, [&](int f) {
    const FoldSplit& s = splits[static_cast<std::size_t>(f)];
    MlpConfig mlp = options.mlp;
    mlp.seed = derive_seed(options.mlp.seed, fold_stage(f));
    return evaluate_fold(f, take_rows(canon, s.train_indices), take_rows(canon, s.test_indices),
                         mlp);
  });
  return reduce(outcomes, options.spread);
}

MetricsReport cross_validate(std::span<const DescriptorSet> sets,
                             const VocabularyOptions& vocabulary,
                             const CrossValOptions& options) {
  if (sets.empty()) throw Error(ErrorCode::EmptyInput, "no descriptor sets to cross-validate");
  std::vector<std::size_t> set_order(sets.size());
  std::iota(set_order.begin(), set_order.end(), std::size_t{0});
  std::stable_sort(set_order.begin(), set_order.end(), [&](std::size_t a, std::size_t b) {
    return sets[a].region_id < sets[b].region_id;
  });
  for (std::size_t i = 1; i < set_order.size(); ++i) {
    if (sets[set_order[i]].region_id == sets[set_order[i - 1]].region_id) {
      throw Error(ErrorCode::DataError,
                  "duplicate region id '" + sets[set_order[i]].region_id + "'");
    }
  }

  struct PatchRef {
    std::size_t set;
    std::size_t patch;
  };
  std::vector<PatchRef> refs;
  std::vector<ClassLabel> labels;
  for (std::size_t s : set_order) {
    for (std::size_t p = 0; p < sets[s].n_patches(); ++p) {
      refs.push_back({s, p});
      labels.push_back(sets[s].label);
    }
  }
  const auto splits = stratified_kfold(labels, options.folds, options.seed);

  const auto outcomes = run_folds(options.folds, [&](int f) {
    const FoldSplit& split = splits[static_cast<std::size_t>(f)];
    std::vector<std::vector<std::size_t>> train_of(sets.size());
    std::vector<std::vector<std::size_t>> test_of(sets.size());
    for (std::size_t g : split.train_indices) train_of[refs[g].set].push_back(refs[g].patch);
    for (std::size_t g : split.test_indices) test_of[refs[g].set].push_back(refs[g].patch);

    std::vector<DescriptorSet> train_sets;
    std::vector<DescriptorSet> test_sets;
    for (std::size_t s : set_order) {
      if (!train_of[s].empty()) train_sets.push_back(sets[s].subset(train_of[s]));
      if (test_of[s].empty()) continue;
      if (vocabulary.scope == VocabScope::PerRegion && train_of[s].empty()) {
        throw Error(ErrorCode::InsufficientData,
                    "fold " + std::to_string(f) + ": region '" + sets[s].region_id +
                        "' has no training patches to fit its codebook");
      }
      test_sets.push_back(sets[s].subset(test_of[s]));
    }
    VocabularyOptions vopt = vocabulary;
    vopt.seed = derive_seed(vocabulary.seed, fold_stage(f));
    const Vocabulary vocab = fit_vocabulary(train_sets, vopt);
    MlpConfig mlp = options.mlp;
    mlp.seed = derive_seed(options.mlp.seed, fold_stage(f));
    return evaluate_fold(f, encode_sets(train_sets, vocab, vopt.raw_counts),
                         encode_sets(test_sets, vocab, vopt.raw_counts), mlp);
  });
  return reduce(outcomes, options.spread);
}

std::string format_fold_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "fold,metric,value\n";
  for (const FoldMetrics& f : report.folds) {
    const double v[] = {f.precision, f.recall, f.f1, f.accuracy, f.auc, f.loss};
    for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
      out << f.fold << ',' << kMetricNames[m] << ',' << fmt_double(v[m]) << '\n';
    }
  }
  return out.str();
}

std::string format_summary_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "metric,mean," << spread_name(report.spread) << '\n';
  for (const MetricSummary& s : report.summary) {
    out << s.metric << ',' << fmt_double(s.mean) << ',' << fmt_double(s.spread) << '\n';
  }
  return out.str();
}

std::string format_confusion_csv(const Confusion& confusion) {
  std::ostringstream out;
  out << "true\\predicted";
  for (ClassLabel l : kAllLabels) out << ',' << label_name(l);
  out << '\n';
  for (ClassLabel t : kAllLabels) {
    out << label_name(t);
    for (ClassLabel p : kAllLabels) {
      out << ',' << confusion[static_cast<std::size_t>(label_index(t))]
                             [static_cast<std::size_t>(label_index(p))];
    }
    out << '\n';
  }
  return out.str();
}

std::string format_report_table(const MetricsReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %10s %10s\n", "metric", "mean",
                std::string(spread_name(report.spread)).c_str());
  out << line;
  for (const MetricSummary& s : report.summary) {
    std::snprintf(line, sizeof line, "%-10s %10s %10s\n", s.metric.c_str(),
                  fmt_fixed(s.mean).c_str(), fmt_fixed(s.spread).c_str());
    out << line;
  }
  out << '\n';
  std::snprintf(line, sizeof line, "%-10s", "true\\pred");
  out << line;
  for (ClassLabel l : kAllLabels) {
    std::snprintf(line, sizeof line, " %9s", std::string(label_name(l)).c_str());
    out << line;
  }
  out << '\n';
  for (ClassLabel t : kAllLabels) {
    std::snprintf(line, sizeof line, "%-10s", std::string(label_name(t)).c_str());
    out << line;
    for (ClassLabel p : kAllLabels) {
      std::snprintf(line, sizeof line, " %9llu",
                    static_cast<unsigned long long>(
                        report.confusion[static_cast<std::size_t>(label_index(t))]
                                        [static_cast<std::size_t>(label_index(p))]));
      out << line;
    }
    out << '\n';
  }
  return out.str();
}

void write_report(const MetricsReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  atomic_write_text(dir / "folds.csv", format_fold_csv(report));
  atomic_write_text(dir / "summary.csv", format_summary_csv(report));
  atomic_write_text(dir / "confusion.csv", format_confusion_csv(report.confusion));
}

}  // namespace patchbag
