#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "duet/dataio.hpp"

namespace duet {

struct ScoredExample {
  Index user = 0;
  Index item = 0;
  std::uint8_t label = 0;
  double score = 0;
};

/// Mann-Whitney AUC, ties worth one half. Throws MetricError unless both classes occur.
double auc(std::span<const ScoredExample> examples);
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);
/// Mean |score - label|. Throws ArgumentError when empty.
double mae(std::span<const ScoredExample> examples);
double rmse(std::span<const ScoredExample> examples);
/// Predicts 1 iff score >= threshold; 0 when precision + recall is 0.
double f1(std::span<const ScoredExample> examples, double threshold = 0.5);

struct MetricsReport {
  double auc = 0;
  double mae = 0;
  double rmse = 0;
  double f1 = 0;
  std::size_t n_examples = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string timestamp;

  /// Throws MetricError if any value leaves its valid range.
  void check_ranges() const;
  /// Fixed key order, six decimals.
  std::string to_json() const;
  /// `metric,value` rows.
  std::string to_csv() const;
  static MetricsReport from_json(const std::string& text);
};

MetricsReport compute_metrics(std::span<const ScoredExample> examples);

}  // namespace duet
