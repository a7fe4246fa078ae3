#include "duet/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>

namespace duet {

namespace {

void require_nonempty(std::span<const ScoredExample> examples, const char* metric) {
  if (examples.empty()) throw ArgumentError(std::string(metric) + " of an empty example set");
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: score and label counts differ");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of positive ranks, tied groups sharing their average rank.
  double rank_sum = 0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) group_pos += labels[order[j++]] != 0;
    rank_sum += double(group_pos) * (double(i + 1) + double(j)) / 2.0;
    positives += group_pos;
    i = j;
  }
  const std::size_t negatives = order.size() - positives;
  if (positives == 0 || negatives == 0) throw MetricError("auc is undefined without both positive and negative labels");
  const double p = double(positives), n = double(negatives);
  return (rank_sum - p * (p + 1) / 2.0) / (p * n);
}

double auc(std::span<const ScoredExample> examples) {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const auto& e : examples) scores.push_back(e.score), labels.push_back(e.label);
  return auc(scores, labels);
}

double mae(std::span<const ScoredExample> examples) {
  require_nonempty(examples, "mae");
  double sum = 0;
  for (const auto& e : examples) sum += std::abs(e.score - e.label);
  return sum / double(examples.size());
}

double rmse(std::span<const ScoredExample> examples) {
  require_nonempty(examples, "rmse");
  double sum = 0;
  for (const auto& e : examples) sum += (e.score - e.label) * (e.score - e.label);
  return std::sqrt(sum / double(examples.size()));
}

double f1(std::span<const ScoredExample> examples, double threshold) {
  require_nonempty(examples, "f1");
  double tp = 0, fp = 0, fn = 0;
  for (const auto& e : examples) {
    const bool predicted = e.score >= threshold;
    tp += predicted && e.label;
    fp += predicted && !e.label;
    fn += !predicted && e.label;
  }
  const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

MetricsReport compute_metrics(std::span<const ScoredExample> examples) {
  MetricsReport r;
  r.auc = auc(examples);
  r.mae = mae(examples);
  r.rmse = rmse(examples);
  r.f1 = f1(examples);
  r.n_examples = examples.size();
  r.check_ranges();
  return r;
}

void MetricsReport::check_ranges() const {
  auto fail = [](const std::string& what) { throw MetricError("metric out of range: " + what); };
  if (!(auc >= 0 && auc <= 1)) fail("auc=" + fixed6(auc));
  if (!(f1 >= 0 && f1 <= 1)) fail("f1=" + fixed6(f1));
  if (!(mae >= 0)) fail("mae=" + fixed6(mae));
  // RMSE >= MAE up to rounding of the two sums.
  if (!(rmse >= 0) || rmse < mae - 1e-12) fail("rmse=" + fixed6(rmse) + " below mae=" + fixed6(mae));
}

std::string MetricsReport::to_json() const {
  std::string s = "{\n";
  s += "  \"auc\": " + fixed6(auc) + ",\n";
  s += "  \"mae\": " + fixed6(mae) + ",\n";
  s += "  \"rmse\": " + fixed6(rmse) + ",\n";
  s += "  \"f1\": " + fixed6(f1) + ",\n";
  s += "  \"n_examples\": " + std::to_string(n_examples) + ",\n";
  s += "  \"seed\": " + std::to_string(seed) + ",\n";
  s += "  \"config_hash\": " + nlohmann::json(config_hash).dump() + ",\n";
  s += "  \"timestamp\": " + nlohmann::json(timestamp).dump() + "\n}\n";
  return s;
}

std::string MetricsReport::to_csv() const {
  return "metric,value\nauc," + fixed6(auc) + "\nmae," + fixed6(mae) + "\nrmse," + fixed6(rmse) + "\nf1," + fixed6(f1) +
         "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MetricsReport r;
    r.auc = j.at("auc").get<double>();
    r.mae = j.at("mae").get<double>();
    r.rmse = j.at("rmse").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.n_examples = j.at("n_examples").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.value("config_hash", "");
    r.timestamp = j.value("timestamp", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("report.json", 0, e.what());
  }
}

}  // namespace duet
