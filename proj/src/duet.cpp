#include "duet/duet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace duet {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (neg_ratio == 0) throw ConfigError("neg_ratio must be positive");
  if (!(gamma > 0)) throw ConfigError("gamma must be > 0");
  adam().validate();
  local.validate();
  global.validate();
}

AdamConfig TrainConfig::adam() const {
  AdamConfig a;
  a.lr = lr;
  return a;
}

double fuse(double p_local, double p_global, const ParamStore& store) {
  const Tensor& w = store.value("fusion.w");
  return sigmoid(w[0] * p_local + w[1] * p_global + store.value("fusion.b")[0]);
}

double ce_loss(std::span<const double> probs, std::span<const std::uint8_t> labels) {
  if (probs.size() != labels.size()) throw DimensionError("ce_loss: probability and label counts differ");
  double loss = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
    loss -= labels[i] ? std::log(p) : std::log1p(-p);
  }
  return loss;
}

void init_fusion_params(ParamStore& store) {
  store.add("fusion.w", Tensor({2}, {1.0, 1.0}));
  store.add("fusion.b", Tensor({1}, {-1.0}));
}

ParamStore init_duet_params(const TrainConfig& cfg, const Dataset& data, const UnifiedRelationGraph& urg) {
  cfg.validate();
  ParamStore store;
  Rng local_rng(substream_seed(cfg.seed, "init-local"));
  init_local_params(store, cfg.local, data.vocab.size(), local_rng);
  Rng global_rng(substream_seed(cfg.seed, "init-global"));
  init_global_params(store, cfg.global, urg.n_entities(), urg.n_relations(), global_rng);
  init_fusion_params(store);
  return store;
}

// ---------------------------------------------------------------------------

DuetModel::DuetModel(const TrainConfig& cfg, const Dataset& data, const UnifiedRelationGraph& urg)
    : cfg_(cfg), data_(data), urg_(urg), local_(cfg.local), global_(cfg.global) {
  if (urg.n_users() != data.n_users() || urg.n_items() != data.n_items()) {
    throw ArgumentError("relation graph was built for a different dataset");
  }
}

std::vector<Prediction> DuetModel::forward(const ParamStore& store, std::span<const Interaction> batch,
                                           const NeighborPolicy& policy, FusionMode mode) const {
  const Vector zl = local_.forward(store, data_, batch);
  const Vector zg = global_.forward(store, urg_, batch, policy);
  std::vector<Prediction> out(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto& p = out[b];
    p.p_local = sigmoid(zl[Eigen::Index(b)]);
    p.p_global = sigmoid(zg[Eigen::Index(b)]);
    p.p_final = fuse(mode == FusionMode::kGlobalOnly ? 0.5 : p.p_local, mode == FusionMode::kLocalOnly ? 0.5 : p.p_global,
                     store);
  }
  return out;
}

double DuetModel::loss(ParamStore& store, std::span<const Interaction> batch, std::span<const std::uint8_t> labels,
                       const NeighborPolicy& policy, bool with_grad, std::vector<Prediction>* predictions) const {
  if (labels.size() != batch.size()) throw DimensionError("loss: label count differs from batch size");
  LocalBatchCache lc;
  GlobalBatchCache gc;
  const Vector zl = local_.forward(store, data_, batch, with_grad ? &lc : nullptr);
  const Vector zg = global_.forward(store, urg_, batch, policy, with_grad ? &gc : nullptr);

  const Tensor& w = store.value("fusion.w");
  const auto B = Eigen::Index(batch.size());
  std::vector<double> pf(batch.size());
  Vector dzf(B);
  if (predictions) predictions->resize(batch.size());
  for (Eigen::Index b = 0; b < B; ++b) {
    const double pl = sigmoid(zl[b]), pg = sigmoid(zg[b]);
    const double p = fuse(pl, pg, store);
    pf[std::size_t(b)] = p;
    // d(-log clamp(p))/dz vanishes where the clamp is active.
    dzf[b] = (p < kProbClamp || p > 1.0 - kProbClamp) ? 0.0 : p - labels[std::size_t(b)];
    if (predictions) (*predictions)[std::size_t(b)] = {pl, pg, p};
  }
  const double total = ce_loss(pf, labels);
  if (!with_grad) return total;

  store.begin_backward();
  Tensor& dw = store.grad("fusion.w");
  Vector dzl(B), dzg(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const double pl = sigmoid(zl[b]), pg = sigmoid(zg[b]);
    dw[0] += dzf[b] * pl;
    dw[1] += dzf[b] * pg;
    store.grad("fusion.b")[0] += dzf[b];
    dzl[b] = dzf[b] * w[0] * pl * (1 - pl);
    dzg[b] = dzf[b] * w[1] * pg * (1 - pg);
  }
  local_.backward(store, lc, dzl);
  global_.backward(store, gc, dzg);
  return total;
}

// ---------------------------------------------------------------------------

std::string format_log(std::span<const EpochLog> log) {
  std::string s = "epoch,kg_loss,ce_loss,train_auc\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f\n", e.epoch, e.kg_loss, e.ce_loss, e.train_auc);
    s += buf;
  }
  return s;
}

TrainResult train(const Dataset& data, const UnifiedRelationGraph& urg, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  TrainResult result{init_duet_params(cfg, data, urg), {}};
  ParamStore& store = result.params;
  const DuetModel model(cfg, data, urg);
  const AdamConfig adam = cfg.adam();

  std::vector<Interaction> positives;
  for (const auto& e : data.train)
    if (e.label) positives.push_back({e.user, e.item});
  const InteractionIndex train_index(data.n_users(), positives);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochLog entry;
    entry.epoch = epoch;

    if (!urg.triples().empty()) {
      Rng kg_rng(substream_seed(cfg.seed, "kg-corruption", epoch));
      entry.kg_loss = kg_train_epoch(store, urg, cfg.gamma, cfg.batch_size, adam, kg_rng) / double(urg.triples().size());
    }

    auto examples =
        sample_negatives(positives, train_index, data.n_items(), cfg.neg_ratio, substream_seed(cfg.seed, "negatives", epoch))
            .examples;
    Rng order_rng(substream_seed(cfg.seed, "batch-order", epoch));
    order_rng.shuffle(examples);

    std::vector<double> scores;
    std::vector<std::uint8_t> all_labels;
    double ce_total = 0;
    std::vector<Interaction> batch;
    std::vector<std::uint8_t> labels;
    std::vector<Prediction> preds;
    for (std::size_t start = 0, step = 0; start < examples.size(); start += cfg.batch_size, ++step) {
      batch.clear();
      labels.clear();
      for (std::size_t i = start; i < std::min(examples.size(), start + cfg.batch_size); ++i) {
        batch.push_back({examples[i].user, examples[i].item});
        labels.push_back(examples[i].label);
      }
      const double loss =
          model.loss(store, batch, labels, NeighborPolicy::training(cfg.global, cfg.seed, epoch, step), true, &preds);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite CE loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(step) +
                           " (examples " + std::to_string(start) + ".." + std::to_string(start + batch.size() - 1) + ")");
      }
      adam_step(store, adam);
      ce_total += loss;
      for (std::size_t b = 0; b < preds.size(); ++b) scores.push_back(preds[b].p_final), all_labels.push_back(labels[b]);
    }
    entry.ce_loss = examples.empty() ? 0.0 : ce_total / double(examples.size());
    try {
      entry.train_auc = auc(scores, all_labels);
    } catch (const MetricError&) {
      entry.train_auc = std::nan("");
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

// ---------------------------------------------------------------------------

std::vector<Prediction> predict_pairs(const ParamStore& store, const Dataset& data, const UnifiedRelationGraph& urg,
                                      const TrainConfig& cfg, std::span<const Interaction> pairs, FusionMode mode) {
  const DuetModel model(cfg, data, urg);
  const auto policy = NeighborPolicy::evaluation(cfg.global, cfg.seed);
  constexpr std::size_t kChunk = 256;
  std::vector<Prediction> out;
  out.reserve(pairs.size());
  for (std::size_t start = 0; start < pairs.size(); start += kChunk) {
    const auto part = model.forward(store, pairs.subspan(start, std::min(kChunk, pairs.size() - start)), policy, mode);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

Prediction predict(const std::string& user_id, const std::string& item_id, const ParamStore& store,
                   const Dataset& data, const UnifiedRelationGraph& urg, const TrainConfig& cfg) {
  const Interaction pair{data.users.at(user_id, "user"), data.items.at(item_id, "item")};
  return predict_pairs(store, data, urg, cfg, std::span(&pair, 1)).front();
}

std::vector<ScoredExample> score_examples(const ParamStore& store, const Dataset& data,
                                          const UnifiedRelationGraph& urg, const TrainConfig& cfg,
                                          std::span<const LabeledExample> examples, FusionMode mode) {
  std::vector<Interaction> pairs;
  for (const auto& e : examples) pairs.push_back({e.user, e.item});
  const auto preds = predict_pairs(store, data, urg, cfg, pairs, mode);
  std::vector<ScoredExample> out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    out.push_back({examples[i].user, examples[i].item, examples[i].label, preds[i].p_final});
  }
  return out;
}

MetricsReport evaluate(const ParamStore& store, const Dataset& data, const UnifiedRelationGraph& urg,
                       const TrainConfig& cfg, FusionMode mode) {
  MetricsReport r = compute_metrics(score_examples(store, data, urg, cfg, data.test, mode));
  r.seed = cfg.seed;
  return r;
}

}  // namespace duet
