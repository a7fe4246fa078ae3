#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "duet/evalkit.hpp"
#include "duet/global_model.hpp"
#include "duet/local_model.hpp"
#include "duet/numkit/adam.hpp"

namespace duet {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  double gamma = 1.0;
  std::size_t neg_ratio = 1;
  std::uint64_t seed = 7;
  LocalConfig local;
  GlobalConfig global;

  void validate() const;
  AdamConfig adam() const;
};

/// Which sub-model probabilities reach the fusion layer; a disabled one is pinned to 0.5.
enum class FusionMode { kDuet, kLocalOnly, kGlobalOnly };

/// sigmoid(w . [p_l, p_g] + b) with `fusion.w` [2] and `fusion.b` [1].
double fuse(double p_local, double p_global, const ParamStore& store);

inline constexpr double kProbClamp = 1e-12;
/// -sum R log p + (1-R) log(1-p), p clamped to [1e-12, 1-1e-12].
double ce_loss(std::span<const double> probs, std::span<const std::uint8_t> labels);

/// Registers `fusion.w` = (1, 1) and `fusion.b` = -1.
void init_fusion_params(ParamStore& store);

/// All `local.*`, `global.*` and `fusion.*` tensors, drawn from the "init" sub-stream of cfg.seed.
ParamStore init_duet_params(const TrainConfig& cfg, const Dataset& data, const UnifiedRelationGraph& urg);

struct Prediction {
  double p_local = 0;
  double p_global = 0;
  double p_final = 0;
};

/// Forward (and optionally backward) of the joint CE objective on one batch.
class DuetModel {
 public:
  DuetModel(const TrainConfig& cfg, const Dataset& data, const UnifiedRelationGraph& urg);

  std::vector<Prediction> forward(const ParamStore& store, std::span<const Interaction> batch,
                                  const NeighborPolicy& policy, FusionMode mode = FusionMode::kDuet) const;
  /// Returns the summed CE loss; when `predictions` is given, fills it with the batch outputs.
  /// With `with_grad`, gradients of every tensor are reset and accumulated.
  double loss(ParamStore& store, std::span<const Interaction> batch, std::span<const std::uint8_t> labels,
              const NeighborPolicy& policy, bool with_grad, std::vector<Prediction>* predictions = nullptr) const;

  const Dataset& data() const { return data_; }
  const UnifiedRelationGraph& urg() const { return urg_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  TrainConfig cfg_;
  const Dataset& data_;
  const UnifiedRelationGraph& urg_;
  LocalModel local_;
  GlobalModel global_;
};

struct EpochLog {
  std::size_t epoch = 0;
  double kg_loss = 0;
  double ce_loss = 0;
  double train_auc = 0;
};

/// `epoch,kg_loss,ce_loss,train_auc` with six decimals.
std::string format_log(std::span<const EpochLog> log);

struct TrainResult {
  ParamStore params;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Alternates a margin-loss pass over graph triples (embedding tensors only)
/// with a CE pass over train positives plus freshly drawn negatives (all tensors).
TrainResult train(const Dataset& data, const UnifiedRelationGraph& urg, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Frozen-parameter scores with the deterministic evaluation neighbourhood.
std::vector<Prediction> predict_pairs(const ParamStore& store, const Dataset& data, const UnifiedRelationGraph& urg,
                                      const TrainConfig& cfg, std::span<const Interaction> pairs,
                                      FusionMode mode = FusionMode::kDuet);
/// Looks both ids up (LookupError naming the id if unknown).
Prediction predict(const std::string& user_id, const std::string& item_id, const ParamStore& store,
                   const Dataset& data, const UnifiedRelationGraph& urg, const TrainConfig& cfg);

/// Scores every test example with p_f (or an ablation) and computes all metrics.
MetricsReport evaluate(const ParamStore& store, const Dataset& data, const UnifiedRelationGraph& urg,
                       const TrainConfig& cfg, FusionMode mode = FusionMode::kDuet);
std::vector<ScoredExample> score_examples(const ParamStore& store, const Dataset& data,
                                          const UnifiedRelationGraph& urg, const TrainConfig& cfg,
                                          std::span<const LabeledExample> examples,
                                          FusionMode mode = FusionMode::kDuet);

}  // namespace duet
