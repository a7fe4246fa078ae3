#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "duet/dataio.hpp"
#include "duet/numkit/adam.hpp"
#include "duet/numkit/dense.hpp"
#include "duet/numkit/param_store.hpp"

namespace duet {

struct GlobalConfig {
  /// Entity and relation embedding width (projections are square).
  std::size_t dim_entity = 50;
  /// Neighbors sampled per entity per training step.
  std::size_t sample_size = 8;
  /// Neighborhood cap at evaluation time.
  std::size_t eval_neighbor_cap = 64;

  void validate() const;
};

struct Triple {
  Index head = 0;
  Index relation = 0;
  Index tail = 0;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    return std::size_t(mix64((std::uint64_t(t.head) << 32 | t.tail) ^ mix64(t.relation)));
  }
};

struct Neighbor {
  Index relation = 0;
  Index entity = 0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// KG triples merged with (user, Interact, item) for every train positive.
/// Entity ids: users [0, U), items [U, U+I), other KG entities after that.
/// Relations: KG relation names sorted, then Interact last.
class UnifiedRelationGraph {
 public:
  std::size_t n_users() const { return n_users_; }
  std::size_t n_items() const { return n_items_; }
  std::size_t n_entities() const { return entity_names_.size(); }
  std::size_t n_relations() const { return relation_names_.size(); }

  Index user_entity(Index user) const { return user; }
  Index item_entity(Index item) const { return Index(n_users_) + item; }
  Index interact_relation() const { return Index(relation_names_.size() - 1); }

  const std::vector<Triple>& triples() const { return triples_; }
  bool contains(const Triple& t) const { return triple_set_.count(t) != 0; }
  /// Every triple is listed at both endpoints, in triple order.
  std::span<const Neighbor> neighbors(Index entity) const { return adjacency_.at(entity); }

  const std::string& entity_name(Index e) const { return entity_names_.at(e); }
  const std::string& relation_name(Index r) const { return relation_names_.at(r); }

  /// Graph over `n_entities` anonymous entities and `n_relations` relations.
  static UnifiedRelationGraph from_triples(std::size_t n_entities, std::size_t n_relations,
                                           std::span<const Triple> triples);

 private:
  friend UnifiedRelationGraph build_urg(const Dataset&, std::span<const KgTriple>);

  void add_triple(const Triple& t);

  std::size_t n_users_ = 0;
  std::size_t n_items_ = 0;
  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::vector<Triple> triples_;
  std::unordered_set<Triple, TripleHash> triple_set_;
  std::vector<std::vector<Neighbor>> adjacency_;
};

/// Item ids resolve to item entities; ids listed in `data.removed_items` are
/// linkage errors; any other id becomes a KG entity.
UnifiedRelationGraph build_urg(const Dataset& data, std::span<const KgTriple> kg);
inline UnifiedRelationGraph build_urg(const Dataset& data) { return build_urg(data, data.kg); }

/// Registers `global.*` tensors:
///   ent_emb [E,k]  rel_emb [R,k]  proj.M [R,k,k]  attn.{W1,b1,W2,b2}
///   agg.W3 [k,k]  agg.b [k]  agg.W6 [2k,k]  agg.null [k]  head.{W1,b1,W2,b2}
void init_global_params(ParamStore& store, const GlobalConfig& cfg, std::size_t n_entities, std::size_t n_relations,
                        Rng& rng);

// TransR --------------------------------------------------------------------

/// ||e_h M_r + e_r - e_t M_r||^2.
double transr_score(const Triple& t, const ParamStore& store);

/// Replaces head or tail (fair coin) with a uniform entity so that the result is not a graph triple.
Triple corrupt_triple(const Triple& t, const UnifiedRelationGraph& urg, Rng& rng);

using TriplePair = std::pair<Triple, Triple>;

/// sum max(0, g(true) + gamma - g(corrupted)).
double kg_margin_loss(std::span<const TriplePair> batch, double gamma, const ParamStore& store);

/// Same loss; accumulates gradients of ent_emb, rel_emb and proj.M.
double kg_margin_loss_backward(std::span<const TriplePair> batch, double gamma, ParamStore& store);

/// Rescales every entity row named in the batch to L2 norm <= 1. Relation
/// vectors stay free: a unit-bounded translation cannot separate a two-step
/// chain from its shortcut by a full margin.
void clip_kg_embeddings(ParamStore& store, std::span<const TriplePair> batch);

/// Tensors touched by the margin loss.
inline const std::vector<std::string> kKgParamNames{"global.ent_emb", "global.proj.M", "global.rel_emb"};

/// One shuffled pass of margin-loss mini-batches over every graph triple with
/// fresh corruptions, Adam on the embedding tensors only, clipping after each
/// step. Returns the summed loss.
double kg_train_epoch(ParamStore& store, const UnifiedRelationGraph& urg, double gamma, std::size_t batch_size,
                      const AdamConfig& adam, Rng& rng);

// Knowledge-aware attention -----------------------------------------------

/// Softmax of attn MLP over [e_h ++ e_t] for each neighbor t.
Vector attention_weights(Index head, std::span<const Neighbor> neighbors, const ParamStore& store);

/// LeakyReLU(W3 * sum_t pi_t e_t + b).
Vector neighbor_aggregate(std::span<const Neighbor> neighbors, const Vector& pi, const ParamStore& store);

/// LeakyReLU(W6 * (e_h ++ e_N)).
Vector concat_aggregate(const Vector& entity, const Vector& neighborhood, const ParamStore& store);

inline constexpr Index kNoEntity = std::numeric_limits<Index>::max();

/// Neighbor set used for `entity`: the whole neighborhood when it has at most
/// `limit` entries, else `limit` entries drawn without replacement under `seed`.
/// Neighbors equal to `exclude` are dropped first.
std::vector<Neighbor> sample_neighbors(const UnifiedRelationGraph& urg, Index entity, std::size_t limit,
                                       std::uint64_t seed, Index exclude = kNoEntity);

/// One attention-aggregation hop; isolated entities aggregate the learned null neighbor.
Vector global_embed(Index entity, const UnifiedRelationGraph& urg, const ParamStore& store, std::size_t sample_size,
                    std::uint64_t seed, Index exclude = kNoEntity);

double global_predict(const Vector& user, const Vector& item, const ParamStore& store);

// Batched training path ----------------------------------------------------

/// How neighbor sets are chosen for a batch.
struct NeighborPolicy {
  std::size_t limit = 64;
  std::uint64_t seed = 0;

  static NeighborPolicy evaluation(const GlobalConfig& cfg, std::uint64_t seed);
  static NeighborPolicy training(const GlobalConfig& cfg, std::uint64_t seed, std::size_t epoch, std::size_t step);
};

struct EntityEmbedCache {
  Index entity = 0;
  std::vector<Neighbor> neighbors;  // empty: null neighbor used
  MlpCache attn;
  Vector pi;
  RowVector aggregated;
  RowVector neighborhood_pre;
  RowVector concat;
  RowVector out_pre;
};

struct GlobalBatchCache {
  std::vector<EntityEmbedCache> users;
  std::vector<EntityEmbedCache> items;
  Matrix user_emb;
  Matrix item_emb;
  MlpCache head;
};

class GlobalModel {
 public:
  explicit GlobalModel(GlobalConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  /// Pre-sigmoid logits of p^g for each pair. The pair's own Interact edge is
  /// removed from both endpoints' neighbor sets.
  Vector forward(const ParamStore& store, const UnifiedRelationGraph& urg, std::span<const Interaction> batch,
                 const NeighborPolicy& policy, GlobalBatchCache* cache = nullptr) const;

  void backward(ParamStore& store, const GlobalBatchCache& cache, const Vector& dlogits) const;

  const GlobalConfig& config() const { return cfg_; }

 private:
  GlobalConfig cfg_;
};

}  // namespace duet
