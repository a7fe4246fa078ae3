#include "duet/global_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace duet {

namespace {

const Mlp kAttn("global.attn");
const Mlp kHead("global.head");

}  // namespace

void GlobalConfig::validate() const {
  if (dim_entity == 0 || sample_size == 0 || eval_neighbor_cap == 0) {
    throw ConfigError("global model sizes must be positive");
  }
}

// ---------------------------------------------------------------------------

void UnifiedRelationGraph::add_triple(const Triple& t) {
  if (!triple_set_.insert(t).second) return;
  triples_.push_back(t);
  adjacency_[t.head].push_back({t.relation, t.tail});
  if (t.tail != t.head) adjacency_[t.tail].push_back({t.relation, t.head});
}

UnifiedRelationGraph UnifiedRelationGraph::from_triples(std::size_t n_entities, std::size_t n_relations,
                                                        std::span<const Triple> triples) {
  UnifiedRelationGraph g;
  for (std::size_t e = 0; e < n_entities; ++e) g.entity_names_.push_back("e" + std::to_string(e));
  for (std::size_t r = 0; r < n_relations; ++r) g.relation_names_.push_back("r" + std::to_string(r));
  g.adjacency_.resize(n_entities);
  for (const auto& t : triples) {
    if (t.head >= n_entities || t.tail >= n_entities || t.relation >= n_relations) {
      throw ArgumentError("triple index out of range");
    }
    g.add_triple(t);
  }
  return g;
}

UnifiedRelationGraph build_urg(const Dataset& data, std::span<const KgTriple> kg) {
  UnifiedRelationGraph g;
  g.n_users_ = data.n_users();
  g.n_items_ = data.n_items();
  g.entity_names_ = data.users.names();
  g.entity_names_.insert(g.entity_names_.end(), data.items.names().begin(), data.items.names().end());

  std::set<std::string> entities, relations;
  for (const auto& t : kg) {
    for (const auto* id : {&t.head, &t.tail}) {
      if (data.items.find(*id)) continue;
      if (data.removed_items.count(*id)) throw LinkageError("KG triple references unlinked item '" + *id + "'");
      entities.insert(*id);
    }
    relations.insert(t.relation);
  }
  std::map<std::string, Index> entity_index, relation_index;
  for (const auto& e : entities) {
    entity_index[e] = Index(g.entity_names_.size());
    g.entity_names_.push_back(e);
  }
  for (const auto& r : relations) {
    relation_index[r] = Index(g.relation_names_.size());
    g.relation_names_.push_back(r);
  }
  g.relation_names_.push_back("Interact");
  g.adjacency_.resize(g.entity_names_.size());

  auto resolve = [&](const std::string& id) {
    if (auto item = data.items.find(id)) return g.item_entity(*item);
    return entity_index.at(id);
  };
  for (const auto& t : kg) g.add_triple({resolve(t.head), relation_index.at(t.relation), resolve(t.tail)});
  for (const auto& e : data.train) {
    if (e.label) g.add_triple({g.user_entity(e.user), g.interact_relation(), g.item_entity(e.item)});
  }
  return g;
}

void init_global_params(ParamStore& store, const GlobalConfig& cfg, std::size_t n_entities, std::size_t n_relations,
                        Rng& rng) {
  cfg.validate();
  const std::size_t k = cfg.dim_entity;
  store.add("global.ent_emb", embedding_uniform(n_entities, k, rng));
  store.add("global.rel_emb", embedding_uniform(n_relations, k, rng));
  Tensor proj({n_relations, k, k});
  for (std::size_t r = 0; r < n_relations; ++r) proj.slab(r) = xavier_uniform(k, k, rng).matrix();
  store.add("global.proj.M", std::move(proj));
  Mlp::init(store, "global.attn", 2 * k, k, 1, rng);
  store.add("global.agg.W3", xavier_uniform(k, k, rng));
  store.add("global.agg.b", Tensor({k}));
  store.add("global.agg.W6", xavier_uniform(2 * k, k, rng));
  store.add("global.agg.null", Tensor({k}, embedding_uniform(1, k, rng).values()));
  Mlp::init(store, "global.head", 2 * k, k, 1, rng);
}

// ---------------------------------------------------------------------------

namespace {

RowVector translation_residual(const Triple& t, const ParamStore& store) {
  const Tensor& E = store.value("global.ent_emb");
  const Tensor& R = store.value("global.rel_emb");
  const Tensor& M = store.value("global.proj.M");
  if (t.head >= E.dim(0) || t.tail >= E.dim(0) || t.relation >= R.dim(0)) {
    throw LookupError("triple index out of range");
  }
  return (E.row(t.head) - E.row(t.tail)) * M.slab(t.relation) + R.row(t.relation);
}

void accumulate_score_grad(const Triple& t, double coeff, ParamStore& store) {
  const RowVector v = translation_residual(t, store);
  Param& E = store.at("global.ent_emb");
  Param& R = store.at("global.rel_emb");
  Param& M = store.at("global.proj.M");
  const RowVector dv = 2.0 * coeff * v;
  const RowVector dproj = dv * M.value.slab(t.relation).transpose();
  E.grad.row(t.head) += dproj;
  E.grad.row(t.tail) -= dproj;
  R.grad.row(t.relation) += dv;
  M.grad.slab(t.relation).noalias() += (E.value.row(t.head) - E.value.row(t.tail)).transpose() * dv;
}

}  // namespace

double transr_score(const Triple& t, const ParamStore& store) { return translation_residual(t, store).squaredNorm(); }

Triple corrupt_triple(const Triple& t, const UnifiedRelationGraph& urg, Rng& rng) {
  if (urg.n_entities() < 2) throw SamplingError("corrupt_triple needs at least two entities");
  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Triple c = t;
    const auto e = Index(rng.uniform_int(urg.n_entities()));
    (rng.coin() ? c.head : c.tail) = e;
    if (!urg.contains(c)) return c;
  }
  throw SamplingError("no corruption found for triple (" + std::to_string(t.head) + "," +
                      std::to_string(t.relation) + "," + std::to_string(t.tail) + ") after 100 draws");
}

double kg_margin_loss(std::span<const TriplePair> batch, double gamma, const ParamStore& store) {
  if (!(gamma > 0)) throw ArgumentError("margin gamma must be > 0");
  double loss = 0;
  for (const auto& [pos, neg] : batch) loss += std::max(0.0, transr_score(pos, store) + gamma - transr_score(neg, store));
  return loss;
}

double kg_margin_loss_backward(std::span<const TriplePair> batch, double gamma, ParamStore& store) {
  if (!(gamma > 0)) throw ArgumentError("margin gamma must be > 0");
  double loss = 0;
  for (const auto& [pos, neg] : batch) {
    const double hinge = transr_score(pos, store) + gamma - transr_score(neg, store);
    if (hinge <= 0) continue;
    loss += hinge;
    accumulate_score_grad(pos, 1.0, store);
    accumulate_score_grad(neg, -1.0, store);
  }
  return loss;
}

void clip_kg_embeddings(ParamStore& store, std::span<const TriplePair> batch) {
  Tensor& E = store.value("global.ent_emb");
  auto clip = [&](Index e) {
    auto row = E.row(e);
    const double n = row.norm();
    if (n > 1.0) row /= n;
  };
  for (const auto& [pos, neg] : batch) {
    for (const Triple* t : {&pos, &neg}) {
      clip(t->head);
      clip(t->tail);
    }
  }
}

double kg_train_epoch(ParamStore& store, const UnifiedRelationGraph& urg, double gamma, std::size_t batch_size,
                      const AdamConfig& adam, Rng& rng) {
  if (batch_size == 0) throw ArgumentError("kg_train_epoch: batch_size must be positive");
  std::vector<Triple> order(urg.triples().begin(), urg.triples().end());
  rng.shuffle(order);
  double total = 0;
  std::vector<TriplePair> batch;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    batch.clear();
    for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
      batch.emplace_back(order[i], corrupt_triple(order[i], urg, rng));
    }
    store.begin_backward(kKgParamNames);
    const double loss = kg_margin_loss_backward(batch, gamma, store);
    if (!std::isfinite(loss)) {
      throw NumericError("non-finite margin loss in triple batch starting at " + std::to_string(start));
    }
    total += loss;
    adam_step(store, adam, kKgParamNames);
    clip_kg_embeddings(store, batch);
  }
  return total;
}

// ---------------------------------------------------------------------------

namespace {

RowVector embed_entity(const ParamStore& store, Index h, std::vector<Neighbor> neighbors, EntityEmbedCache* cache) {
  const Tensor& E = store.value("global.ent_emb");
  if (h >= E.dim(0)) throw LookupError("entity index " + std::to_string(h) + " out of range");
  const auto k = Eigen::Index(E.dim(1));

  Vector pi;
  RowVector aggregated;
  MlpCache attn;
  if (neighbors.empty()) {
    pi = Vector::Ones(1);
    aggregated = store.value("global.agg.null").row_vector();
  } else {
    Matrix pairs(Eigen::Index(neighbors.size()), 2 * k);
    for (std::size_t j = 0; j < neighbors.size(); ++j) pairs.row(Eigen::Index(j)) << E.row(h), E.row(neighbors[j].entity);
    pi = softmax(kAttn.forward(store, pairs, cache ? &attn : nullptr).col(0));
    aggregated = RowVector::Zero(k);
    for (std::size_t j = 0; j < neighbors.size(); ++j) aggregated += pi[Eigen::Index(j)] * E.row(neighbors[j].entity);
  }
  RowVector neighborhood_pre = aggregated * store.value("global.agg.W3").matrix() + store.value("global.agg.b").row_vector();
  RowVector concat(2 * k);
  concat << E.row(h), leaky_relu(neighborhood_pre);
  RowVector out_pre = concat * store.value("global.agg.W6").matrix();
  RowVector out = leaky_relu(out_pre);
  if (cache) {
    cache->entity = h;
    cache->neighbors = std::move(neighbors);
    cache->attn = std::move(attn);
    cache->pi = std::move(pi);
    cache->aggregated = std::move(aggregated);
    cache->neighborhood_pre = std::move(neighborhood_pre);
    cache->concat = std::move(concat);
    cache->out_pre = std::move(out_pre);
  }
  return out;
}

void embed_entity_backward(ParamStore& store, const EntityEmbedCache& c, const RowVector& dout) {
  Param& E = store.at("global.ent_emb");
  Param& W3 = store.at("global.agg.W3");
  Param& b = store.at("global.agg.b");
  Param& W6 = store.at("global.agg.W6");
  const auto k = Eigen::Index(E.value.dim(1));

  const RowVector dout_pre = dout.cwiseProduct(leaky_relu_grad(c.out_pre));
  W6.grad.matrix().noalias() += c.concat.transpose() * dout_pre;
  const RowVector dconcat = dout_pre * W6.value.matrix().transpose();
  E.grad.row(c.entity) += dconcat.head(k);
  const RowVector dpre = dconcat.tail(k).cwiseProduct(leaky_relu_grad(c.neighborhood_pre));
  W3.grad.matrix().noalias() += c.aggregated.transpose() * dpre;
  b.grad.row_vector() += dpre;
  const RowVector dagg = dpre * W3.value.matrix().transpose();

  if (c.neighbors.empty()) {
    store.at("global.agg.null").grad.row_vector() += dagg;
    return;
  }
  Vector dpi(Eigen::Index(c.neighbors.size()));
  for (std::size_t j = 0; j < c.neighbors.size(); ++j) {
    const Index t = c.neighbors[j].entity;
    dpi[Eigen::Index(j)] = dagg.dot(E.value.row(t));
    E.grad.row(t) += c.pi[Eigen::Index(j)] * dagg;
  }
  const Matrix dpairs = kAttn.backward(store, c.attn, Matrix(softmax_backward(c.pi, dpi)));
  for (std::size_t j = 0; j < c.neighbors.size(); ++j) {
    E.grad.row(c.entity) += dpairs.row(Eigen::Index(j)).head(k);
    E.grad.row(c.neighbors[j].entity) += dpairs.row(Eigen::Index(j)).tail(k);
  }
}

}  // namespace

Vector attention_weights(Index head, std::span<const Neighbor> neighbors, const ParamStore& store) {
  if (neighbors.empty()) throw ArgumentError("attention_weights needs at least one neighbor");
  const Tensor& E = store.value("global.ent_emb");
  const auto k = Eigen::Index(E.dim(1));
  Matrix pairs(Eigen::Index(neighbors.size()), 2 * k);
  for (std::size_t j = 0; j < neighbors.size(); ++j) pairs.row(Eigen::Index(j)) << E.row(head), E.row(neighbors[j].entity);
  return softmax(kAttn.forward(store, pairs).col(0));
}

Vector neighbor_aggregate(std::span<const Neighbor> neighbors, const Vector& pi, const ParamStore& store) {
  const Tensor& E = store.value("global.ent_emb");
  RowVector agg;
  if (neighbors.empty()) {
    agg = store.value("global.agg.null").row_vector();
  } else {
    if (std::size_t(pi.size()) != neighbors.size()) throw DimensionError("neighbor_aggregate: weight count mismatch");
    agg = RowVector::Zero(Eigen::Index(E.dim(1)));
    for (std::size_t j = 0; j < neighbors.size(); ++j) agg += pi[Eigen::Index(j)] * E.row(neighbors[j].entity);
  }
  return leaky_relu(agg * store.value("global.agg.W3").matrix() + store.value("global.agg.b").row_vector()).transpose();
}

Vector concat_aggregate(const Vector& entity, const Vector& neighborhood, const ParamStore& store) {
  RowVector x(entity.size() + neighborhood.size());
  x << entity.transpose(), neighborhood.transpose();
  return leaky_relu(x * store.value("global.agg.W6").matrix()).transpose();
}

std::vector<Neighbor> sample_neighbors(const UnifiedRelationGraph& urg, Index entity, std::size_t limit,
                                       std::uint64_t seed, Index exclude) {
  std::vector<Neighbor> pool;
  for (const auto& n : urg.neighbors(entity))
    if (n.entity != exclude) pool.push_back(n);
  if (pool.size() <= limit) return pool;
  Rng rng(substream_seed(seed, "entity", entity));
  for (std::size_t i = 0; i < limit; ++i) std::swap(pool[i], pool[i + rng.uniform_int(pool.size() - i)]);
  pool.resize(limit);
  return pool;
}

Vector global_embed(Index entity, const UnifiedRelationGraph& urg, const ParamStore& store, std::size_t sample_size,
                    std::uint64_t seed, Index exclude) {
  const auto neighbors = sample_neighbors(urg, entity, sample_size, seed, exclude);
  const Vector e_h = store.value("global.ent_emb").row(entity).transpose();
  const Vector pi = neighbors.empty() ? Vector::Ones(1) : attention_weights(entity, neighbors, store);
  return concat_aggregate(e_h, neighbor_aggregate(neighbors, pi, store), store);
}

double global_predict(const Vector& user, const Vector& item, const ParamStore& store) {
  Matrix x(1, user.size() + item.size());
  x << user.transpose(), item.transpose();
  return sigmoid(kHead.forward(store, x)(0, 0));
}

// ---------------------------------------------------------------------------

NeighborPolicy NeighborPolicy::evaluation(const GlobalConfig& cfg, std::uint64_t seed) {
  return {cfg.eval_neighbor_cap, substream_seed(seed, "eval-neighbors")};
}

NeighborPolicy NeighborPolicy::training(const GlobalConfig& cfg, std::uint64_t seed, std::size_t epoch,
                                        std::size_t step) {
  return {cfg.sample_size, substream_seed(seed, "neighbor-sampling", epoch, step)};
}

Vector GlobalModel::forward(const ParamStore& store, const UnifiedRelationGraph& urg, std::span<const Interaction> batch,
                            const NeighborPolicy& policy, GlobalBatchCache* cache) const {
  GlobalBatchCache local;
  GlobalBatchCache& c = cache ? *cache : local;
  c = GlobalBatchCache{};
  const auto k = Eigen::Index(cfg_.dim_entity);
  const auto B = Eigen::Index(batch.size());
  c.users.resize(batch.size());
  c.items.resize(batch.size());
  c.user_emb.resize(B, k);
  c.item_emb.resize(B, k);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].user >= urg.n_users() || batch[b].item >= urg.n_items()) {
      throw LookupError("pair (" + std::to_string(batch[b].user) + "," + std::to_string(batch[b].item) +
                        ") outside the relation graph");
    }
    const Index u = urg.user_entity(batch[b].user);
    const Index m = urg.item_entity(batch[b].item);
    c.user_emb.row(Eigen::Index(b)) =
        embed_entity(store, u, sample_neighbors(urg, u, policy.limit, policy.seed, m), &c.users[b]);
    c.item_emb.row(Eigen::Index(b)) =
        embed_entity(store, m, sample_neighbors(urg, m, policy.limit, policy.seed, u), &c.items[b]);
  }
  Matrix head_in(B, 2 * k);
  head_in << c.user_emb, c.item_emb;
  return kHead.forward(store, head_in, &c.head).col(0);
}

void GlobalModel::backward(ParamStore& store, const GlobalBatchCache& c, const Vector& dlogits) const {
  const auto k = Eigen::Index(cfg_.dim_entity);
  if (std::size_t(dlogits.size()) != c.users.size()) throw DimensionError("global backward: gradient count mismatch");
  const Matrix dhead_in = kHead.backward(store, c.head, Matrix(dlogits));
  for (std::size_t b = 0; b < c.users.size(); ++b) {
    embed_entity_backward(store, c.users[b], dhead_in.row(Eigen::Index(b)).head(k));
    embed_entity_backward(store, c.items[b], dhead_in.row(Eigen::Index(b)).tail(k));
  }
}

}  // namespace duet
