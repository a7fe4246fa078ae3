#pragma once

#include <span>
#include <vector>

#include "duet/dataio.hpp"
#include "duet/numkit/dense.hpp"
#include "duet/numkit/param_store.hpp"

namespace duet {

struct LocalConfig {
  /// Word embedding width; the CNN uses as many filters.
  std::size_t dim_word = 128;
  /// Words per convolution window (tri-gram).
  std::size_t window = 3;
  /// Width of item embeddings and of the attention and head hidden layers.
  std::size_t dim_local = 128;
  /// Most recent history items attended over.
  std::size_t max_history = 32;

  std::size_t num_filters() const { return dim_word; }
  void validate() const;
};

/// Registers `local.*` tensors:
///   word_emb [V,d] (row 0 = PAD, held at zero)  cnn.W [q,h,d]  cnn.b [q]
///   kee.{W1,b1,W2,b2}  han.{W1,b1,W2,b2}  head.{W1,b1,W2,b2}  default_user [d_local]
void init_local_params(ParamStore& store, const LocalConfig& cfg, std::size_t vocab_size, Rng& rng);

// Single-instance forward operations ---------------------------------------

/// Max-pooled convolution of one token sequence (padded to the window size with PAD).
Vector cnn_encode(std::span<const TokenId> tokens, const ParamStore& store, const LocalConfig& cfg);

/// s_i = H(CNN(title) ++ CNN(description)).
Vector kee_encode(const ItemText& text, const ParamStore& store, const LocalConfig& cfg);

/// Attention over history rows against a candidate; masked slots (mask[j] == false) get weight 0.
/// An empty mask means all slots are real.
Vector han_weights(const Matrix& history, const Vector& candidate, const ParamStore& store,
                   std::span<const bool> mask = {});

/// sum_k weights[k] * history.row(k).
Vector local_user_embedding(const Matrix& history, const Vector& weights);

double local_predict(const Vector& user, const Vector& item, const ParamStore& store);

/// History of `user` for scoring `candidate`: most recent train items, candidate removed.
std::vector<Index> history_for(const Dataset& data, Index user, Index candidate, std::size_t max_history);

// Batched training path ----------------------------------------------------

struct CnnCache {
  std::vector<TokenId> tokens;
  Matrix windows;                    // [positions, h*d]
  std::vector<Eigen::Index> argmax;  // per filter
};

struct LocalBatchCache {
  std::vector<Index> items;  // unique items, row order of `item_emb`
  std::vector<CnnCache> title_cnn;
  std::vector<CnnCache> desc_cnn;
  MlpCache kee;
  Matrix item_emb;
  std::vector<std::size_t> candidate_row;
  std::vector<std::vector<std::size_t>> history_rows;
  MlpCache han;
  std::vector<std::size_t> han_offset;
  std::vector<Vector> alpha;
  Matrix user_emb;
  MlpCache head;
};

class LocalModel {
 public:
  explicit LocalModel(LocalConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  /// Pre-sigmoid logits of p^l for each pair.
  Vector forward(const ParamStore& store, const Dataset& data, std::span<const Interaction> batch,
                 LocalBatchCache* cache = nullptr) const;

  /// Accumulates parameter gradients given dL/dlogit per pair.
  void backward(ParamStore& store, const LocalBatchCache& cache, const Vector& dlogits) const;

  const LocalConfig& config() const { return cfg_; }

 private:
  LocalConfig cfg_;
};

}  // namespace duet
