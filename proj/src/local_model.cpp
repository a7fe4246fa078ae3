#include "duet/local_model.hpp"

#include <algorithm>

namespace duet {

namespace {

const Mlp kKee("local.kee");
const Mlp kHan("local.han");
const Mlp kHead("local.head");

Vector cnn_forward(std::span<const TokenId> tokens, const ParamStore& store, std::size_t window, CnnCache* cache) {
  const Tensor& emb = store.value("local.word_emb");
  const Tensor& W = store.value("local.cnn.W");
  const Tensor& b = store.value("local.cnn.b");
  const auto d = Eigen::Index(emb.dim(1));

  std::vector<TokenId> toks(tokens.begin(), tokens.end());
  if (toks.size() < window) toks.resize(window, Vocab::kPad);
  const std::size_t positions = toks.size() - window + 1;

  Matrix windows(Eigen::Index(positions), Eigen::Index(window) * d);
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t o = 0; o < window; ++o) {
      const TokenId t = toks[p + o];
      if (t >= emb.dim(0)) throw DimensionError("token id " + std::to_string(t) + " beyond vocabulary");
      windows.row(Eigen::Index(p)).segment(Eigen::Index(o) * d, d) = emb.row(t);
    }
  }
  const Matrix responses = (windows * W.matrix().transpose()).rowwise() + b.row_vector();
  Vector pooled(responses.cols());
  std::vector<Eigen::Index> argmax(std::size_t(responses.cols()));
  for (Eigen::Index f = 0; f < responses.cols(); ++f) pooled[f] = responses.col(f).maxCoeff(&argmax[std::size_t(f)]);
  if (cache) {
    cache->tokens = std::move(toks);
    cache->windows = windows;
    cache->argmax = std::move(argmax);
  }
  return pooled;
}

/// Gradient flows only through each filter's winning window.
template <typename Derived>
void cnn_backward(ParamStore& store, const CnnCache& cache, const Eigen::MatrixBase<Derived>& dpooled,
                  std::size_t window) {
  Param& emb = store.at("local.word_emb");
  Param& W = store.at("local.cnn.W");
  Param& b = store.at("local.cnn.b");
  const auto d = Eigen::Index(emb.value.dim(1));
  b.grad.row_vector() += dpooled;
  Matrix dwindows = Matrix::Zero(cache.windows.rows(), cache.windows.cols());
  auto dW = W.grad.matrix();
  const auto Wv = W.value.matrix();
  for (Eigen::Index f = 0; f < dpooled.size(); ++f) {
    const double g = dpooled(f);
    if (g == 0.0) continue;
    const Eigen::Index p = cache.argmax[std::size_t(f)];
    dW.row(f) += g * cache.windows.row(p);
    dwindows.row(p) += g * Wv.row(f);
  }
  for (Eigen::Index p = 0; p < dwindows.rows(); ++p) {
    if (dwindows.row(p).isZero(0.0)) continue;
    for (std::size_t o = 0; o < window; ++o) {
      emb.grad.row(cache.tokens[std::size_t(p) + o]) += dwindows.row(p).segment(Eigen::Index(o) * d, d);
    }
  }
}

RowVector kee_input(const ItemText& text, const ParamStore& store, const LocalConfig& cfg, CnnCache* title_cache,
                    CnnCache* desc_cache) {
  const Vector title = cnn_forward(text.title, store, cfg.window, title_cache);
  const Vector desc = cnn_forward(text.description, store, cfg.window, desc_cache);
  RowVector x(title.size() + desc.size());
  x << title.transpose(), desc.transpose();
  return x;
}

}  // namespace

void LocalConfig::validate() const {
  if (dim_word == 0 || window == 0 || dim_local == 0 || max_history == 0) {
    throw ConfigError("local model dimensions must be positive");
  }
}

void init_local_params(ParamStore& store, const LocalConfig& cfg, std::size_t vocab_size, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.dim_word, q = cfg.num_filters(), h = cfg.window, dl = cfg.dim_local;
  Tensor emb = embedding_uniform(vocab_size, d, rng);
  emb.row(Vocab::kPad).setZero();
  store.add("local.word_emb", std::move(emb));
  Tensor conv = xavier_uniform(h * d, q, rng);
  store.add("local.cnn.W", Tensor({q, h, d}, Tensor::from_matrix(conv.matrix().transpose()).values()));
  store.add("local.cnn.b", Tensor({q}));
  Mlp::init(store, "local.kee", 2 * q, dl, dl, rng);
  Mlp::init(store, "local.han", 2 * dl, dl, 1, rng);
  Mlp::init(store, "local.head", 2 * dl, dl, 1, rng);
  Tensor user = embedding_uniform(1, dl, rng);
  store.add("local.default_user", Tensor({dl}, user.values()));
}

Vector cnn_encode(std::span<const TokenId> tokens, const ParamStore& store, const LocalConfig& cfg) {
  return cnn_forward(tokens, store, cfg.window, nullptr);
}

Vector kee_encode(const ItemText& text, const ParamStore& store, const LocalConfig& cfg) {
  const Matrix x = kee_input(text, store, cfg, nullptr, nullptr);
  return kKee.forward(store, x).row(0).transpose();
}

Vector han_weights(const Matrix& history, const Vector& candidate, const ParamStore& store, std::span<const bool> mask) {
  if (!mask.empty() && mask.size() != std::size_t(history.rows())) {
    throw DimensionError("han_weights: mask length differs from history length");
  }
  std::vector<Eigen::Index> real;
  for (Eigen::Index j = 0; j < history.rows(); ++j)
    if (mask.empty() || mask[std::size_t(j)]) real.push_back(j);
  if (real.empty()) throw ArgumentError("han_weights: no unmasked history item");

  Matrix pairs(Eigen::Index(real.size()), history.cols() + candidate.size());
  for (std::size_t r = 0; r < real.size(); ++r) {
    pairs.row(Eigen::Index(r)) << history.row(real[r]), candidate.transpose();
  }
  const Vector alpha_real = softmax(kHan.forward(store, pairs).col(0));
  Vector alpha = Vector::Zero(history.rows());
  for (std::size_t r = 0; r < real.size(); ++r) alpha[real[r]] = alpha_real[Eigen::Index(r)];
  return alpha;
}

Vector local_user_embedding(const Matrix& history, const Vector& weights) {
  if (history.rows() != weights.size()) throw DimensionError("local_user_embedding: weight count mismatch");
  return history.transpose() * weights;
}

double local_predict(const Vector& user, const Vector& item, const ParamStore& store) {
  Matrix x(1, user.size() + item.size());
  x << user.transpose(), item.transpose();
  return sigmoid(kHead.forward(store, x)(0, 0));
}

std::vector<Index> history_for(const Dataset& data, Index user, Index candidate, std::size_t max_history) {
  const auto& full = data.history.at(user);
  std::vector<Index> out;
  for (auto it = full.rbegin(); it != full.rend() && out.size() < max_history; ++it)
    if (*it != candidate) out.push_back(*it);
  std::reverse(out.begin(), out.end());
  return out;
}

Vector LocalModel::forward(const ParamStore& store, const Dataset& data, std::span<const Interaction> batch,
                           LocalBatchCache* cache) const {
  LocalBatchCache local;
  LocalBatchCache& c = cache ? *cache : local;
  c = LocalBatchCache{};
  const std::size_t dl = cfg_.dim_local;

  std::vector<std::ptrdiff_t> row_of(data.n_items(), -1);
  auto row = [&](Index item) {
    if (item >= data.n_items()) throw LookupError("item index " + std::to_string(item) + " out of range");
    if (row_of[item] < 0) {
      row_of[item] = std::ptrdiff_t(c.items.size());
      c.items.push_back(item);
    }
    return std::size_t(row_of[item]);
  };
  for (const auto& pair : batch) {
    if (pair.user >= data.n_users()) throw LookupError("user index " + std::to_string(pair.user) + " out of range");
    c.candidate_row.push_back(row(pair.item));
    std::vector<std::size_t> rows;
    for (Index h : history_for(data, pair.user, pair.item, cfg_.max_history)) rows.push_back(row(h));
    c.history_rows.push_back(std::move(rows));
  }

  // Item embeddings, one KEE pass per distinct item.
  const auto n_items = Eigen::Index(c.items.size());
  Matrix kee_in(n_items, Eigen::Index(2 * cfg_.num_filters()));
  c.title_cnn.resize(c.items.size());
  c.desc_cnn.resize(c.items.size());
  for (std::size_t r = 0; r < c.items.size(); ++r) {
    kee_in.row(Eigen::Index(r)) = kee_input(data.item_texts.at(c.items[r]), store, cfg_, &c.title_cnn[r], &c.desc_cnn[r]);
  }
  c.item_emb = kKee.forward(store, kee_in, &c.kee);

  // History attention rows [s_hist ++ s_candidate].
  std::size_t total = 0;
  for (const auto& rows : c.history_rows) {
    c.han_offset.push_back(total);
    total += rows.size();
  }
  Matrix han_in(Eigen::Index(total), Eigen::Index(2 * dl));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t j = 0; j < c.history_rows[b].size(); ++j) {
      han_in.row(Eigen::Index(c.han_offset[b] + j)) << c.item_emb.row(Eigen::Index(c.history_rows[b][j])),
          c.item_emb.row(Eigen::Index(c.candidate_row[b]));
    }
  }
  const Matrix han_logits = total ? kHan.forward(store, han_in, &c.han) : Matrix(0, 1);

  const Tensor& default_user = store.value("local.default_user");
  c.user_emb.resize(Eigen::Index(batch.size()), Eigen::Index(dl));
  c.alpha.resize(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& rows = c.history_rows[b];
    if (rows.empty()) {
      c.user_emb.row(Eigen::Index(b)) = default_user.row_vector();
      continue;
    }
    c.alpha[b] = softmax(han_logits.col(0).segment(Eigen::Index(c.han_offset[b]), Eigen::Index(rows.size())));
    RowVector e = RowVector::Zero(Eigen::Index(dl));
    for (std::size_t j = 0; j < rows.size(); ++j) e += c.alpha[b][Eigen::Index(j)] * c.item_emb.row(Eigen::Index(rows[j]));
    c.user_emb.row(Eigen::Index(b)) = e;
  }

  Matrix head_in(Eigen::Index(batch.size()), Eigen::Index(2 * dl));
  for (std::size_t b = 0; b < batch.size(); ++b)
    head_in.row(Eigen::Index(b)) << c.user_emb.row(Eigen::Index(b)), c.item_emb.row(Eigen::Index(c.candidate_row[b]));
  return kHead.forward(store, head_in, &c.head).col(0);
}

void LocalModel::backward(ParamStore& store, const LocalBatchCache& c, const Vector& dlogits) const {
  const auto dl = Eigen::Index(cfg_.dim_local);
  const std::size_t batch = c.candidate_row.size();
  if (std::size_t(dlogits.size()) != batch) throw DimensionError("local backward: gradient count mismatch");

  const Matrix dhead_in = kHead.backward(store, c.head, Matrix(dlogits));
  Matrix ditem = Matrix::Zero(c.item_emb.rows(), dl);
  Param& default_user = store.at("local.default_user");

  Matrix dhan_logits = Matrix::Zero(c.han.input.rows(), 1);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto B = Eigen::Index(b);
    ditem.row(Eigen::Index(c.candidate_row[b])) += dhead_in.row(B).tail(dl);
    const auto duser = dhead_in.row(B).head(dl);
    const auto& rows = c.history_rows[b];
    if (rows.empty()) {
      default_user.grad.row_vector() += duser;
      continue;
    }
    Vector dalpha(Eigen::Index(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const auto r = Eigen::Index(rows[j]);
      dalpha[Eigen::Index(j)] = duser.dot(c.item_emb.row(r));
      ditem.row(r) += c.alpha[b][Eigen::Index(j)] * duser;
    }
    dhan_logits.col(0).segment(Eigen::Index(c.han_offset[b]), Eigen::Index(rows.size())) =
        softmax_backward(c.alpha[b], dalpha);
  }
  if (c.han.input.rows() > 0) {
    const Matrix dhan_in = kHan.backward(store, c.han, dhan_logits);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < c.history_rows[b].size(); ++j) {
        const auto r = Eigen::Index(c.han_offset[b] + j);
        ditem.row(Eigen::Index(c.history_rows[b][j])) += dhan_in.row(r).head(dl);
        ditem.row(Eigen::Index(c.candidate_row[b])) += dhan_in.row(r).tail(dl);
      }
    }
  }

  const Matrix dkee_in = kKee.backward(store, c.kee, ditem);
  const auto q = Eigen::Index(cfg_.num_filters());
  for (std::size_t r = 0; r < c.items.size(); ++r) {
    cnn_backward(store, c.title_cnn[r], dkee_in.row(Eigen::Index(r)).head(q), cfg_.window);
    cnn_backward(store, c.desc_cnn[r], dkee_in.row(Eigen::Index(r)).tail(q), cfg_.window);
  }
}

}  // namespace duet
