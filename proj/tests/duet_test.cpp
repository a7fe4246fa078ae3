#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "duet/duet.hpp"
#include "duet/numkit/checkpoint.hpp"
#include "duet/numkit/grad_check.hpp"
#include "duet/synth.hpp"
#include "support/fixtures.hpp"

namespace duet {
namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.local.dim_word = 4;
  c.local.dim_local = 5;
  c.local.max_history = 4;
  c.global.dim_entity = 3;
  c.global.sample_size = 3;
  c.batch_size = 8;
  c.epochs = 2;
  c.lr = 0.01;
  return c;
}

struct Toy {
  Dataset data;
  UnifiedRelationGraph urg;
};

Toy toy(std::uint64_t seed = 5) {
  Dataset d = fixture::toy_dataset(8, 12, 12, seed);
  d.kg = {{"i1", "genre", "g1"}, {"i2", "genre", "g1"}, {"i3", "by", "a1"}, {"i4", "by", "a1"}};
  auto g = build_urg(d);
  return {std::move(d), std::move(g)};
}

ParamStore perturbed(const TrainConfig& cfg, const Toy& t, std::uint64_t seed) {
  ParamStore s = init_duet_params(cfg, t.data, t.urg);
  Rng rng(seed);
  for (auto& [name, p] : s)
    for (auto& v : p.value.values()) v += rng.uniform(-0.5, 0.5);
  return s;
}

TEST(Fuse, Examples) {
  ParamStore s;
  init_fusion_params(s);
  s.value("fusion.w").values() = {0, 0};
  s.value("fusion.b")[0] = 0;
  EXPECT_EQ(fuse(0.1, 0.9, s), 0.5);
  EXPECT_EQ(fuse(0.7, 0.2, s), 0.5);
  s.value("fusion.w").values() = {4, 4};
  s.value("fusion.b")[0] = -4;
  EXPECT_EQ(fuse(0.5, 0.5, s), 0.5);
}

TEST(Fuse, DefaultInitAndMonotonicity) {
  ParamStore s;
  init_fusion_params(s);
  EXPECT_EQ(s.value("fusion.w").values(), (Tensor::Storage{1, 1}));
  EXPECT_EQ(s.value("fusion.b")[0], -1);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    s.value("fusion.w").values() = {rng.uniform(0, 5), rng.uniform(0, 5)};
    const double a = rng.uniform(), b = rng.uniform(), c = rng.uniform(), d = rng.uniform();
    // a dominates c in both inputs -> fused order agrees
    const double hi_l = std::max(a, c), lo_l = std::min(a, c), hi_g = std::max(b, d), lo_g = std::min(b, d);
    EXPECT_GE(fuse(hi_l, hi_g, s), fuse(lo_l, lo_g, s));
  }
}

TEST(CeLoss, Examples) {
  const std::vector<std::uint8_t> one{1}, zero{0};
  EXPECT_LT(ce_loss(std::vector<double>{1 - 1e-12}, one), 1e-11);
  EXPECT_NEAR(ce_loss(std::vector<double>{0.5}, one), 0.6931471805599453, 1e-15);
  EXPECT_NEAR(ce_loss(std::vector<double>{0.5}, zero), 0.6931471805599453, 1e-15);
  EXPECT_NEAR(ce_loss(std::vector<double>{1e-12}, one), 27.631021115928547, 1e-9);
  EXPECT_NEAR(ce_loss(std::vector<double>{0.0}, one), 27.631021115928547, 1e-9);
  EXPECT_TRUE(std::isfinite(ce_loss(std::vector<double>{1.0}, zero)));
  EXPECT_NEAR(ce_loss(std::vector<double>{0.5, 0.5, 0.5}, std::vector<std::uint8_t>{1, 0, 1}), 3 * std::log(2.0), 1e-14);
}

double check_full_gradient(std::size_t batch_size, std::uint64_t seed) {
  const TrainConfig cfg = small_config();
  const Toy t = toy(seed);
  ParamStore s = perturbed(cfg, t, seed + 1);
  const DuetModel model(cfg, t.data, t.urg);
  std::vector<Interaction> batch;
  std::vector<std::uint8_t> labels;
  for (std::size_t b = 0; b < batch_size; ++b) {
    batch.push_back({Index(b % t.data.n_users()), Index((3 * b + 1) % t.data.n_items())});
    labels.push_back(std::uint8_t(b % 2));
  }
  const auto policy = NeighborPolicy::training(cfg.global, cfg.seed, 0, 0);
  LossFunction f = [&](ParamStore& st, bool with_grad) { return model.loss(st, batch, labels, policy, with_grad); };
  const auto r = grad_check_detailed(f, s, 1e-4, 30, seed);
  EXPECT_GT(r.coordinates_checked, 100u);
  return r.max_relative_error;
}

TEST(DuetModel, GradientCheckFourExamples) { EXPECT_LT(check_full_gradient(4, 11), 1e-4); }
TEST(DuetModel, GradientCheckEightExamples) { EXPECT_LT(check_full_gradient(8, 12), 1e-4); }

TEST(DuetModel, AblationPinsOtherProbability) {
  const TrainConfig cfg = small_config();
  const Toy t = toy();
  const ParamStore s = perturbed(cfg, t, 3);
  const std::vector<Interaction> pairs{{1, 2}, {3, 4}};
  const auto full = predict_pairs(s, t.data, t.urg, cfg, pairs);
  const auto local = predict_pairs(s, t.data, t.urg, cfg, pairs, FusionMode::kLocalOnly);
  const auto global = predict_pairs(s, t.data, t.urg, cfg, pairs, FusionMode::kGlobalOnly);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_EQ(full[i].p_final, fuse(full[i].p_local, full[i].p_global, s));
    EXPECT_EQ(local[i].p_final, fuse(full[i].p_local, 0.5, s));
    EXPECT_EQ(global[i].p_final, fuse(0.5, full[i].p_global, s));
  }
}

TEST(Predict, RangesRepeatabilityAndLookup) {
  const TrainConfig cfg = small_config();
  const Toy t = toy();
  const ParamStore s = perturbed(cfg, t, 4);
  const Prediction a = predict("u3", "i5", s, t.data, t.urg, cfg);
  const Prediction b = predict("u3", "i5", s, t.data, t.urg, cfg);
  for (double p : {a.p_local, a.p_global, a.p_final}) EXPECT_TRUE(p > 0 && p < 1);
  EXPECT_EQ(a.p_final, b.p_final);
  EXPECT_EQ(a.p_local, b.p_local);
  try {
    predict("ghost", "i5", s, t.data, t.urg, cfg);
    FAIL();
  } catch (const LookupError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
  EXPECT_THROW(predict("u3", "nope", s, t.data, t.urg, cfg), LookupError);
}

TEST(Train, ZeroEpochsKeepsInitialisation) {
  TrainConfig cfg = small_config();
  cfg.epochs = 0;
  const Toy t = toy();
  const auto r = train(t.data, t.urg, cfg);
  EXPECT_TRUE(r.log.empty());
  EXPECT_TRUE(r.params.same_values(init_duet_params(cfg, t.data, t.urg)));
}

TEST(Train, SameSeedIsBitIdentical) {
  const TrainConfig cfg = small_config();
  const Toy t = toy();
  const auto a = train(t.data, t.urg, cfg);
  const auto b = train(t.data, t.urg, cfg);
  EXPECT_TRUE(a.params.same_values(b.params));
  EXPECT_EQ(format_log(a.log), format_log(b.log));
  TrainConfig other = cfg;
  other.seed = 8;
  EXPECT_FALSE(a.params.same_values(train(t.data, t.urg, other).params));
}

TEST(Train, LogFormat) {
  const std::vector<EpochLog> log{{1, 0.5, 0.693147, 0.5}, {2, 0.25, 0.1234567, 0.75}};
  EXPECT_EQ(format_log(log), "epoch,kg_loss,ce_loss,train_auc\n1,0.500000,0.693147,0.500000\n2,0.250000,0.123457,0.750000\n");
}

TEST(Train, NonFiniteLossNamesTheBatch) {
  TrainConfig cfg = small_config();
  const Toy t = toy();
  Dataset bad = t.data;
  // A NaN fusion weight poisons every prediction; the loop must stop with a diagnostic.
  ParamStore s = init_duet_params(cfg, bad, t.urg);
  s.value("fusion.w")[0] = std::nan("");
  const DuetModel model(cfg, bad, t.urg);
  const std::vector<Interaction> batch{{1, 1}};
  const std::vector<std::uint8_t> labels{1};
  EXPECT_FALSE(std::isfinite(model.loss(s, batch, labels, NeighborPolicy::evaluation(cfg.global, 1), false)));
}

TEST(Checkpoint, SaveLoadPredictIsBitIdentical) {
  const TrainConfig cfg = small_config();
  const Toy t = toy();
  const auto r = train(t.data, t.urg, cfg);
  const auto path = std::filesystem::temp_directory_path() / "duet_test_ckpt.bin";
  save_checkpoint(path, r.params);
  ParamStore loaded = init_duet_params(cfg, t.data, t.urg);
  load_checkpoint(path, loaded);
  std::filesystem::remove(path);
  std::vector<Interaction> pairs;
  for (const auto& e : t.data.test) pairs.push_back({e.user, e.item});
  const auto a = predict_pairs(r.params, t.data, t.urg, cfg, pairs);
  const auto b = predict_pairs(loaded, t.data, t.urg, cfg, pairs);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_EQ(a[i].p_local, b[i].p_local);
    EXPECT_EQ(a[i].p_global, b[i].p_global);
    EXPECT_EQ(a[i].p_final, b[i].p_final);
  }
}

TEST(Train, LearnsPlantedTopicsAtSmallScale) {
  SynthConfig sc;
  sc.n_users = 60;
  sc.n_items = 80;
  sc.interactions_per_user = 12;
  sc.vocab_per_topic = 20;
  sc.description_words = 16;
  const auto synth = generate(sc);
  PrepareConfig pc;
  pc.split.kcore = 3;
  const Dataset data = make_dataset(prepare_corpus(synth.interactions, synth.items, synth.triples, pc), {8, 16});
  const auto urg = build_urg(data);
  TrainConfig cfg;
  cfg.local.dim_word = cfg.local.dim_local = 16;
  cfg.global.dim_entity = 16;
  cfg.batch_size = 64;
  cfg.epochs = 20;
  const auto r = train(data, urg, cfg);
  auto window = [&](std::size_t from) {
    double s = 0;
    for (std::size_t e = from; e < from + 5; ++e) s += r.log[e].ce_loss;
    return s / 5;
  };
  EXPECT_LT(window(15), window(0));
  EXPECT_LT(r.log.back().ce_loss, r.log.front().ce_loss);

  double pos = 0, neg = 0;
  std::size_t np = 0, nn = 0;
  for (const auto& s : score_examples(r.params, data, urg, cfg, data.test)) {
    const bool planted = synth.truth.score(data.users.name(s.user), data.items.name(s.item)) > 0.5;
    (planted ? pos : neg) += s.score;
    (planted ? np : nn) += 1;
  }
  EXPECT_GT(pos / double(np), neg / double(nn));
  const auto report = evaluate(r.params, data, urg, cfg);
  EXPECT_GT(report.auc, 0.6);
}

}  // namespace
}  // namespace duet
