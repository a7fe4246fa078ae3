#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "duet/dataio.hpp"
#include "support/oracles.hpp"

namespace duet {
namespace {

TEST(LoadInteractions, ParsesRecords) {
  std::istringstream in("u1\ti9\t4.0\n\nu2\ti3\t1.5\t1600000000\n");
  auto rows = parse_interactions(in);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].user_id, "u1");
  EXPECT_EQ(rows[0].item_id, "i9");
  EXPECT_DOUBLE_EQ(rows[0].rating, 4.0);
  EXPECT_FALSE(rows[0].timestamp.has_value());
  EXPECT_EQ(rows[1].timestamp, 1600000000);
  EXPECT_EQ(rows[1].line, 3u);
}

TEST(LoadInteractions, ArityViolationCitesLine) {
  std::istringstream in("u1\ti9\t4.0\nu1\ti9\n");
  try {
    parse_interactions(in, "x.tsv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("x.tsv:2"), std::string::npos);
  }
}

TEST(LoadInteractions, BadRatingAndEmptyFile) {
  std::istringstream bad("u1\ti9\tfour\n");
  EXPECT_THROW(parse_interactions(bad), ParseError);
  std::istringstream empty("");
  EXPECT_TRUE(parse_interactions(empty).empty());
  EXPECT_THROW(load_interactions("/nonexistent/file.tsv"), IoError);
}

TEST(Binarize, InclusiveThreshold) {
  std::vector<RawInteraction> raw{{"u", "a", 4.0, {}, 1}, {"u", "b", 3.0, {}, 2}, {"u", "c", 2.0, {}, 3},
                                  {"u", "a", 5.0, {}, 4}};
  auto pos = binarize(raw, 3.0);
  EXPECT_EQ(pos, (PositiveSet{{"u", "a"}, {"u", "b"}}));
}

TEST(Binarize, OrderIndependent) {
  Rng rng(5);
  std::vector<RawInteraction> raw;
  for (int n = 0; n < 300; ++n)
    raw.push_back({"u" + std::to_string(rng.uniform_int(20)), "i" + std::to_string(rng.uniform_int(30)),
                   double(1 + rng.uniform_int(5)), {}, 0});
  auto base = binarize(raw, 3.0);
  for (int t = 0; t < 5; ++t) {
    rng.shuffle(raw);
    EXPECT_EQ(binarize(raw, 3.0), base);
  }
}

PositiveSet random_bipartite(Rng& rng, std::size_t users, std::size_t items, double density) {
  PositiveSet s;
  for (std::size_t u = 0; u < users; ++u)
    for (std::size_t i = 0; i < items; ++i)
      if (rng.uniform() < density) s.emplace("u" + std::to_string(u), "i" + std::to_string(i));
  return s;
}

TEST(KCore, FixedPointAndEmptyChain) {
  PositiveSet full{{"u1", "i1"}, {"u1", "i2"}, {"u2", "i1"}, {"u2", "i2"}};
  EXPECT_EQ(kcore_filter(full, 2), full);
  PositiveSet chain{{"u1", "i1"}, {"u2", "i2"}};
  EXPECT_TRUE(kcore_filter(chain, 2).empty());
  EXPECT_EQ(kcore_filter(chain, 0), chain);
}

TEST(KCore, MatchesBruteForcePeeling) {
  Rng rng(30);
  auto g = random_bipartite(rng, 30, 30, 0.12);
  EXPECT_EQ(kcore_filter(g, 3), oracle::kcore_peel(g, 3));
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t nu = 1 + rng.uniform_int(50), ni = 1 + rng.uniform_int(50);
    auto h = random_bipartite(rng, nu, ni, rng.uniform(0.02, 0.3));
    const std::size_t k = rng.uniform_int(6);
    auto got = kcore_filter(h, k);
    ASSERT_EQ(got, oracle::kcore_peel(h, k)) << "trial " << trial;
    EXPECT_EQ(kcore_filter(got, k), got);
  }
}

TEST(Split, SizesAndPartition) {
  std::vector<int> xs(10);
  std::iota(xs.begin(), xs.end(), 0);
  auto [train, test] = split(xs, SplitConfig{});
  EXPECT_EQ(train.size(), 8u);
  EXPECT_EQ(test.size(), 2u);
  std::vector<int> all = train;
  all.insert(all.end(), test.begin(), test.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, xs);
}

TEST(Split, SeedDeterminism) {
  std::vector<int> xs(1000);
  std::iota(xs.begin(), xs.end(), 0);
  SplitConfig a, b;
  a.seed = 1;
  b.seed = 2;
  EXPECT_EQ(split(xs, a), split(xs, a));
  EXPECT_NE(split(xs, a).first, split(xs, b).first);
}

TEST(Split, RejectsBadFraction) {
  SplitConfig cfg;
  cfg.train_fraction = 1.0;
  EXPECT_THROW(split(std::vector<int>{1, 2}, cfg), ConfigError);
}

TEST(Vocab, FrequencyOrder) {
  std::vector<std::string> corpus{"a a b"};
  auto v = build_vocab(corpus, 1);
  EXPECT_EQ(v.size(), 4u);
  EXPECT_EQ(v.id("a"), 2u);
  EXPECT_EQ(v.id("b"), 3u);
  auto v2 = build_vocab(corpus, 2);
  EXPECT_EQ(v2.id("a"), 2u);
  EXPECT_EQ(v2.id("b"), Vocab::kUnk);
  EXPECT_EQ(build_vocab(std::vector<std::string>{}, 2).size(), 2u);
}

TEST(Vocab, TiesBrokenLexicographically) {
  std::vector<std::string> corpus{"Zeta, alpha! beta", "zeta ALPHA beta"};
  auto v = build_vocab(corpus, 1);
  EXPECT_EQ(v.id("alpha"), 2u);
  EXPECT_EQ(v.id("beta"), 3u);
  EXPECT_EQ(v.id("zeta"), 4u);
}

TEST(EncodeText, PadsTruncatesAndMapsUnknown) {
  std::vector<std::string> corpus{"the matrix the matrix"};
  auto v = build_vocab(corpus, 1);
  EXPECT_EQ(encode_text("The Matrix", v, 4), (std::vector<TokenId>{v.id("the"), v.id("matrix"), 0, 0}));
  EXPECT_EQ(encode_text("", v, 3), (std::vector<TokenId>{0, 0, 0}));
  EXPECT_EQ(encode_text("neo", v, 1), (std::vector<TokenId>{Vocab::kUnk}));

  std::string long_text;
  for (int w = 0; w < 300; ++w) long_text += (w % 2 ? "the " : "matrix ");
  auto ids = encode_text(long_text, v, 200);
  ASSERT_EQ(ids.size(), 200u);
  auto all = encode_tokens(long_text, v);
  EXPECT_TRUE(std::equal(ids.begin(), ids.end(), all.begin()));
}

TEST(EncodeText, AlwaysExactLength) {
  Rng rng(8);
  std::vector<std::string> corpus{"a b c d e f", "a b c"};
  auto v = build_vocab(corpus, 2);
  const char* words[] = {"a", "b", "q", "c", "zz", "f"};
  for (int t = 0; t < 100; ++t) {
    std::string text;
    for (std::size_t n = rng.uniform_int(40); n > 0; --n) text += std::string(words[rng.uniform_int(6)]) + " ";
    const std::size_t len = 1 + rng.uniform_int(30);
    auto ids = encode_text(text, v, len);
    ASSERT_EQ(ids.size(), len);
    for (auto id : ids) EXPECT_LT(id, v.size());
  }
}

TEST(SampleNegatives, OnePositiveOneNegative) {
  std::vector<Interaction> pos{{0, 3}};
  auto out = sample_negatives(pos, 1, 10, 1, 42);
  ASSERT_EQ(out.examples.size(), 2u);
  EXPECT_EQ(out.examples[0], (LabeledExample{0, 3, 1}));
  EXPECT_EQ(out.examples[1].label, 0);
  EXPECT_NE(out.examples[1].item, 3u);
  EXPECT_EQ(out.warnings, 0u);
}

TEST(SampleNegatives, SaturatedUserWarns) {
  std::vector<Interaction> pos{{0, 0}, {0, 1}, {0, 2}, {1, 0}};
  auto out = sample_negatives(pos, 2, 3, 2, 1);
  std::size_t user0_negatives = 0;
  for (const auto& e : out.examples)
    if (e.user == 0 && e.label == 0) ++user0_negatives;
  EXPECT_EQ(user0_negatives, 0u);
  EXPECT_EQ(out.warnings, 3u);
  EXPECT_EQ(out.examples.size(), 4u + 2u);
}

TEST(SampleNegatives, DeterministicAndNeverPositive) {
  Rng rng(2);
  std::vector<Interaction> pos;
  for (Index u = 0; u < 20; ++u)
    for (Index i = 0; i < 50; ++i)
      if (rng.uniform() < 0.2) pos.push_back({u, i});
  auto a = sample_negatives(pos, 20, 50, 3, 77);
  auto b = sample_negatives(pos, 20, 50, 3, 77);
  EXPECT_EQ(a.examples, b.examples);
  InteractionIndex idx(20, pos);
  for (const auto& e : a.examples)
    if (!e.label) EXPECT_FALSE(idx.contains(e.user, e.item));
  EXPECT_EQ(a.examples.size(), pos.size() * 4);
}

TEST(Items, ParseJsonLines) {
  std::istringstream in(R"({"item_id":"i1","title":"The Matrix","description":"a hacker"}
{"item_id":"i2","title":"x"}
)");
  auto items = parse_items(in);
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0].description, "a hacker");
  EXPECT_EQ(items[1].description, "");
  std::istringstream bad("{\"title\":\"no id\"}\n");
  EXPECT_THROW(parse_items(bad), ParseError);
  std::istringstream broken("{not json\n");
  EXPECT_THROW(parse_items(broken), ParseError);
}

TEST(Triples, ParseAndArity) {
  std::istringstream in("i1\tgenre\tg1\n");
  auto t = parse_triples(in);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0], (KgTriple{"i1", "genre", "g1"}));
  std::istringstream bad("i1\tgenre\n");
  EXPECT_THROW(parse_triples(bad), ParseError);
}

struct TinyCorpus {
  std::vector<RawInteraction> raw;
  std::vector<ItemRecord> items;
  std::vector<KgTriple> kg;
};

TinyCorpus tiny_corpus() {
  TinyCorpus c;
  std::size_t line = 0;
  for (int u = 0; u < 6; ++u)
    for (int i = 0; i < 8; ++i)
      if ((u + i) % 3 != 0) c.raw.push_back({"u" + std::to_string(u), "i" + std::to_string(i), 4.0, u * 100 + (7 - i), ++line});
  c.raw.push_back({"u0", "lonely", 5.0, {}, ++line});
  for (int i = 0; i < 8; ++i)
    c.items.push_back({"i" + std::to_string(i), "title " + std::to_string(i % 2), "word word other text"});
  c.kg = {{"i1", "genre", "g1"}, {"i2", "genre", "g1"}, {"lonely", "genre", "g2"}};
  return c;
}

TEST(Prepare, CountsAndLinkageFiltering) {
  auto c = tiny_corpus();
  PrepareConfig cfg;
  cfg.split.kcore = 2;
  auto corpus = prepare_corpus(c.raw, c.items, c.kg, cfg);
  EXPECT_EQ(corpus.stats.n_users, 6u);
  EXPECT_EQ(corpus.stats.n_items, 8u);
  EXPECT_EQ(corpus.stats.n_dropped_triples, 1u);
  EXPECT_EQ(corpus.stats.n_kg_triples, 2u);
  EXPECT_EQ(corpus.stats.n_kg_entities, 1u);
  EXPECT_EQ(corpus.train_positives.size() + corpus.stats.n_test_positives, corpus.positives.size());
  // History is ordered by timestamp: for a user, later timestamps come later.
  for (std::size_t n = 1; n < corpus.train_positives.size(); ++n) {
    const auto& a = corpus.train_positives[n - 1];
    const auto& b = corpus.train_positives[n];
    if (a.user == b.user) EXPECT_GT(a.item, b.item);
  }
}

TEST(Prepare, WriteLoadRoundTrip) {
  auto c = tiny_corpus();
  PrepareConfig cfg;
  cfg.split.kcore = 2;
  cfg.min_count = 1;
  auto corpus = prepare_corpus(c.raw, c.items, c.kg, cfg);
  auto dir = std::filesystem::temp_directory_path() / "duet_dataio_roundtrip";
  std::filesystem::remove_all(dir);
  write_prepared(dir, corpus, cfg);
  for (const char* f : {"vocab.tsv", "items.bin", "train.tsv", "test.tsv", "stats.json", "kg.tsv"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  TextConfig text{4, 3};
  Dataset loaded = load_prepared(dir, text);
  Dataset direct = make_dataset(corpus, text);
  EXPECT_EQ(loaded.users.names(), direct.users.names());
  EXPECT_EQ(loaded.items.names(), direct.items.names());
  EXPECT_EQ(loaded.train, direct.train);
  EXPECT_EQ(loaded.test, direct.test);
  EXPECT_EQ(loaded.history, direct.history);
  EXPECT_EQ(loaded.positives, direct.positives);
  EXPECT_EQ(loaded.kg, direct.kg);
  for (std::size_t i = 0; i < loaded.item_texts.size(); ++i) {
    EXPECT_EQ(loaded.item_texts[i].title, direct.item_texts[i].title);
    EXPECT_EQ(loaded.item_texts[i].description, direct.item_texts[i].description);
    EXPECT_EQ(loaded.item_texts[i].description.size(), 3u);
    EXPECT_LE(loaded.item_texts[i].title.size(), 4u);
  }
  // Train and test are disjoint.
  InteractionIndex train_idx(loaded.n_users(), std::vector<Interaction>{});
  std::set<std::pair<Index, Index>> train_pairs;
  for (const auto& e : loaded.train) train_pairs.emplace(e.user, e.item);
  for (const auto& e : loaded.test) EXPECT_FALSE(train_pairs.count({e.user, e.item}));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace duet
