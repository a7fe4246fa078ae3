#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "duet/error.hpp"
#include "duet/numkit/random.hpp"

namespace duet {

using Index = std::uint32_t;
using TokenId = std::uint32_t;

struct RawInteraction {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::optional<std::int64_t> timestamp;
  std::size_t line = 0;
};

using IdPair = std::pair<std::string, std::string>;
using PositiveSet = std::set<IdPair>;

struct SplitConfig {
  double train_fraction = 0.8;
  std::uint64_t seed = 7;
  std::size_t kcore = 10;
  double positive_threshold = 3.0;

  void validate() const;
};

/// TSV `user_id \t item_id \t rating [\t timestamp]`, no header. Blank lines are skipped.
std::vector<RawInteraction> load_interactions(const std::filesystem::path& path);
std::vector<RawInteraction> parse_interactions(std::istream& in, const std::string& source = "<stream>");

/// Pairs whose rating is >= threshold.
PositiveSet binarize(std::span<const RawInteraction> raw, double threshold);

/// Largest sub-bipartite-graph whose users and items all have degree >= k.
PositiveSet kcore_filter(PositiveSet positives, std::size_t k);

/// Seeded shuffle, then the first floor(train_fraction * n) examples go to train.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split(std::vector<T> examples, const SplitConfig& cfg) {
  cfg.validate();
  Rng rng(substream_seed(cfg.seed, "data-split"));
  rng.shuffle(examples);
  const auto n_train = static_cast<std::size_t>(std::floor(cfg.train_fraction * double(examples.size()) + 1e-9));
  std::vector<T> test(std::make_move_iterator(examples.begin() + std::ptrdiff_t(n_train)),
                      std::make_move_iterator(examples.end()));
  examples.resize(n_train);
  return {std::move(examples), std::move(test)};
}

// ---------------------------------------------------------------------------
// Text

/// Word -> id with 0 = PAD and 1 = UNK reserved.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;

  Vocab();

  TokenId add(const std::string& word, std::size_t count = 0);
  TokenId id(std::string_view word) const;
  bool contains(std::string_view word) const { return ids_.count(std::string(word)) != 0; }
  const std::string& word(TokenId id) const { return words_.at(id); }
  std::size_t count(TokenId id) const { return counts_.at(id); }
  std::size_t size() const { return words_.size(); }

  void write_tsv(const std::filesystem::path& path) const;
  static Vocab read_tsv(const std::filesystem::path& path);

 private:
  std::unordered_map<std::string, TokenId> ids_;
  std::vector<std::string> words_;
  std::vector<std::size_t> counts_;
};

/// Lowercased tokens; any ASCII character other than a letter or digit separates tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Words seen at least `min_count` times get ids from 2 upward, ordered by
/// descending frequency, then lexicographically.
Vocab build_vocab(std::span<const std::string> texts, std::size_t min_count);

std::vector<TokenId> encode_tokens(std::string_view text, const Vocab& vocab);

/// Truncates to `length` or right-pads with PAD.
std::vector<TokenId> fit_length(std::span<const TokenId> ids, std::size_t length);

std::vector<TokenId> encode_text(std::string_view text, const Vocab& vocab, std::size_t length);

// ---------------------------------------------------------------------------
// Indexed interactions

class IdMap {
 public:
  Index add(const std::string& id);
  std::optional<Index> find(std::string_view id) const;
  /// Throws LookupError naming `kind` and the id.
  Index at(std::string_view id, const char* kind = "id") const;
  const std::string& name(Index i) const { return names_.at(i); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::unordered_map<std::string, Index> index_;
  std::vector<std::string> names_;
};

struct Interaction {
  Index user = 0;
  Index item = 0;
  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

struct LabeledExample {
  Index user = 0;
  Index item = 0;
  std::uint8_t label = 0;
  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

/// Per-user sorted item lists for membership queries.
class InteractionIndex {
 public:
  InteractionIndex() = default;
  InteractionIndex(std::size_t n_users, std::span<const Interaction> pairs);

  bool contains(Index user, Index item) const;
  std::size_t degree(Index user) const { return user < by_user_.size() ? by_user_[user].size() : 0; }

 private:
  std::vector<std::vector<Index>> by_user_;
};

struct NegativeSamples {
  std::vector<LabeledExample> examples;
  std::size_t warnings = 0;
};

/// Emits every positive with label 1 followed by `ratio` items drawn uniformly
/// from those the user has no entry for in `excluded` (label 0). Each slot
/// gets at most 100 rejection draws. Users with every item excluded emit no
/// negatives; each skipped positive or exhausted slot counts one warning.
NegativeSamples sample_negatives(std::span<const Interaction> positives, const InteractionIndex& excluded,
                                 std::size_t n_items, std::size_t ratio, std::uint64_t seed);
NegativeSamples sample_negatives(std::span<const Interaction> positives, std::size_t n_users, std::size_t n_items,
                                 std::size_t ratio, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Item texts and KG triples

struct ItemRecord {
  std::string item_id;
  std::string title;
  std::string description;
};

/// JSON lines with string fields item_id, title, description.
std::vector<ItemRecord> load_items(const std::filesystem::path& path);
std::vector<ItemRecord> parse_items(std::istream& in, const std::string& source = "<stream>");

struct KgTriple {
  std::string head;
  std::string relation;
  std::string tail;
  friend auto operator<=>(const KgTriple&, const KgTriple&) = default;
};

/// TSV `head_id \t relation_name \t tail_id`.
std::vector<KgTriple> load_triples(const std::filesystem::path& path);
std::vector<KgTriple> parse_triples(std::istream& in, const std::string& source = "<stream>");
void write_triples(const std::filesystem::path& path, std::span<const KgTriple> triples);

// ---------------------------------------------------------------------------
// Prepared datasets

struct ItemText {
  std::vector<TokenId> title;
  std::vector<TokenId> description;
};

struct TextConfig {
  std::size_t title_len = 16;
  std::size_t desc_len = 40;
};

struct Dataset {
  IdMap users;
  IdMap items;
  Vocab vocab;
  std::vector<ItemText> item_texts;
  std::vector<Interaction> positives;
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
  /// Train positives of each user, oldest first.
  std::vector<std::vector<Index>> history;
  TextConfig text;
  std::vector<KgTriple> kg;
  /// Raw item ids that were filtered out; triples naming them are linkage errors.
  std::set<std::string> removed_items;

  std::size_t n_users() const { return users.size(); }
  std::size_t n_items() const { return items.size(); }
};

struct PrepareConfig {
  SplitConfig split;
  std::size_t min_count = 2;
  std::size_t test_neg_ratio = 1;
};

/// Counts in the layout of a dataset-statistics table.
struct DatasetStats {
  std::size_t n_raw_interactions = 0;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_interactions = 0;
  std::size_t n_train = 0;
  std::size_t n_test_positives = 0;
  std::size_t n_test_negatives = 0;
  std::size_t n_kg_entities = 0;
  std::size_t n_kg_relations = 0;
  std::size_t n_kg_triples = 0;
  std::size_t n_dropped_triples = 0;
  std::size_t n_items_without_text = 0;
  std::size_t vocab_size = 0;
  std::size_t negative_warnings = 0;

  std::string to_json(const PrepareConfig& cfg) const;
};

/// Full-length token ids per item, kept so text length can be chosen at load time.
struct PreparedCorpus {
  IdMap users;
  IdMap items;
  Vocab vocab;
  std::vector<std::vector<TokenId>> titles;
  std::vector<std::vector<TokenId>> descriptions;
  std::vector<Interaction> positives;
  std::vector<Interaction> train_positives;
  std::vector<LabeledExample> test;
  std::vector<KgTriple> kg;
  DatasetStats stats;
};

/// Binarize, k-core, split, vocabulary, test negatives and KG linkage filtering.
PreparedCorpus prepare_corpus(std::span<const RawInteraction> raw, std::span<const ItemRecord> items,
                              std::span<const KgTriple> kg, const PrepareConfig& cfg);

/// Writes users.tsv, vocab.tsv, items.bin, train.tsv, test.tsv, kg.tsv, stats.json.
void write_prepared(const std::filesystem::path& dir, const PreparedCorpus& corpus, const PrepareConfig& cfg);

Dataset load_prepared(const std::filesystem::path& dir, const TextConfig& text);

/// Encodes corpus token ids at the given lengths (shared by load_prepared and in-memory use).
Dataset make_dataset(const PreparedCorpus& corpus, const TextConfig& text);

}  // namespace duet
