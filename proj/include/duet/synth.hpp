#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "duet/dataio.hpp"

namespace duet {

struct SynthConfig {
  std::size_t n_users = 200;
  std::size_t n_items = 300;
  std::size_t n_topics = 4;
  std::size_t interactions_per_user = 20;
  std::size_t vocab_per_topic = 50;
  std::size_t kg_entities_per_topic = 5;
  double noise_rate = 0.1;
  std::uint64_t seed = 7;
  std::size_t title_words = 4;
  std::size_t description_words = 48;

  void validate() const;
};

/// Topic assignments; the generative click probability of a pair follows from them.
struct GroundTruth {
  std::map<std::string, std::size_t> user_topic;
  std::map<std::string, std::size_t> item_topic;
  double noise_rate = 0;

  /// 1 - noise_rate on a topic match, noise_rate otherwise.
  double score(const std::string& user_id, const std::string& item_id) const;
  std::string to_json() const;
  static GroundTruth from_json(const std::string& text);
};

struct SynthData {
  std::vector<RawInteraction> interactions;
  std::vector<ItemRecord> items;
  std::vector<KgTriple> triples;
  GroundTruth truth;
};

/// Topics are dealt round-robin and shuffled. Each user fills interactions_per_user
/// distinct slots: a topic-matched item with probability 1 - noise_rate, else a
/// mismatched one. Item text draws from the item topic's word list; every item
/// is tagged with all of its topic's KG entities.
SynthData generate(const SynthConfig& cfg);

/// interactions.tsv, items.jsonl, triples.tsv, ground_truth.json.
void write_synth(const std::filesystem::path& dir, const SynthData& data);

/// AUC of the generative scorer on `examples`, by explicit pairwise comparison.
double bayes_auc(const GroundTruth& truth, const Dataset& data, std::span<const LabeledExample> examples);

}  // namespace duet
