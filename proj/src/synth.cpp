#include "duet/synth.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "duet/numkit/random.hpp"

namespace duet {

void SynthConfig::validate() const {
  if (n_topics < 2) throw ConfigError("synth: n_topics must be >= 2");
  if (!(noise_rate >= 0 && noise_rate < 0.5)) throw ConfigError("synth: noise_rate must lie in [0, 0.5)");
  if (n_users == 0 || n_items < n_topics) throw ConfigError("synth: need users and at least one item per topic");
  if (interactions_per_user == 0 || interactions_per_user > n_items) {
    throw ConfigError("synth: interactions_per_user must lie in [1, n_items]");
  }
  if (vocab_per_topic == 0 || title_words == 0) throw ConfigError("synth: empty topic vocabulary or title");
}

namespace {

std::vector<std::size_t> dealt_topics(std::size_t n, std::size_t topics, Rng& rng) {
  std::vector<std::size_t> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = i % topics;
  rng.shuffle(t);
  return t;
}

std::string topic_word(std::size_t topic, std::size_t j) { return "t" + std::to_string(topic) + "w" + std::to_string(j); }

std::string words(std::size_t topic, std::size_t count, std::size_t vocab, Rng& rng) {
  std::string s;
  for (std::size_t w = 0; w < count; ++w) {
    if (w) s += ' ';
    s += topic_word(topic, rng.uniform_int(vocab));
  }
  return s;
}

}  // namespace

SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthData out;
  out.truth.noise_rate = cfg.noise_rate;

  Rng topic_rng(substream_seed(cfg.seed, "synth-topics"));
  const auto user_topic = dealt_topics(cfg.n_users, cfg.n_topics, topic_rng);
  const auto item_topic = dealt_topics(cfg.n_items, cfg.n_topics, topic_rng);
  auto user_id = [](std::size_t u) { return "u" + std::to_string(u); };
  auto item_id = [](std::size_t i) { return "i" + std::to_string(i); };
  for (std::size_t u = 0; u < cfg.n_users; ++u) out.truth.user_topic[user_id(u)] = user_topic[u];
  for (std::size_t i = 0; i < cfg.n_items; ++i) out.truth.item_topic[item_id(i)] = item_topic[i];

  Rng click_rng(substream_seed(cfg.seed, "synth-clicks"));
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    std::vector<std::size_t> matched, mismatched;
    for (std::size_t i = 0; i < cfg.n_items; ++i) (item_topic[i] == user_topic[u] ? matched : mismatched).push_back(i);
    for (std::size_t slot = 0; slot < cfg.interactions_per_user; ++slot) {
      bool want_match = click_rng.uniform() >= cfg.noise_rate;
      if (want_match && matched.empty()) want_match = false;
      if (!want_match && mismatched.empty()) want_match = true;
      auto& pool = want_match ? matched : mismatched;
      const std::size_t k = click_rng.uniform_int(pool.size());
      const std::size_t item = pool[k];
      pool[k] = pool.back();
      pool.pop_back();
      out.interactions.push_back({user_id(u), item_id(item), 5.0, std::int64_t(slot + 1), 0});
    }
  }

  Rng text_rng(substream_seed(cfg.seed, "synth-text"));
  for (std::size_t i = 0; i < cfg.n_items; ++i) {
    const std::size_t t = item_topic[i];
    out.items.push_back({item_id(i), words(t, cfg.title_words, cfg.vocab_per_topic, text_rng),
                         words(t, cfg.description_words, cfg.vocab_per_topic, text_rng)});
  }
  for (std::size_t i = 0; i < cfg.n_items; ++i) {
    for (std::size_t e = 0; e < cfg.kg_entities_per_topic; ++e) {
      out.triples.push_back({item_id(i), "tagged", "t" + std::to_string(item_topic[i]) + "e" + std::to_string(e)});
    }
  }
  return out;
}

double GroundTruth::score(const std::string& user_id, const std::string& item_id) const {
  const auto u = user_topic.find(user_id);
  if (u == user_topic.end()) throw LookupError("ground truth has no user '" + user_id + "'");
  const auto i = item_topic.find(item_id);
  if (i == item_topic.end()) throw LookupError("ground truth has no item '" + item_id + "'");
  return u->second == i->second ? 1.0 - noise_rate : noise_rate;
}

std::string GroundTruth::to_json() const {
  nlohmann::ordered_json j;
  j["noise_rate"] = noise_rate;
  j["match_probability"] = 1.0 - noise_rate;
  j["mismatch_probability"] = noise_rate;
  j["user_topic"] = user_topic;
  j["item_topic"] = item_topic;
  return j.dump(2) + "\n";
}

GroundTruth GroundTruth::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    GroundTruth g;
    g.noise_rate = j.at("noise_rate").get<double>();
    g.user_topic = j.at("user_topic").get<std::map<std::string, std::size_t>>();
    g.item_topic = j.at("item_topic").get<std::map<std::string, std::size_t>>();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("ground_truth.json", 0, e.what());
  }
}

void write_synth(const std::filesystem::path& dir, const SynthData& data) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw IoError("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("interactions.tsv");
    for (const auto& r : data.interactions) {
      f << r.user_id << '\t' << r.item_id << '\t' << r.rating;
      if (r.timestamp) f << '\t' << *r.timestamp;
      f << '\n';
    }
  }
  {
    auto f = open("items.jsonl");
    for (const auto& it : data.items) {
      nlohmann::ordered_json j{{"item_id", it.item_id}, {"title", it.title}, {"description", it.description}};
      f << j.dump() << '\n';
    }
  }
  write_triples(dir / "triples.tsv", data.triples);
  open("ground_truth.json") << data.truth.to_json();
}

double bayes_auc(const GroundTruth& truth, const Dataset& data, std::span<const LabeledExample> examples) {
  std::vector<double> pos, neg;
  for (const auto& e : examples) {
    const double s = truth.score(data.users.name(e.user), data.items.name(e.item));
    (e.label ? pos : neg).push_back(s);
  }
  if (pos.empty() || neg.empty()) throw MetricError("bayes_auc needs both labels");
  double wins = 0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : p == n ? 0.5 : 0.0;
  return wins / (double(pos.size()) * double(neg.size()));
}

}  // namespace duet
