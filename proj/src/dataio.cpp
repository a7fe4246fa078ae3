#include "duet/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <deque>
#include <fstream>
#include <istream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace duet {

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

template <typename Number>
bool parse_number(std::string_view s, Number& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

void SplitConfig::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0,1)");
  if (!std::isfinite(positive_threshold)) throw ConfigError("positive_threshold must be finite");
}

// ---------------------------------------------------------------------------

std::vector<RawInteraction> parse_interactions(std::istream& in, const std::string& source) {
  std::vector<RawInteraction> out;
  std::string buffer;
  std::size_t line_no = 0;
  while (std::getline(in, buffer)) {
    ++line_no;
    const std::string_view line = strip_cr(buffer);
    if (is_blank(line)) continue;
    const auto fields = split_tabs(line);
    if (fields.size() < 3 || fields.size() > 4) {
      throw ParseError(source, line_no, "expected 3 or 4 tab-separated fields, got " + std::to_string(fields.size()));
    }
    RawInteraction r;
    r.user_id = std::string(fields[0]);
    r.item_id = std::string(fields[1]);
    if (r.user_id.empty() || r.item_id.empty()) throw ParseError(source, line_no, "empty user or item id");
    if (!parse_number(fields[2], r.rating) || !std::isfinite(r.rating)) {
      throw ParseError(source, line_no, "bad rating '" + std::string(fields[2]) + "'");
    }
    if (fields.size() == 4) {
      std::int64_t ts = 0;
      if (!parse_number(fields[3], ts)) throw ParseError(source, line_no, "bad timestamp '" + std::string(fields[3]) + "'");
      r.timestamp = ts;
    }
    r.line = line_no;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RawInteraction> load_interactions(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_interactions(in, path.string());
}

PositiveSet binarize(std::span<const RawInteraction> raw, double threshold) {
  PositiveSet out;
  for (const auto& r : raw) {
    if (r.rating >= threshold) out.emplace(r.user_id, r.item_id);
  }
  return out;
}

PositiveSet kcore_filter(PositiveSet positives, std::size_t k) {
  if (k == 0) return positives;
  std::map<std::string, std::vector<const IdPair*>> by_user, by_item;
  for (const auto& p : positives) {
    by_user[p.first].push_back(&p);
    by_item[p.second].push_back(&p);
  }
  std::map<std::string, std::size_t> user_deg, item_deg;
  for (const auto& [u, edges] : by_user) user_deg[u] = edges.size();
  for (const auto& [i, edges] : by_item) item_deg[i] = edges.size();

  std::set<const IdPair*> removed;
  // Queue entries: (is_user, id).
  std::deque<std::pair<bool, std::string>> queue;
  std::set<std::pair<bool, std::string>> dead;
  for (const auto& [u, d] : user_deg)
    if (d < k) queue.emplace_back(true, u), dead.emplace(true, u);
  for (const auto& [i, d] : item_deg)
    if (d < k) queue.emplace_back(false, i), dead.emplace(false, i);

  while (!queue.empty()) {
    auto [is_user, id] = queue.front();
    queue.pop_front();
    for (const IdPair* edge : (is_user ? by_user : by_item)[id]) {
      if (!removed.insert(edge).second) continue;
      const std::string& other = is_user ? edge->second : edge->first;
      auto& deg = is_user ? item_deg[other] : user_deg[other];
      --deg;
      if (deg < k && dead.emplace(!is_user, other).second) queue.emplace_back(!is_user, other);
    }
  }
  PositiveSet out;
  for (const auto& p : positives) {
    if (!removed.count(&p)) out.insert(p);
  }
  return out;
}

// ---------------------------------------------------------------------------

Vocab::Vocab() {
  add("<pad>");
  add("<unk>");
}

TokenId Vocab::add(const std::string& word, std::size_t count) {
  auto [it, inserted] = ids_.emplace(word, TokenId(words_.size()));
  if (inserted) {
    words_.push_back(word);
    counts_.push_back(count);
  }
  return it->second;
}

TokenId Vocab::id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? kUnk : it->second;
}

void Vocab::write_tsv(const std::filesystem::path& path) const {
  auto out = open_output(path);
  for (std::size_t i = 0; i < words_.size(); ++i) out << i << '\t' << words_[i] << '\t' << counts_[i] << '\n';
}

Vocab Vocab::read_tsv(const std::filesystem::path& path) {
  auto in = open_input(path);
  Vocab v;
  std::string buffer;
  std::size_t line_no = 0;
  while (std::getline(in, buffer)) {
    ++line_no;
    const auto fields = split_tabs(strip_cr(buffer));
    std::size_t id = 0, count = 0;
    if (fields.size() != 3 || !parse_number(fields[0], id) || !parse_number(fields[2], count)) {
      throw ParseError(path.string(), line_no, "expected `id \\t word \\t count`");
    }
    if (id < 2) continue;
    if (id != v.size()) throw ParseError(path.string(), line_no, "vocabulary ids must be consecutive");
    v.add(std::string(fields[1]), count);
  }
  return v;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (c >= 0x80 || std::isalnum(c)) {
      current.push_back(c < 0x80 ? char(std::tolower(c)) : char(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocab build_vocab(std::span<const std::string> texts, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts)
    for (auto& tok : tokenize(text)) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [word, count] : counts)
    if (count >= std::max<std::size_t>(min_count, 1)) kept.emplace_back(word, count);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab vocab;
  for (const auto& [word, count] : kept) vocab.add(word, count);
  return vocab;
}

std::vector<TokenId> encode_tokens(std::string_view text, const Vocab& vocab) {
  std::vector<TokenId> ids;
  for (const auto& tok : tokenize(text)) ids.push_back(vocab.id(tok));
  return ids;
}

std::vector<TokenId> fit_length(std::span<const TokenId> ids, std::size_t length) {
  std::vector<TokenId> out(ids.begin(), ids.begin() + std::ptrdiff_t(std::min(length, ids.size())));
  out.resize(length, Vocab::kPad);
  return out;
}

std::vector<TokenId> encode_text(std::string_view text, const Vocab& vocab, std::size_t length) {
  if (length == 0) throw ArgumentError("encode_text: length must be >= 1");
  return fit_length(encode_tokens(text, vocab), length);
}

// ---------------------------------------------------------------------------

Index IdMap::add(const std::string& id) {
  auto [it, inserted] = index_.emplace(id, Index(names_.size()));
  if (inserted) names_.push_back(id);
  return it->second;
}

std::optional<Index> IdMap::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Index IdMap::at(std::string_view id, const char* kind) const {
  auto found = find(id);
  if (!found) throw LookupError(std::string("unknown ") + kind + " '" + std::string(id) + "'");
  return *found;
}

InteractionIndex::InteractionIndex(std::size_t n_users, std::span<const Interaction> pairs) : by_user_(n_users) {
  for (const auto& p : pairs) {
    if (p.user >= n_users) throw ArgumentError("interaction user index out of range");
    by_user_[p.user].push_back(p.item);
  }
  for (auto& items : by_user_) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
}

bool InteractionIndex::contains(Index user, Index item) const {
  if (user >= by_user_.size()) return false;
  const auto& items = by_user_[user];
  return std::binary_search(items.begin(), items.end(), item);
}

NegativeSamples sample_negatives(std::span<const Interaction> positives, const InteractionIndex& excluded,
                                 std::size_t n_items, std::size_t ratio, std::uint64_t seed) {
  if (ratio == 0) throw ArgumentError("sample_negatives: ratio must be >= 1");
  constexpr int kMaxAttempts = 100;
  Rng rng(seed);
  NegativeSamples out;
  out.examples.reserve(positives.size() * (ratio + 1));
  for (const auto& p : positives) {
    out.examples.push_back({p.user, p.item, 1});
    if (excluded.degree(p.user) >= n_items) {
      ++out.warnings;
      continue;
    }
    for (std::size_t slot = 0; slot < ratio; ++slot) {
      bool placed = false;
      for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
        const auto item = Index(rng.uniform_int(n_items));
        if (!excluded.contains(p.user, item)) {
          out.examples.push_back({p.user, item, 0});
          placed = true;
        }
      }
      if (!placed) ++out.warnings;
    }
  }
  return out;
}

NegativeSamples sample_negatives(std::span<const Interaction> positives, std::size_t n_users, std::size_t n_items,
                                 std::size_t ratio, std::uint64_t seed) {
  return sample_negatives(positives, InteractionIndex(n_users, positives), n_items, ratio, seed);
}

// ---------------------------------------------------------------------------

std::vector<ItemRecord> parse_items(std::istream& in, const std::string& source) {
  std::vector<ItemRecord> out;
  std::string buffer;
  std::size_t line_no = 0;
  while (std::getline(in, buffer)) {
    ++line_no;
    if (is_blank(buffer)) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(buffer);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("item_id") || !j["item_id"].is_string()) {
      throw ParseError(source, line_no, "expected an object with string field item_id");
    }
    ItemRecord r;
    r.item_id = j["item_id"].get<std::string>();
    if (r.item_id.empty()) throw ParseError(source, line_no, "empty item_id");
    for (auto [key, field] : {std::pair{"title", &r.title}, std::pair{"description", &r.description}}) {
      if (!j.contains(key)) continue;
      if (!j[key].is_string()) throw ParseError(source, line_no, std::string("field ") + key + " must be a string");
      *field = j[key].get<std::string>();
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ItemRecord> load_items(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_items(in, path.string());
}

std::vector<KgTriple> parse_triples(std::istream& in, const std::string& source) {
  std::vector<KgTriple> out;
  std::string buffer;
  std::size_t line_no = 0;
  while (std::getline(in, buffer)) {
    ++line_no;
    const std::string_view line = strip_cr(buffer);
    if (is_blank(line)) continue;
    const auto f = split_tabs(line);
    if (f.size() != 3) throw ParseError(source, line_no, "expected `head \\t relation \\t tail`");
    if (f[0].empty() || f[1].empty() || f[2].empty()) throw ParseError(source, line_no, "empty triple field");
    out.push_back({std::string(f[0]), std::string(f[1]), std::string(f[2])});
  }
  return out;
}

std::vector<KgTriple> load_triples(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_triples(in, path.string());
}

void write_triples(const std::filesystem::path& path, std::span<const KgTriple> triples) {
  auto out = open_output(path);
  for (const auto& t : triples) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
}

// ---------------------------------------------------------------------------

std::string DatasetStats::to_json(const PrepareConfig& cfg) const {
  nlohmann::ordered_json j;
  j["users"] = n_users;
  j["items"] = n_items;
  j["interactions"] = n_interactions;
  j["kg_entities"] = n_kg_entities;
  j["kg_relations"] = n_kg_relations;
  j["kg_triples"] = n_kg_triples;
  j["raw_interactions"] = n_raw_interactions;
  j["train_positives"] = n_train;
  j["test_positives"] = n_test_positives;
  j["test_negatives"] = n_test_negatives;
  j["dropped_triples"] = n_dropped_triples;
  j["items_without_text"] = n_items_without_text;
  j["vocab_size"] = vocab_size;
  j["negative_warnings"] = negative_warnings;
  j["kcore"] = cfg.split.kcore;
  j["positive_threshold"] = cfg.split.positive_threshold;
  j["train_fraction"] = cfg.split.train_fraction;
  j["seed"] = cfg.split.seed;
  j["min_count"] = cfg.min_count;
  return j.dump(2) + "\n";
}

PreparedCorpus prepare_corpus(std::span<const RawInteraction> raw, std::span<const ItemRecord> item_records,
                              std::span<const KgTriple> kg, const PrepareConfig& cfg) {
  cfg.split.validate();
  PreparedCorpus c;
  c.stats.n_raw_interactions = raw.size();

  const PositiveSet positives = kcore_filter(binarize(raw, cfg.split.positive_threshold), cfg.split.kcore);
  std::set<std::string> user_ids, item_ids;
  for (const auto& [u, i] : positives) user_ids.insert(u), item_ids.insert(i);
  for (const auto& u : user_ids) c.users.add(u);
  for (const auto& i : item_ids) c.items.add(i);

  // Chronological key of each positive pair: first qualifying record.
  std::map<IdPair, std::pair<std::int64_t, std::size_t>> order;
  for (std::size_t n = 0; n < raw.size(); ++n) {
    const auto& r = raw[n];
    if (r.rating < cfg.split.positive_threshold) continue;
    IdPair key{r.user_id, r.item_id};
    if (!positives.count(key)) continue;
    order.emplace(key, std::pair{r.timestamp.value_or(0), n});
  }

  for (const auto& [u, i] : positives) c.positives.push_back({c.users.at(u), c.items.at(i)});
  auto [train, test_pos] = split(c.positives, cfg.split);
  std::sort(train.begin(), train.end(), [&](const Interaction& a, const Interaction& b) {
    if (a.user != b.user) return a.user < b.user;
    return order.at({c.users.name(a.user), c.items.name(a.item)}) <
           order.at({c.users.name(b.user), c.items.name(b.item)});
  });
  std::sort(test_pos.begin(), test_pos.end());
  c.train_positives = std::move(train);

  const InteractionIndex all_positive(c.users.size(), c.positives);
  auto negs = sample_negatives(test_pos, all_positive, c.items.size(), cfg.test_neg_ratio,
                               substream_seed(cfg.split.seed, "negatives", 0));
  c.test = std::move(negs.examples);
  c.stats.negative_warnings = negs.warnings;

  // Texts of retained items.
  std::map<std::string, const ItemRecord*> records;
  for (const auto& r : item_records) records[r.item_id] = &r;
  std::vector<std::string> corpus_texts;
  for (const auto& id : c.items.names()) {
    auto it = records.find(id);
    if (it == records.end()) {
      ++c.stats.n_items_without_text;
      continue;
    }
    corpus_texts.push_back(it->second->title);
    corpus_texts.push_back(it->second->description);
  }
  c.vocab = build_vocab(corpus_texts, cfg.min_count);
  for (const auto& id : c.items.names()) {
    auto it = records.find(id);
    c.titles.push_back(it == records.end() ? std::vector<TokenId>{} : encode_tokens(it->second->title, c.vocab));
    c.descriptions.push_back(it == records.end() ? std::vector<TokenId>{}
                                                 : encode_tokens(it->second->description, c.vocab));
  }

  // Triples touching a filtered-out item cannot be linked and are dropped.
  std::set<std::string> raw_items;
  for (const auto& r : raw) raw_items.insert(r.item_id);
  std::set<KgTriple> kept;
  for (const auto& t : kg) {
    const bool dangling = (raw_items.count(t.head) && !c.items.find(t.head)) ||
                          (raw_items.count(t.tail) && !c.items.find(t.tail));
    if (dangling) {
      ++c.stats.n_dropped_triples;
      continue;
    }
    kept.insert(t);
  }
  c.kg.assign(kept.begin(), kept.end());
  std::set<std::string> entities, relations;
  for (const auto& t : c.kg) {
    relations.insert(t.relation);
    for (const auto* id : {&t.head, &t.tail})
      if (!c.items.find(*id)) entities.insert(*id);
  }

  auto& s = c.stats;
  s.n_users = c.users.size();
  s.n_items = c.items.size();
  s.n_interactions = c.positives.size();
  s.n_train = c.train_positives.size();
  s.n_test_positives = test_pos.size();
  s.n_test_negatives = c.test.size() - test_pos.size();
  s.n_kg_entities = entities.size();
  s.n_kg_relations = relations.size();
  s.n_kg_triples = c.kg.size();
  s.vocab_size = c.vocab.size();
  return c;
}

namespace {

constexpr const char* kItemsHeader = "DUETITEMS v1";

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& source) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError(source + ": truncated");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

void write_ids(std::ostream& out, std::span<const TokenId> ids) {
  put_u32(out, std::uint32_t(ids.size()));
  for (TokenId t : ids) put_u32(out, t);
}

std::vector<TokenId> read_ids(std::istream& in, const std::string& source) {
  std::vector<TokenId> ids(get_u32(in, source));
  for (auto& t : ids) t = get_u32(in, source);
  return ids;
}

void write_examples(const std::filesystem::path& path, const PreparedCorpus& c,
                    std::span<const LabeledExample> examples) {
  auto out = open_output(path);
  for (const auto& e : examples)
    out << c.users.name(e.user) << '\t' << c.items.name(e.item) << '\t' << int(e.label) << '\n';
}

std::vector<LabeledExample> read_examples(const std::filesystem::path& path, const IdMap& users, const IdMap& items) {
  auto in = open_input(path);
  std::vector<LabeledExample> out;
  std::string buffer;
  std::size_t line_no = 0;
  while (std::getline(in, buffer)) {
    ++line_no;
    const auto f = split_tabs(strip_cr(buffer));
    if (f.size() != 3 || (f[2] != "0" && f[2] != "1")) {
      throw ParseError(path.string(), line_no, "expected `user_id \\t item_id \\t 0|1`");
    }
    auto u = users.find(f[0]);
    auto i = items.find(f[1]);
    if (!u || !i) throw ParseError(path.string(), line_no, "unknown user or item id");
    out.push_back({*u, *i, std::uint8_t(f[2] == "1")});
  }
  return out;
}

}  // namespace

void write_prepared(const std::filesystem::path& dir, const PreparedCorpus& c, const PrepareConfig& cfg) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_output(dir / "users.tsv");
    for (const auto& u : c.users.names()) out << u << '\n';
  }
  c.vocab.write_tsv(dir / "vocab.tsv");
  {
    auto out = open_output(dir / "items.bin");
    out << kItemsHeader << '\n';
    put_u32(out, std::uint32_t(c.items.size()));
    for (std::size_t i = 0; i < c.items.size(); ++i) {
      const auto& id = c.items.name(Index(i));
      put_u32(out, std::uint32_t(id.size()));
      out.write(id.data(), std::streamsize(id.size()));
      write_ids(out, c.titles[i]);
      write_ids(out, c.descriptions[i]);
    }
  }
  std::vector<LabeledExample> train;
  for (const auto& p : c.train_positives) train.push_back({p.user, p.item, 1});
  write_examples(dir / "train.tsv", c, train);
  write_examples(dir / "test.tsv", c, c.test);
  write_triples(dir / "kg.tsv", c.kg);
  auto out = open_output(dir / "stats.json");
  out << c.stats.to_json(cfg);
}

Dataset make_dataset(const PreparedCorpus& c, const TextConfig& text) {
  if (text.desc_len == 0 || text.title_len == 0) throw ConfigError("title and description lengths must be >= 1");
  Dataset d;
  d.users = c.users;
  d.items = c.items;
  d.vocab = c.vocab;
  d.text = text;
  d.kg = c.kg;
  d.positives = c.positives;
  for (std::size_t i = 0; i < c.items.size(); ++i) {
    const auto& title = c.titles[i];
    d.item_texts.push_back({std::vector<TokenId>(title.begin(), title.begin() + std::ptrdiff_t(std::min(title.size(), text.title_len))),
                            fit_length(c.descriptions[i], text.desc_len)});
  }
  d.history.resize(c.users.size());
  for (const auto& p : c.train_positives) {
    d.train.push_back({p.user, p.item, 1});
    d.history[p.user].push_back(p.item);
  }
  d.test = c.test;
  return d;
}

Dataset load_prepared(const std::filesystem::path& dir, const TextConfig& text) {
  PreparedCorpus c;
  {
    auto in = open_input(dir / "users.tsv");
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) c.users.add(std::string(strip_cr(line)));
    }
  }
  c.vocab = Vocab::read_tsv(dir / "vocab.tsv");
  {
    const std::string source = (dir / "items.bin").string();
    auto in = open_input(dir / "items.bin");
    std::string header;
    if (!std::getline(in, header) || header != kItemsHeader) throw IoError(source + ": bad header");
    const auto n = get_u32(in, source);
    for (std::uint32_t i = 0; i < n; ++i) {
      std::string id(get_u32(in, source), '\0');
      if (!in.read(id.data(), std::streamsize(id.size()))) throw IoError(source + ": truncated");
      c.items.add(id);
      c.titles.push_back(read_ids(in, source));
      c.descriptions.push_back(read_ids(in, source));
      for (const auto* ids : {&c.titles.back(), &c.descriptions.back()})
        for (TokenId t : *ids)
          if (t >= c.vocab.size()) throw IoError(source + ": token id beyond vocabulary");
    }
  }
  for (const auto& e : read_examples(dir / "train.tsv", c.users, c.items)) c.train_positives.push_back({e.user, e.item});
  c.test = read_examples(dir / "test.tsv", c.users, c.items);
  c.kg = load_triples(dir / "kg.tsv");
  c.positives = c.train_positives;
  for (const auto& e : c.test)
    if (e.label) c.positives.push_back({e.user, e.item});
  std::sort(c.positives.begin(), c.positives.end());
  return make_dataset(c, text);
}

}  // namespace duet
