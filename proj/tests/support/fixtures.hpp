#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "duet/dataio.hpp"
#include "duet/numkit/random.hpp"

namespace duet::fixture {

/// Small random in-memory dataset: every user has a few train positives,
/// every item a random title/description over a `vocab_size`-word vocabulary.
inline Dataset toy_dataset(std::size_t n_users, std::size_t n_items, std::size_t vocab_size, std::uint64_t seed,
                           TextConfig text = {5, 7}) {
  Rng rng(seed);
  PreparedCorpus c;
  for (std::size_t u = 0; u < n_users; ++u) c.users.add("u" + std::to_string(u));
  for (std::size_t i = 0; i < n_items; ++i) c.items.add("i" + std::to_string(i));
  for (std::size_t w = 2; w < vocab_size; ++w) c.vocab.add("w" + std::to_string(w), 1);
  for (std::size_t i = 0; i < n_items; ++i) {
    std::vector<TokenId> title(1 + rng.uniform_int(text.title_len + 1)), desc(rng.uniform_int(text.desc_len + 3));
    for (auto& t : title) t = TokenId(2 + rng.uniform_int(vocab_size - 2));
    for (auto& t : desc) t = TokenId(1 + rng.uniform_int(vocab_size - 1));
    c.titles.push_back(title);
    c.descriptions.push_back(desc);
  }
  for (Index u = 0; u < n_users; ++u) {
    const std::size_t n = u == 0 ? 0 : 1 + rng.uniform_int(4);  // user 0 is cold
    std::vector<Index> items;
    while (items.size() < n) {
      const auto i = Index(rng.uniform_int(n_items));
      if (std::find(items.begin(), items.end(), i) == items.end()) items.push_back(i);
    }
    for (Index i : items) c.train_positives.push_back({u, i});
  }
  c.positives = c.train_positives;
  std::sort(c.positives.begin(), c.positives.end());
  InteractionIndex idx(n_users, c.positives);
  for (Index u = 0; u < n_users; ++u) {
    const auto i = Index(rng.uniform_int(n_items));
    if (!idx.contains(u, i)) c.test.push_back({u, i, std::uint8_t(u % 2)});
  }
  return make_dataset(c, text);
}

/// Four entities, two relations: a 0-chain 0->1->2 and a 1-cycle 2->3->0.
inline std::vector<std::array<Index, 3>> toy_kg_triples() { return {{0, 0, 1}, {1, 0, 2}, {2, 1, 3}, {3, 1, 0}}; }

}  // namespace duet::fixture
