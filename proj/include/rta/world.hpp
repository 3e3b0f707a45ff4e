// Copyright 2026 The RTA Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Synthetic movie world: a catalog of pseudo-word titles, a pretrain corpus
// whose item frequencies follow one Zipf ranking, and a target platform whose
// ranking is a partial permutation of it that keeps drifting over periods.
//
// Items belong to genres and, inside a genre, to small clusters. The corpus
// only knows genres and corpus popularity; platform conversations also pick
// context items from the target's cluster, a collaborative signal that only
// a recommender trained on the platform can see.

#include <map>
#include <memory>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "rta/catalog.hpp"
#include "rta/data.hpp"
#include "rta/rng.hpp"
#include "rta/tokenizer.hpp"

namespace rta {

struct WorldConfig {
  int n_items = 2000;
  double zipf_exponent_corpus = 1.0;
  double zipf_exponent_platform = 1.0;
  double misalignment_delta = 0.5;
  int n_periods = 12;
  double drift_rate = 0.1;
  int corpus_size = 50000;    // samples (L2I + L2R)
  int platform_size = 20000;  // conversations
  double l2i_fraction = 0.2;
  std::uint64_t seed = 0;
  int n_genres = 20;
  int cluster_size = 8;
  double cluster_affinity = 0.5;
  // Title word pool size as a multiple of n_items. Small pools make many
  // titles share their first word.
  double title_pool_ratio = 1.5;

  void validate() const {
    if (n_items < 2) throw Error("world: n_items must be >= 2");
    auto positive = [](long v, const char* name) {
      if (v <= 0) throw Error(std::string("world: ") + name + " must be positive");
    };
    positive(n_periods, "n_periods");
    positive(corpus_size, "corpus_size");
    positive(platform_size, "platform_size");
    positive(n_genres, "n_genres");
    positive(cluster_size, "cluster_size");
    auto fraction = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(std::string("world: ") + name + " must be in [0, 1]");
      }
    };
    fraction(misalignment_delta, "misalignment_delta");
    fraction(drift_rate, "drift_rate");
    fraction(l2i_fraction, "l2i_fraction");
    fraction(cluster_affinity, "cluster_affinity");
    if (!(title_pool_ratio > 0.0)) throw Error("world: title_pool_ratio must be positive");
    if (zipf_exponent_corpus < 0 || zipf_exponent_platform < 0) {
      throw Error("world: zipf exponents must be >= 0");
    }
  }
};

struct World {
  WorldConfig config;
  std::shared_ptr<const Vocabulary> vocab;
  ItemCatalog catalog;
  std::vector<RecSample> corpus;
  std::vector<Conversation> platform;

  std::vector<int> genre;    // per item
  std::vector<int> cluster;  // per item, global cluster index
  std::vector<std::string> genre_names;
  // rank[i] = popularity rank of item i (0 = most popular).
  std::vector<int> corpus_rank;
  std::vector<std::vector<int>> platform_rank;  // per period
  std::vector<double> corpus_prob;
  std::vector<std::vector<double>> platform_prob;  // per period

  // Planted additive log-shift between platform and corpus popularity.
  std::vector<double> planted_shift(int period = 0) const {
    std::vector<double> d(corpus_prob.size());
    const auto& p = platform_prob.at(static_cast<std::size_t>(period));
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] = std::log(p[i]) - std::log(corpus_prob[i]);
    }
    return d;
  }
};

namespace world_detail {

inline const std::vector<std::string>& genre_words() {
  static const std::vector<std::string> g = {
      "action",   "comedy",    "drama",     "horror",  "thriller",
      "romance",  "scifi",     "fantasy",   "western", "documentary",
      "animated", "mystery",   "crime",     "musical", "war",
      "family",   "adventure", "noir",      "sports",  "biographical",
      "disaster", "heist",     "spy",       "zombie",  "superhero",
      "teen",     "satire",    "slasher",   "cult",    "silent"};
  return g;
}

inline const std::vector<std::string>& seeker_openers() {
  static const std::vector<std::string> t = {
      "i love {g} movies like {items} .",
      "can you suggest a {g} film ? i enjoyed {items} .",
      "i am in the mood for {g} . i liked {items} .",
      "recently i watched {items} and i want more {g} ."};
  return t;
}

inline const std::vector<std::string>& recommender_lines() {
  static const std::vector<std::string> t = {
      "you should watch {t} .", "have you seen {t} ?", "i recommend {t} .",
      "try {t} , it is great ."};
  return t;
}

inline const std::vector<std::string>& seeker_followups() {
  static const std::vector<std::string> t = {
      "i have seen it . something else ?",
      "not that one . another {g} movie please ."};
  return t;
}

// Every word the templates and prompts can emit.
inline std::vector<std::string> lexicon() {
  std::vector<std::string> words = {"seeker", "recommender", ":", "description",
                                    "title", "film", "starring"};
  auto add_text = [&](const std::string& s) {
    for (const auto& w : split_words(s)) words.push_back(w);
  };
  for (const auto* list : {&seeker_openers(), &recommender_lines(),
                           &seeker_followups()}) {
    for (const auto& t : *list) add_text(t);
  }
  add_text("and , a");
  return words;
}

inline std::string replace_all(std::string s, const std::string& from,
                               const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

inline std::string pseudo_word(Rng& rng, bool name_style) {
  static const std::string consonants = "bdfgklmnprstvz";
  static const std::string vowels = "aeiou";
  const int syllables = name_style ? 2 + static_cast<int>(rng.below(2))
                                   : 2 + static_cast<int>(rng.below(2));
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w.push_back(consonants[rng.below(consonants.size())]);
    w.push_back(vowels[rng.below(vowels.size())]);
  }
  if (name_style) {
    w += "x";
  } else if (rng.bernoulli(0.4)) {
    w.push_back(consonants[rng.below(consonants.size())]);
  }
  return w;
}

// `count` distinct pseudo-words avoiding `reserved`; extends reserved.
inline std::vector<std::string> word_pool(std::size_t count, bool name_style,
                                          Rng& rng,
                                          std::unordered_set<std::string>& reserved) {
  std::vector<std::string> out;
  while (out.size() < count) {
    std::string w = pseudo_word(rng, name_style);
    if (reserved.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

inline std::vector<double> zipf_probs(const std::vector<int>& rank, double s) {
  std::vector<double> p(rank.size());
  double total = 0.0;
  for (std::size_t i = 0; i < rank.size(); ++i) {
    p[i] = std::pow(static_cast<double>(rank[i] + 1), -s);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

// Picks floor(fraction * n) items and shuffles their ranks among themselves.
inline std::vector<int> permute_fraction(const std::vector<int>& rank,
                                         double fraction, Rng& rng) {
  const std::size_t n = rank.size();
  const std::size_t m = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  std::vector<int> out = rank;
  if (m < 2) return out;
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  rng.shuffle(ids);
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  std::vector<int> ranks;
  for (std::size_t i : ids) ranks.push_back(rank[i]);
  rng.shuffle(ranks);
  for (std::size_t k = 0; k < m; ++k) out[ids[k]] = ranks[k];
  return out;
}

// Weighted sampling restricted to a subset, excluding some items.
inline ItemId draw_from(const std::vector<ItemId>& pool,
                        const std::vector<double>& prob,
                        const std::vector<ItemId>& exclude, Rng& rng) {
  double total = 0.0;
  for (ItemId i : pool) {
    if (std::find(exclude.begin(), exclude.end(), i) == exclude.end()) {
      total += prob[static_cast<std::size_t>(i)];
    }
  }
  if (total <= 0.0) return -1;
  double u = rng.uniform() * total;
  ItemId last = -1;
  for (ItemId i : pool) {
    if (std::find(exclude.begin(), exclude.end(), i) != exclude.end()) continue;
    last = i;
    u -= prob[static_cast<std::size_t>(i)];
    if (u < 0.0) return i;
  }
  return last;
}

inline std::string join_items(const std::vector<std::string>& titles) {
  std::string s;
  for (std::size_t i = 0; i < titles.size(); ++i) {
    if (i > 0) s += (i + 1 == titles.size()) ? " and " : " , ";
    s += titles[i];
  }
  return s;
}

}  // namespace world_detail

// Deterministic in config (including seed). Corpus draws never depend on
// platform knobs, so worlds that differ only in platform settings share the
// same catalog and corpus.
inline World gen_world(const WorldConfig& config) {
  namespace wd = world_detail;
  config.validate();
  World w;
  w.config = config;
  const Rng root(config.seed);
  const std::size_t n = static_cast<std::size_t>(config.n_items);
  const int n_genres =
      std::min<int>(config.n_genres, static_cast<int>(wd::genre_words().size()));
  w.genre_names.assign(wd::genre_words().begin(),
                       wd::genre_words().begin() + n_genres);

  // Items: genres, clusters, titles, descriptions.
  Rng item_rng = root.split("items");
  std::unordered_set<std::string> reserved;
  for (const auto& word : wd::lexicon()) reserved.insert(word);
  for (const auto& g : w.genre_names) reserved.insert(g);
  const std::size_t pool_size = std::max<std::size_t>(
      60, static_cast<std::size_t>(config.title_pool_ratio * static_cast<double>(n)));
  const auto title_words = wd::word_pool(pool_size, false, item_rng, reserved);
  const auto star_words = wd::word_pool(std::max<std::size_t>(40, n / 10), true,
                                        item_rng, reserved);

  std::vector<std::size_t> slots(n);
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  item_rng.shuffle(slots);
  w.genre.assign(n, 0);
  w.cluster.assign(n, 0);
  {
    std::vector<int> members_in_genre(static_cast<std::size_t>(n_genres), 0);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = slots[k];
      const int g = static_cast<int>(k % static_cast<std::size_t>(n_genres));
      w.genre[i] = g;
      const int within = members_in_genre[static_cast<std::size_t>(g)]++;
      w.cluster[i] = g * (config.n_items / n_genres + 1) + within / config.cluster_size;
    }
  }

  std::vector<Item> items(n);
  std::set<std::string> used_titles;
  std::set<std::string> used_descriptions;
  for (std::size_t i = 0; i < n; ++i) {
    std::string title;
    do {
      const double u = item_rng.uniform();
      const int words = u < 0.3 ? 1 : (u < 0.75 ? 2 : 3);
      title.clear();
      for (int k = 0; k < words; ++k) {
        if (k) title.push_back(' ');
        title += title_words[item_rng.below(title_words.size())];
      }
    } while (!used_titles.insert(title).second);
    std::string desc;
    do {
      const int year = 1950 + static_cast<int>(item_rng.below(74));
      desc = "a " + std::to_string(year) + " " +
             w.genre_names[static_cast<std::size_t>(w.genre[i])] +
             " film starring " + star_words[item_rng.below(star_words.size())];
    } while (!used_descriptions.insert(desc).second);
    items[i].title = title;
    items[i].description = desc;
  }

  auto vocab = std::make_shared<Vocabulary>();
  for (const auto& item : items) vocab->extend(item.title);
  for (const auto& item : items) vocab->extend(item.description);
  for (const auto& word : wd::lexicon()) vocab->add(word);
  for (const auto& g : w.genre_names) vocab->add(g);
  w.vocab = vocab;
  w.catalog = ItemCatalog::create(std::move(items), vocab);

  std::vector<std::vector<ItemId>> by_genre(static_cast<std::size_t>(n_genres));
  std::map<int, std::vector<ItemId>> by_cluster;
  for (std::size_t i = 0; i < n; ++i) {
    by_genre[static_cast<std::size_t>(w.genre[i])].push_back(static_cast<ItemId>(i));
    by_cluster[w.cluster[i]].push_back(static_cast<ItemId>(i));
  }

  // Popularity rankings.
  Rng rank_rng = root.split("corpus_rank");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rank_rng.shuffle(perm);
  w.corpus_rank.assign(n, 0);
  for (std::size_t r = 0; r < n; ++r) w.corpus_rank[static_cast<std::size_t>(perm[r])] = static_cast<int>(r);
  w.corpus_prob = wd::zipf_probs(w.corpus_rank, config.zipf_exponent_corpus);

  Rng mis_rng = root.split("misalignment");
  Rng drift_rng = root.split("drift");
  w.platform_rank.push_back(
      wd::permute_fraction(w.corpus_rank, config.misalignment_delta, mis_rng));
  for (int p = 1; p < config.n_periods; ++p) {
    w.platform_rank.push_back(
        wd::permute_fraction(w.platform_rank.back(), config.drift_rate, drift_rng));
  }
  for (const auto& rank : w.platform_rank) {
    w.platform_prob.push_back(wd::zipf_probs(rank, config.zipf_exponent_platform));
  }

  const Vocabulary& voc = *w.vocab;
  auto title_of = [&](ItemId id) { return w.catalog.item(id).title; };
  auto titles_of = [&](const std::vector<ItemId>& ids) {
    std::vector<std::string> t;
    for (ItemId id : ids) t.push_back(title_of(id));
    return t;
  };
  auto make_turn = [&](Speaker s, const std::string& text,
                       std::vector<ItemId> mentioned) {
    ConversationTurn turn;
    turn.speaker = s;
    turn.text = voc.encode(text);
    turn.items = std::move(mentioned);
    return turn;
  };
  auto opener = [&](Rng& rng, int g, const std::vector<ItemId>& ctx) {
    const auto& t = wd::seeker_openers()[rng.below(wd::seeker_openers().size())];
    std::string s = wd::replace_all(t, "{g}", w.genre_names[static_cast<std::size_t>(g)]);
    return wd::replace_all(s, "{items}", wd::join_items(titles_of(ctx)));
  };
  auto rec_line = [&](Rng& rng, ItemId target) {
    const auto& t = wd::recommender_lines()[rng.below(wd::recommender_lines().size())];
    return wd::replace_all(t, "{t}", title_of(target));
  };
  auto followup = [&](Rng& rng, int g) {
    const auto& t = wd::seeker_followups()[rng.below(wd::seeker_followups().size())];
    return wd::replace_all(t, "{g}", w.genre_names[static_cast<std::size_t>(g)]);
  };

  // Pretrain corpus: L2I descriptions and short L2R dialogues, all item
  // choices proportional to corpus popularity.
  {
    Rng rng = root.split("corpus");
    const DiscreteSampler pop(w.corpus_prob);
    std::vector<std::int64_t> corpus_count(n, 0);
    int conv_id = 0;
    while (static_cast<int>(w.corpus.size()) < config.corpus_size) {
      if (rng.bernoulli(config.l2i_fraction)) {
        const ItemId id = static_cast<ItemId>(pop(rng));
        w.corpus.push_back(make_l2i_sample(w.catalog.item(id), voc));
        ++corpus_count[static_cast<std::size_t>(id)];
        continue;
      }
      const ItemId target = static_cast<ItemId>(pop(rng));
      const int g = w.genre[static_cast<std::size_t>(target)];
      const auto& pool = by_genre[static_cast<std::size_t>(g)];
      const int n_ctx = 1 + static_cast<int>(rng.below(4));
      std::vector<ItemId> ctx;
      for (int k = 0; k < n_ctx; ++k) {
        std::vector<ItemId> exclude = ctx;
        exclude.push_back(target);
        const ItemId c = wd::draw_from(pool, w.corpus_prob, exclude, rng);
        if (c < 0) break;
        ctx.push_back(c);
      }
      Conversation conv;
      conv.id = conv_id++;
      if (ctx.empty()) {
        conv.turns.push_back(make_turn(
            Speaker::kSeeker,
            "can you suggest a " + w.genre_names[static_cast<std::size_t>(g)] + " film ?",
            {}));
      } else {
        conv.turns.push_back(make_turn(Speaker::kSeeker, opener(rng, g, ctx), ctx));
      }
      conv.turns.push_back(
          make_turn(Speaker::kRecommender, rec_line(rng, target), {target}));
      if (rng.bernoulli(0.3)) {
        const ItemId second = wd::draw_from(pool, w.corpus_prob, {target}, rng);
        if (second >= 0) {
          conv.turns.push_back(make_turn(Speaker::kSeeker, followup(rng, g), {}));
          conv.turns.push_back(
              make_turn(Speaker::kRecommender, rec_line(rng, second), {second}));
        }
      }
      for (const auto& turn : conv.turns) {
        for (ItemId id : turn.items) ++corpus_count[static_cast<std::size_t>(id)];
      }
      for (auto& s : make_rec_samples({conv}, w.catalog)) {
        if (static_cast<int>(w.corpus.size()) >= config.corpus_size) break;
        w.corpus.push_back(std::move(s));
      }
    }
    w.catalog.set_counts(corpus_count, {});
  }

  // Platform conversations.
  {
    Rng rng = root.split("platform");
    std::vector<DiscreteSampler> pop;
    for (const auto& p : w.platform_prob) pop.emplace_back(p);
    const std::vector<double> uniform(n, 1.0);
    std::vector<std::int64_t> corpus_count(n), platform_count(n, 0);
    for (std::size_t i = 0; i < n; ++i) corpus_count[i] = w.catalog.item(static_cast<ItemId>(i)).corpus_count;
    for (int k = 0; k < config.platform_size; ++k) {
      const int period = static_cast<int>(static_cast<long>(k) * config.n_periods /
                                          config.platform_size);
      const auto& prob = w.platform_prob[static_cast<std::size_t>(period)];
      const ItemId target = static_cast<ItemId>(pop[static_cast<std::size_t>(period)](rng));
      const int g = w.genre[static_cast<std::size_t>(target)];
      const auto& genre_pool = by_genre[static_cast<std::size_t>(g)];
      const auto& cluster_pool = by_cluster[w.cluster[static_cast<std::size_t>(target)]];
      const int n_ctx = 1 + static_cast<int>(rng.below(2));
      std::vector<ItemId> ctx;
      for (int c = 0; c < n_ctx; ++c) {
        std::vector<ItemId> exclude = ctx;
        exclude.push_back(target);
        ItemId pick = -1;
        if (rng.bernoulli(config.cluster_affinity)) {
          pick = wd::draw_from(cluster_pool, uniform, exclude, rng);
        }
        if (pick < 0) pick = wd::draw_from(genre_pool, prob, exclude, rng);
        if (pick < 0) break;
        ctx.push_back(pick);
      }
      Conversation conv;
      conv.id = k;
      conv.period = period;
      if (ctx.empty()) {
        conv.turns.push_back(make_turn(
            Speaker::kSeeker,
            "can you suggest a " + w.genre_names[static_cast<std::size_t>(g)] + " film ?",
            {}));
      } else {
        conv.turns.push_back(make_turn(Speaker::kSeeker, opener(rng, g, ctx), ctx));
      }
      conv.turns.push_back(
          make_turn(Speaker::kRecommender, rec_line(rng, target), {target}));
      if (rng.bernoulli(0.5)) {
        // The second suggestion may repeat a context item.
        ItemId second = -1;
        if (rng.bernoulli(config.cluster_affinity)) {
          second = wd::draw_from(cluster_pool, uniform, {target}, rng);
        }
        if (second < 0) second = wd::draw_from(genre_pool, prob, {target}, rng);
        if (second >= 0) {
          conv.turns.push_back(make_turn(Speaker::kSeeker, followup(rng, g), {}));
          conv.turns.push_back(
              make_turn(Speaker::kRecommender, rec_line(rng, second), {second}));
        }
      }
      for (const auto& turn : conv.turns) {
        for (ItemId id : turn.items) ++platform_count[static_cast<std::size_t>(id)];
      }
      w.platform.push_back(std::move(conv));
    }
    w.catalog.set_counts(corpus_count, platform_count);
  }
  return w;
}

// Rebuilds the vocabulary used by gen_world from the persisted catalog and
// texts: titles, descriptions, then every other token in first-seen order.
inline Vocabulary build_vocabulary(const std::vector<Item>& items,
                                   const std::vector<std::string>& texts) {
  Vocabulary v;
  for (const auto& item : items) v.extend(item.title);
  for (const auto& item : items) v.extend(item.description);
  for (const auto& t : texts) v.extend(t);
  return v;
}

}  // namespace rta
