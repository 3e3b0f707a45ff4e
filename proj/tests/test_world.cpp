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

#include <gtest/gtest.h>

#include "rta/world.hpp"
#include "stats.hpp"

namespace rta {
namespace {

WorldConfig small_world() {
  WorldConfig c;
  c.n_items = 200;
  c.corpus_size = 2000;
  c.platform_size = 1200;
  c.n_genres = 10;
  c.seed = 3;
  return c;
}

double kl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

TEST(World, SizesAndCounts) {
  const World w = gen_world(small_world());
  EXPECT_EQ(w.catalog.size(), 200u);
  EXPECT_EQ(w.corpus.size(), 2000u);
  EXPECT_EQ(w.platform.size(), 1200u);
  EXPECT_EQ(w.platform_rank.size(), 12u);
  std::size_t l2i = 0;
  for (const auto& s : w.corpus) l2i += s.kind == SampleKind::kL2I;
  EXPECT_NEAR(static_cast<double>(l2i) / 2000.0, 0.2, 0.04);
  std::vector<std::int64_t> platform(200, 0);
  for (const auto& c : w.platform) {
    EXPECT_GE(c.period, 0);
    EXPECT_LT(c.period, 12);
    for (const auto& t : c.turns) {
      for (ItemId id : t.items) ++platform[static_cast<std::size_t>(id)];
    }
  }
  for (std::size_t i = 0; i < 200; ++i) {
    EXPECT_EQ(w.catalog.item(static_cast<ItemId>(i)).platform_count, platform[i]);
  }
  // Periods are contiguous blocks of 100 conversations.
  EXPECT_EQ(w.platform[99].period, 0);
  EXPECT_EQ(w.platform[100].period, 1);
}

TEST(World, EveryMentionIsLocatable) {
  const World w = gen_world(small_world());
  for (const auto& c : w.platform) {
    for (const auto& t : c.turns) {
      EXPECT_EQ(annotated_spans(t, w.catalog).size(), t.items.size());
    }
  }
}

TEST(World, Deterministic) {
  const World a = gen_world(small_world());
  const World b = gen_world(small_world());
  EXPECT_EQ(write_samples_jsonl(a.corpus, *a.vocab), write_samples_jsonl(b.corpus, *b.vocab));
  EXPECT_EQ(write_conversations_jsonl(a.platform, *a.vocab),
            write_conversations_jsonl(b.platform, *b.vocab));
  EXPECT_EQ(a.vocab->serialize(), b.vocab->serialize());
  auto other = small_world();
  other.seed = 4;
  const World c = gen_world(other);
  EXPECT_NE(write_samples_jsonl(a.corpus, *a.vocab), write_samples_jsonl(c.corpus, *c.vocab));
}

TEST(World, CorpusIgnoresPlatformKnobs) {
  const World a = gen_world(small_world());
  auto cfg = small_world();
  cfg.misalignment_delta = 0.9;
  cfg.drift_rate = 0.4;
  cfg.platform_size = 300;
  cfg.zipf_exponent_platform = 1.3;
  cfg.cluster_affinity = 0.0;
  const World b = gen_world(cfg);
  EXPECT_EQ(write_samples_jsonl(a.corpus, *a.vocab), write_samples_jsonl(b.corpus, *b.vocab));
  EXPECT_EQ(a.corpus_rank, b.corpus_rank);
}

TEST(World, ZeroExponentIsUniform) {
  auto cfg = small_world();
  cfg.n_items = 100;
  cfg.zipf_exponent_corpus = 0.0;
  cfg.l2i_fraction = 1.0;
  cfg.corpus_size = 10000;
  const World w = gen_world(cfg);
  std::vector<double> counts(100, 0.0);
  for (const auto& s : w.corpus) counts[static_cast<std::size_t>(s.target_item)] += 1.0;
  const double stat = testing::chi_square_stat(counts, std::vector<double>(100, 100.0));
  EXPECT_GT(testing::chi_square_p_value(stat, 99), 0.01) << stat;
}

TEST(World, ZipfPopularityOrder) {
  auto cfg = small_world();
  cfg.corpus_size = 20000;
  cfg.l2i_fraction = 1.0;
  const World w = gen_world(cfg);
  std::vector<double> by_rank(200, 0.0);
  for (const auto& s : w.corpus) {
    by_rank[static_cast<std::size_t>(w.corpus_rank[static_cast<std::size_t>(s.target_item)])] += 1;
  }
  // H_200 = 5.878; rank 0 expects 20000 / 5.878 = 3402.
  EXPECT_NEAR(by_rank[0], 3402.0, 4 * std::sqrt(3402.0));
  EXPECT_NEAR(by_rank[9], 340.2, 4 * std::sqrt(340.2));
}

TEST(World, AlignedWorldHasIdenticalRankings) {
  auto cfg = small_world();
  cfg.misalignment_delta = 0.0;
  cfg.drift_rate = 0.0;
  const World w = gen_world(cfg);
  for (const auto& r : w.platform_rank) EXPECT_EQ(r, w.corpus_rank);
  for (double d : w.planted_shift(5)) EXPECT_NEAR(d, 0.0, 1e-12);
}

TEST(World, MisalignmentIncreasesDivergence) {
  double prev = -1.0;
  for (double delta : {0.0, 0.25, 0.5, 1.0}) {
    auto cfg = small_world();
    cfg.n_items = 2000;
    cfg.corpus_size = 10;
    cfg.platform_size = 10;
    cfg.misalignment_delta = delta;
    const World w = gen_world(cfg);
    const double d = kl(w.platform_prob[0], w.corpus_prob);
    if (delta == 0.0) {
      EXPECT_EQ(d, 0.0);
    } else {
      EXPECT_GT(d, prev) << delta;
    }
    prev = d;
  }
}

TEST(World, DriftPermutesAFractionPerPeriod) {
  auto cfg = small_world();
  cfg.misalignment_delta = 0.0;
  cfg.drift_rate = 0.1;
  const World w = gen_world(cfg);
  for (std::size_t p = 1; p < w.platform_rank.size(); ++p) {
    int changed = 0;
    for (std::size_t i = 0; i < 200; ++i) {
      changed += w.platform_rank[p][i] != w.platform_rank[p - 1][i];
    }
    EXPECT_LE(changed, 20);
    EXPECT_GT(changed, 0);
    auto sorted = w.platform_rank[p];
    std::sort(sorted.begin(), sorted.end());
    for (int r = 0; r < 200; ++r) ASSERT_EQ(sorted[static_cast<std::size_t>(r)], r);
  }
}

TEST(World, VocabularyRebuildsFromPersistedText) {
  const World w = gen_world(small_world());
  std::vector<std::string> texts;
  for (const auto& s : w.corpus) texts.push_back(w.vocab->decode(s.context_tokens));
  for (const auto& c : w.platform) {
    for (const auto& t : c.turns) texts.push_back(w.vocab->decode(t.text));
  }
  const Vocabulary rebuilt = build_vocabulary(w.catalog.items(), texts);
  for (std::size_t i = 0; i < rebuilt.size(); ++i) {
    EXPECT_TRUE(w.vocab->contains(rebuilt.token(static_cast<TokenId>(i))));
  }
  for (const auto& item : w.catalog.items()) {
    EXPECT_EQ(rebuilt.encode(item.title), item.title_tokens);
  }
}

TEST(World, ValidatesConfig) {
  auto bad = small_world();
  bad.misalignment_delta = 1.5;
  EXPECT_THROW(gen_world(bad), Error);
  bad = small_world();
  bad.n_items = 1;
  EXPECT_THROW(gen_world(bad), Error);
  bad = small_world();
  bad.zipf_exponent_corpus = -1;
  EXPECT_THROW(gen_world(bad), Error);
}

}  // namespace
}  // namespace rta
