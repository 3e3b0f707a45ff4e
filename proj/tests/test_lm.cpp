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

#include <set>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "rta/lm.hpp"

namespace rta {
namespace {

LMConfig tiny_config(int vocab, int d = 16, int ctx = 32) {
  LMConfig c;
  c.vocab_size = vocab;
  c.d_model = d;
  c.n_layers = 2;
  c.n_heads = 2;
  c.context_len = ctx;
  c.seed = 7;
  return c;
}

TEST(LM, EmbedTokensIsRowLookup) {
  auto cat = testing::movie_catalog();
  LanguageModel<float> lm(tiny_config(static_cast<int>(cat.vocab().size())));
  const TokenSeq title = cat.item(0).title_tokens;
  ASSERT_EQ(title.size(), 3u);
  auto rows = lm.embed_tokens(title);
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(rows[i].size(), 16);
    EXPECT_EQ(rows[i], lm.token_embeddings().row(title[i]));
  }
  EXPECT_TRUE(lm.embed_tokens({}).empty());
  auto rep = lm.embed_tokens({title[0], title[0]});
  EXPECT_EQ(rep[0], rep[1]);
  EXPECT_THROW(lm.embed_tokens({static_cast<TokenId>(cat.vocab().size())}), Error);
}

TEST(LM, TiedOutputProjection) {
  auto cat = testing::movie_catalog();
  LanguageModel<double> lm(tiny_config(static_cast<int>(cat.vocab().size())));
  const TokenSeq ctx = cat.vocab().encode("i loved edge of");
  const auto q = lm.context_embedding(ctx);
  const auto lp = lm.next_log_probs({ctx});
  const auto& E = lm.token_embeddings();
  const Eigen::VectorXd z = E * q.transpose();
  const double lse = log_sum_exp(std::vector<double>(z.data(), z.data() + z.size()));
  for (Eigen::Index v = 0; v < E.rows(); ++v) {
    EXPECT_NEAR(lp(0, v), q.dot(E.row(v)) - lse, 1e-12);
  }
}

TEST(LM, CausalityUnderSuffixPerturbation) {
  LanguageModel<double> lm(tiny_config(20));
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    TokenSeq seq;
    for (int i = 0; i < 12; ++i) seq.push_back(4 + static_cast<TokenId>(rng.below(16)));
    const std::size_t t = rng.below(11);
    TokenSeq other = seq;
    for (std::size_t i = t + 1; i < other.size(); ++i) {
      other[i] = 4 + static_cast<TokenId>(rng.below(16));
    }
    ad::Tape<double> tape(false);
    auto a = lm.logits(tape, lm.hidden(tape, {seq}));
    auto b = lm.logits(tape, lm.hidden(tape, {other}));
    EXPECT_TRUE(a.value().topRows(static_cast<Eigen::Index>(t + 1))
                    .isApprox(b.value().topRows(static_cast<Eigen::Index>(t + 1)), 1e-13));
  }
}

TEST(LM, CrossEntropyGradientMatchesFiniteDifferences) {
  LanguageModel<double> lm(tiny_config(12, 16, 16));
  std::vector<LMSequence> data = {{{4, 5, 6, 7, 8, 3}, 2}, {{9, 10, 4, 11, 3}, 0}};
  std::vector<const LMSequence*> batch = {&data[0], &data[1]};
  for (LossScope scope : {LossScope::kAll, LossScope::kTarget}) {
    auto r = testing::gradcheck(nn::params_of(lm), [&](ad::Tape<double>& t) {
      return lm.loss(t, batch, scope);
    });
    EXPECT_LT(r.worst, 1e-3) << r.worst_param;
  }
}

TEST(LM, LeftTruncatesLongContexts) {
  LanguageModel<float> lm(tiny_config(12, 16, 8));
  TokenSeq long_ctx(30, 5);
  long_ctx.back() = 6;
  auto q = lm.context_embedding(long_ctx);
  TokenSeq tail(long_ctx.end() - 8, long_ctx.end());
  // Truncation keeps the last 8 tokens (the <bos> falls off).
  ad::Tape<float> tape(false);
  auto h = lm.hidden(tape, {tail});
  EXPECT_TRUE(q.isApprox(h.value().row(7), 1e-6f));
}

TEST(LM, MemorizesRepeatedSentence) {
  Vocabulary vocab;
  const std::string sentence = "the quick brown fox jumps over the lazy dog .";
  vocab.extend(sentence);
  const TokenSeq tokens = vocab.encode(sentence);
  std::vector<LMSequence> data(512, LMSequence{tokens, 0});
  LMConfig cfg = tiny_config(static_cast<int>(vocab.size()), 32, 16);
  LanguageModel<float> lm(cfg);
  LMTrainConfig tc;
  tc.epochs = 200;
  tc.lr = 3e-3;
  tc.warmup_steps = 10;
  tc.scope = LossScope::kAll;
  const TrainResult r = train_lm(lm, data, tc);
  EXPECT_LT(r.final_loss, r.initial_loss);
  const TokenSeq out = lm.greedy({tokens[0]}, static_cast<int>(tokens.size()) - 1);
  EXPECT_EQ(out, tokens) << vocab.decode(out);
}

TEST(LM, TrainingIsDeterministicAndReducesLoss) {
  auto cat = testing::movie_catalog();
  std::vector<LMSequence> data;
  for (const auto& item : cat.items()) {
    RecSample s = make_l2i_sample(item, cat.vocab());
    data.push_back(lm_sequences({s}, cat)[0]);
  }
  LMTrainConfig tc;
  tc.epochs = 20;
  tc.batch_size = 2;
  tc.lr = 3e-3;
  tc.warmup_steps = 0;
  double losses[2];
  std::uint64_t hashes[2];
  for (int run = 0; run < 2; ++run) {
    LanguageModel<float> lm(tiny_config(static_cast<int>(cat.vocab().size())));
    const TrainResult r = train_lm(lm, data, tc);
    EXPECT_LT(r.final_loss, r.initial_loss);
    losses[run] = r.final_loss;
    hashes[run] = lm.hash();
  }
  EXPECT_EQ(losses[0], losses[1]);
  EXPECT_EQ(hashes[0], hashes[1]);
}

TEST(LM, NonFiniteLossAbortsWithDiagnostics) {
  LanguageModel<float> lm(tiny_config(12));
  nn::params_of(lm)[0]->value(5, 0) = std::numeric_limits<float>::quiet_NaN();
  std::vector<LMSequence> data = {{{5, 6, 7}, 0}};
  try {
    train_lm(lm, data, LMTrainConfig{});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("lr"), std::string::npos) << e.what();
  }
}

TEST(LM, ContextEmbeddingContract) {
  auto cat = testing::movie_catalog();
  LanguageModel<float> lm(tiny_config(static_cast<int>(cat.vocab().size())));
  const TokenSeq a = cat.vocab().encode("i loved the matrix");
  const TokenSeq b = cat.vocab().encode("you should watch up");
  const auto qa = lm.context_embedding(a);
  EXPECT_EQ(qa.size(), 16);
  EXPECT_EQ(qa, lm.context_embedding(a));
  const auto qb = lm.context_embedding(b);
  EXPECT_LT(qa.dot(qb) / (qa.norm() * qb.norm()), 1.0f - 1e-6f);
}

TEST(LM, GenerateTitlesClampsToCatalogAndIsDistinct) {
  auto cat = testing::movie_catalog();
  LanguageModel<float> lm(tiny_config(static_cast<int>(cat.vocab().size())));
  const auto ids = generate_titles(lm, cat, cat.vocab().encode("you should watch"), 50);
  ASSERT_EQ(ids.size(), cat.size());
  std::set<ItemId> unique(ids.begin(), ids.end());
  EXPECT_EQ(unique.size(), ids.size());
  for (ItemId id : ids) EXPECT_LT(static_cast<std::size_t>(id), cat.size());
  EXPECT_EQ(generate_titles(lm, cat, {Vocabulary::kBos}, 2).size(), 2u);
}

// Beam scores equal total sequence log-probability including <eoi>.
TEST(LM, GenerateTitlesRanksBySequenceLogProbability) {
  auto cat = testing::movie_catalog();
  LanguageModel<double> lm(tiny_config(static_cast<int>(cat.vocab().size())));
  const TokenSeq ctx = cat.vocab().encode("i loved");
  std::vector<std::pair<double, ItemId>> brute;
  for (const auto& item : cat.items()) {
    double lp = 0.0;
    TokenSeq prefix = ctx;
    TokenSeq full = item.title_tokens;
    full.push_back(Vocabulary::kEoi);
    for (TokenId t : full) {
      lp += lm.next_log_probs({prefix})(0, t);
      prefix.push_back(t);
    }
    brute.emplace_back(-lp, item.id);
  }
  std::sort(brute.begin(), brute.end());
  const auto ids = generate_titles(lm, cat, ctx, cat.size(), 64);
  ASSERT_EQ(ids.size(), brute.size());
  for (std::size_t i = 0; i < ids.size(); ++i) EXPECT_EQ(ids[i], brute[i].second);
}

TEST(LM, OverfitPairIsGeneratedFirst) {
  auto cat = testing::movie_catalog();
  RecSample s;
  s.context_tokens = cat.vocab().encode("seeker : i loved ! recommender : you should watch");
  s.target_item = 3;
  std::vector<LMSequence> data(64, lm_sequences({s}, cat)[0]);
  LanguageModel<float> lm(tiny_config(static_cast<int>(cat.vocab().size())));
  LMTrainConfig tc;
  tc.epochs = 60;
  tc.batch_size = 16;
  tc.lr = 3e-3;
  tc.warmup_steps = 0;
  train_lm(lm, data, tc);
  EXPECT_EQ(generate_titles(lm, cat, s.context_tokens, 3).front(), 3);
}

TEST(LM, CheckpointRoundTrip) {
  auto cat = testing::movie_catalog();
  LanguageModel<float> lm(tiny_config(static_cast<int>(cat.vocab().size())));
  const Checkpoint c = lm.to_checkpoint();
  auto back = LanguageModel<float>::from_checkpoint(Checkpoint::parse(c.serialize(), "mem"));
  EXPECT_EQ(back.hash(), lm.hash());
  const TokenSeq ctx = cat.vocab().encode("i loved");
  EXPECT_EQ(back.context_embedding(ctx), lm.context_embedding(ctx));
}

}  // namespace
}  // namespace rta
