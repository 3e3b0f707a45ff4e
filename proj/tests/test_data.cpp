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

#include "fixtures.hpp"
#include "rta/data.hpp"

namespace rta {
namespace {

ConversationTurn turn(const ItemCatalog& cat, Speaker s, const std::string& text,
                      std::vector<ItemId> items) {
  return {s, cat.vocab().encode(text), std::move(items)};
}

Conversation two_round(const ItemCatalog& cat) {
  Conversation c;
  c.turns.push_back(turn(cat, Speaker::kSeeker, "i loved the matrix !", {2}));
  c.turns.push_back(turn(cat, Speaker::kRecommender,
                         "you should watch edge of tomorrow . up", {0, 4}));
  c.turns.push_back(turn(cat, Speaker::kSeeker, "i loved up", {4}));
  c.turns.push_back(turn(cat, Speaker::kRecommender, "you should watch tomorrow", {1}));
  return c;
}

TEST(Data, RenderConversationMarksAnnotatedItems) {
  const auto cat = testing::movie_catalog();
  Conversation c;
  // "up" is mentioned but not annotated, so it gets no marker.
  c.turns.push_back(turn(cat, Speaker::kSeeker, "the matrix or up", {2}));
  c.turns.push_back(turn(cat, Speaker::kRecommender, "tomorrow", {1}));
  EXPECT_EQ(cat.vocab().decode(render_conversation(c, cat)),
            "seeker : the matrix <eoi> or up recommender : tomorrow <eoi>");
}

TEST(Data, RecSamplesOnePerRecommendedItem) {
  const auto cat = testing::movie_catalog();
  const auto samples = make_rec_samples({two_round(cat)}, cat);
  ASSERT_EQ(samples.size(), 3u);
  const auto& v = cat.vocab();
  EXPECT_EQ(v.decode(samples[0].context_tokens),
            "seeker : i loved the matrix <eoi> ! recommender : you should watch");
  EXPECT_EQ(samples[0].target_item, 0);
  EXPECT_EQ(samples[0].context_items, (std::vector<ItemId>{2}));
  EXPECT_EQ(v.decode(samples[1].context_tokens),
            "seeker : i loved the matrix <eoi> ! recommender : you should watch "
            "edge of tomorrow <eoi> .");
  EXPECT_EQ(samples[1].target_item, 4);
  EXPECT_EQ(samples[1].context_items, (std::vector<ItemId>{2, 0}));
  EXPECT_EQ(samples[2].target_item, 1);
  EXPECT_EQ(samples[2].context_items, (std::vector<ItemId>{2, 0, 4, 4}));
  for (const auto& s : samples) EXPECT_EQ(s.kind, SampleKind::kL2R);
}

TEST(Data, L2ISamplesFromCatalog) {
  const auto cat = testing::movie_catalog();
  const auto samples = make_rec_samples({}, cat, Mixture{false, true});
  ASSERT_EQ(samples.size(), cat.size());
  EXPECT_EQ(samples[4].kind, SampleKind::kL2I);
  EXPECT_EQ(cat.vocab().decode(samples[4].context_tokens),
            "description : a 2009 animated adventure film title :");
  TokenSeq seq;
  const std::size_t start = completion_tokens(samples[4], cat, seq);
  EXPECT_EQ(start, samples[4].context_tokens.size());
  EXPECT_EQ(cat.vocab().decode(TokenSeq(seq.begin() + static_cast<long>(start), seq.end())),
            "up <eoi>");
}

std::vector<Conversation> numbered(int n, int periods) {
  std::vector<Conversation> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)].id = i;
    out[static_cast<std::size_t>(i)].period = i * periods / n;
  }
  return out;
}

std::set<int> ids(const std::vector<Conversation>& v) {
  std::set<int> s;
  for (const auto& c : v) s.insert(c.id);
  return s;
}

TEST(Data, RandomSplitSizesAndDisjointness) {
  for (int n : {100, 10, 7}) {
    const auto data = numbered(n, 1);
    const auto s = split(data, SplitSpec::random_8_1_1(3));
    EXPECT_EQ(s.valid.size(), static_cast<std::size_t>(n / 10));
    EXPECT_EQ(s.test.size(), static_cast<std::size_t>(n / 10));
    EXPECT_EQ(s.train.size(), static_cast<std::size_t>(n - 2 * (n / 10)));
    std::set<int> all = ids(s.train);
    for (int id : ids(s.valid)) EXPECT_TRUE(all.insert(id).second);
    for (int id : ids(s.test)) EXPECT_TRUE(all.insert(id).second);
    EXPECT_EQ(all.size(), static_cast<std::size_t>(n));
  }
  const auto data = numbered(100, 1);
  EXPECT_EQ(ids(split(data, SplitSpec::random_8_1_1(3)).test),
            ids(split(data, SplitSpec::random_8_1_1(3)).test));
  EXPECT_NE(ids(split(data, SplitSpec::random_8_1_1(3)).test),
            ids(split(data, SplitSpec::random_8_1_1(4)).test));
}

TEST(Data, TemporalSplit) {
  const auto data = numbered(120, 12);
  const auto s = split(data, SplitSpec::temporal(2));
  EXPECT_EQ(s.test.size(), 10u);
  EXPECT_EQ(s.valid.size(), 10u);
  EXPECT_EQ(s.train.size(), 100u);
  for (const auto& c : s.test) EXPECT_EQ(c.period, 11);
  for (const auto& c : s.valid) EXPECT_EQ(c.period, 10);
  for (const auto& c : s.train) EXPECT_LT(c.period, 10);
  const auto s3 = split(data, SplitSpec::temporal(3));
  EXPECT_EQ(s3.valid.size(), 20u);
  EXPECT_THROW(split(numbered(20, 2), SplitSpec::temporal(2)), Error);
  EXPECT_THROW(split(numbered(30, 3), SplitSpec::temporal(3)), Error);
  EXPECT_THROW(split({}, SplitSpec::random_8_1_1(0)), Error);
}

TEST(Data, LoadConversationsNormalizesTurns) {
  const auto cat = testing::movie_catalog();
  const auto dir = testing::scratch_dir("data_load");
  write_file(dir / "c.jsonl",
             R"({"id": 5, "period": 2, "turns": [)"
             R"({"speaker": "recommender", "text": "try up", "items": [4]},)"
             R"({"speaker": "recommender", "text": "or tomorrow", "items": [1, 3, 77]},)"
             R"({"speaker": "seeker", "text": "thanks"}]})"
             "\n\n");
  LoadStats stats;
  const auto convs = load_conversations(dir / "c.jsonl", cat, &stats);
  ASSERT_EQ(convs.size(), 1u);
  const auto& c = convs[0];
  EXPECT_EQ(c.id, 5);
  EXPECT_EQ(c.period, 2);
  ASSERT_EQ(c.turns.size(), 3u);
  EXPECT_EQ(c.turns[0].speaker, Speaker::kSeeker);
  EXPECT_TRUE(c.turns[0].text.empty());
  EXPECT_EQ(cat.vocab().decode(c.turns[1].text), "try up or tomorrow");
  EXPECT_EQ(c.turns[1].items, (std::vector<ItemId>{4, 1}));
  EXPECT_EQ(stats.dropped_mentions, 2u);
}

TEST(Data, LoadErrorsCarryLineNumbers) {
  const auto cat = testing::movie_catalog();
  const auto dir = testing::scratch_dir("data_err");
  auto expect_line = [&](const std::string& body, const std::string& where) {
    write_file(dir / "x.jsonl", body);
    try {
      load_conversations(dir / "x.jsonl", cat);
      FAIL() << body;
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find(where), std::string::npos) << e.what();
    }
  };
  const std::string ok = R"({"turns": [{"speaker": "seeker", "text": "hi"}]})";
  expect_line(ok + "\n{not json\n", "x.jsonl:2");
  expect_line(ok + "\n" + ok + "\n" + R"({"turns": [{"speaker": "bot", "text": "hi"}]})",
              "x.jsonl:3");
  expect_line(R"({"turns": []})", "x.jsonl:1");
  expect_line(R"({"id": 1})", "x.jsonl:1");
  EXPECT_THROW(load_conversations(dir / "none.jsonl", cat), MissingInput);
}

TEST(Data, JsonlRoundTrip) {
  const auto cat = testing::movie_catalog();
  const auto dir = testing::scratch_dir("data_rt");
  std::vector<Conversation> convs = {two_round(cat)};
  convs[0].id = 9;
  convs[0].period = 4;
  write_file(dir / "c.jsonl", write_conversations_jsonl(convs, cat.vocab()));
  const auto back = load_conversations(dir / "c.jsonl", cat);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(write_conversations_jsonl(back, cat.vocab()),
            write_conversations_jsonl(convs, cat.vocab()));

  auto samples = make_rec_samples(convs, cat, Mixture{true, true});
  write_file(dir / "s.jsonl", write_samples_jsonl(samples, cat.vocab()));
  const auto sback = load_samples(dir / "s.jsonl", cat);
  ASSERT_EQ(sback.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(sback[i].context_tokens, samples[i].context_tokens);
    EXPECT_EQ(sback[i].target_item, samples[i].target_item);
    EXPECT_EQ(sback[i].kind, samples[i].kind);
    EXPECT_EQ(sback[i].context_items, samples[i].context_items);
  }
  write_file(dir / "bad.jsonl", R"({"kind": "L2R", "context": "hi", "target": 99})");
  EXPECT_THROW(load_samples(dir / "bad.jsonl", cat), Error);
}

}  // namespace
}  // namespace rta
