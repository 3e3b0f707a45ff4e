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

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "rta/catalog.hpp"
#include "rta/common.hpp"
#include "rta/rng.hpp"
#include "rta/tokenizer.hpp"

namespace rta {

enum class Speaker { kSeeker, kRecommender };
enum class SampleKind { kL2I, kL2R };

inline const char* speaker_name(Speaker s) {
  return s == Speaker::kSeeker ? "seeker" : "recommender";
}

inline const char* kind_name(SampleKind k) {
  return k == SampleKind::kL2I ? "L2I" : "L2R";
}

struct ConversationTurn {
  Speaker speaker = Speaker::kSeeker;
  TokenSeq text;
  std::vector<ItemId> items;
};

struct Conversation {
  int id = 0;
  std::vector<ConversationTurn> turns;
  int period = 0;
};

struct RecSample {
  TokenSeq context_tokens;
  ItemId target_item = 0;
  SampleKind kind = SampleKind::kL2R;
  int period = 0;
  // Items mentioned before the target, oldest first (the recommender's
  // interaction history).
  std::vector<ItemId> context_items;
};

// ---------------------------------------------------------------------------
// Prompt rendering. A conversation renders as
//   seeker : <text> recommender : <text> ...
// with <eoi> after every annotated item mention. An L2R context stops right
// before the first title token of its target; an L2I context is
//   description : <description> title :

inline TokenSeq speaker_tag(Speaker s, const Vocabulary& vocab) {
  return vocab.encode(std::string(speaker_name(s)) + " :");
}

inline TokenSeq l2i_prompt(const Item& item, const Vocabulary& vocab) {
  return vocab.encode("description : " + item.description + " title :");
}

// Annotated spans of a turn: the first occurrence of each annotated item.
inline std::vector<Span> annotated_spans(const ConversationTurn& turn,
                                         const ItemCatalog& catalog) {
  std::vector<Span> out;
  std::set<ItemId> seen;
  for (const Span& s : locate_item_spans(turn.text, catalog)) {
    if (seen.count(s.item_id)) continue;
    if (std::find(turn.items.begin(), turn.items.end(), s.item_id) ==
        turn.items.end()) {
      continue;
    }
    seen.insert(s.item_id);
    out.push_back(s);
  }
  return out;
}

// Appends the turn's tokens with <eoi> after each annotated span. When
// `stop_before` names one of the spans, rendering stops at its first token.
inline void render_turn(const ConversationTurn& turn,
                        const std::vector<Span>& spans, TokenSeq& out,
                        const Span* stop_before = nullptr) {
  std::size_t next = 0;
  for (std::size_t i = 0; i < turn.text.size(); ++i) {
    if (stop_before && static_cast<int>(i) == stop_before->start) return;
    out.push_back(turn.text[i]);
    while (next < spans.size() &&
           static_cast<int>(i) == spans[next].start + spans[next].length - 1) {
      out.push_back(Vocabulary::kEoi);
      ++next;
    }
  }
}

inline TokenSeq render_conversation(const Conversation& conv,
                                    const ItemCatalog& catalog) {
  TokenSeq out;
  for (const auto& turn : conv.turns) {
    const TokenSeq tag = speaker_tag(turn.speaker, catalog.vocab());
    out.insert(out.end(), tag.begin(), tag.end());
    render_turn(turn, annotated_spans(turn, catalog), out);
  }
  return out;
}

inline RecSample make_l2i_sample(const Item& item, const Vocabulary& vocab) {
  RecSample s;
  s.context_tokens = l2i_prompt(item, vocab);
  s.target_item = item.id;
  s.kind = SampleKind::kL2I;
  return s;
}

struct Mixture {
  bool l2r = true;
  bool l2i_from_catalog = false;
};

// One L2R sample per annotated item of every recommender turn; with
// l2i_from_catalog, one L2I sample per item that has a description.
inline std::vector<RecSample> make_rec_samples(
    const std::vector<Conversation>& conversations, const ItemCatalog& catalog,
    Mixture mixture = {}) {
  std::vector<RecSample> out;
  const Vocabulary& vocab = catalog.vocab();
  if (mixture.l2r) {
    for (const Conversation& conv : conversations) {
      TokenSeq prefix;
      std::vector<ItemId> history;
      for (const auto& turn : conv.turns) {
        const TokenSeq tag = speaker_tag(turn.speaker, vocab);
        prefix.insert(prefix.end(), tag.begin(), tag.end());
        const std::vector<Span> spans = annotated_spans(turn, catalog);
        if (turn.speaker == Speaker::kRecommender) {
          for (std::size_t k = 0; k < spans.size(); ++k) {
            RecSample s;
            s.context_tokens = prefix;
            render_turn(turn, spans, s.context_tokens, &spans[k]);
            s.target_item = spans[k].item_id;
            s.kind = SampleKind::kL2R;
            s.period = conv.period;
            s.context_items = history;
            for (std::size_t j = 0; j < k; ++j) {
              s.context_items.push_back(spans[j].item_id);
            }
            out.push_back(std::move(s));
          }
        }
        render_turn(turn, spans, prefix);
        for (const Span& sp : spans) history.push_back(sp.item_id);
      }
    }
  }
  if (mixture.l2i_from_catalog) {
    for (const Item& item : catalog.items()) {
      if (!item.description.empty()) out.push_back(make_l2i_sample(item, vocab));
    }
  }
  return out;
}

// The token stream the language model is trained on: context, then the
// target title closed by <eoi>. Returns the index where the target starts.
inline std::size_t completion_tokens(const RecSample& s,
                                     const ItemCatalog& catalog,
                                     TokenSeq& out) {
  out = s.context_tokens;
  const std::size_t start = out.size();
  const TokenSeq& title = catalog.item(s.target_item).title_tokens;
  out.insert(out.end(), title.begin(), title.end());
  out.push_back(Vocabulary::kEoi);
  return start;
}

// ---------------------------------------------------------------------------
// Splits.

struct SplitSpec {
  enum class Kind { kRandom811, kTemporal };
  Kind kind = Kind::kRandom811;
  std::uint64_t seed = 0;
  int last_k = 2;

  static SplitSpec random_8_1_1(std::uint64_t seed) {
    return {Kind::kRandom811, seed, 0};
  }
  static SplitSpec temporal(int last_k_periods) {
    return {Kind::kTemporal, 0, last_k_periods};
  }
};

template <typename T>
struct Splits {
  std::vector<T> train;
  std::vector<T> valid;
  std::vector<T> test;
};

// Random: shuffle, floor(n/10) each to valid and test, remainder to train.
// Temporal(k): the last period is test, the k-1 periods before it valid.
inline Splits<Conversation> split(const std::vector<Conversation>& dataset,
                                  const SplitSpec& spec) {
  if (dataset.empty()) throw Error("split: empty dataset");
  Splits<Conversation> out;
  if (spec.kind == SplitSpec::Kind::kRandom811) {
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng(spec.seed).split("split");
    rng.shuffle(order);
    const std::size_t tenth = dataset.size() / 10;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const Conversation& c = dataset[order[i]];
      if (i < tenth) {
        out.valid.push_back(c);
      } else if (i < 2 * tenth) {
        out.test.push_back(c);
      } else {
        out.train.push_back(c);
      }
    }
    return out;
  }
  if (spec.last_k < 2) throw Error("split: temporal split needs last_k >= 2");
  std::set<int> periods;
  for (const auto& c : dataset) periods.insert(c.period);
  if (periods.size() < 3 ||
      periods.size() < static_cast<std::size_t>(spec.last_k) + 1) {
    throw Error("split: temporal split needs at least " +
                std::to_string(std::max(3, spec.last_k + 1)) +
                " distinct periods, found " + std::to_string(periods.size()));
  }
  std::vector<int> sorted(periods.begin(), periods.end());
  const int test_period = sorted.back();
  const int first_valid = sorted[sorted.size() - static_cast<std::size_t>(spec.last_k)];
  for (const auto& c : dataset) {
    if (c.period == test_period) {
      out.test.push_back(c);
    } else if (c.period >= first_valid) {
      out.valid.push_back(c);
    } else {
      out.train.push_back(c);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL I/O.

inline std::string line_error(const std::filesystem::path& path,
                              std::size_t line_no, const std::string& what) {
  return path.string() + ":" + std::to_string(line_no) + ": " + what;
}

struct LoadStats {
  std::size_t dropped_mentions = 0;
};

// Consecutive turns of one speaker are merged and a conversation opening
// with the recommender gets an empty seeker turn, so turns alternate.
// Annotated ids that are out of range or not locatable in their turn's text
// are dropped and counted.
inline std::vector<Conversation> load_conversations(
    const std::filesystem::path& path, const ItemCatalog& catalog,
    LoadStats* stats = nullptr) {
  const std::string text = read_file(path);
  std::vector<Conversation> out;
  LoadStats local;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(line_error(path, line_no, std::string("malformed JSON: ") + e.what()));
    }
    try {
      Conversation conv;
      conv.id = j.value("id", static_cast<int>(out.size()));
      conv.period = j.value("period", 0);
      for (const auto& jt : j.at("turns")) {
        ConversationTurn turn;
        const std::string speaker = jt.at("speaker").get<std::string>();
        if (speaker == "seeker") {
          turn.speaker = Speaker::kSeeker;
        } else if (speaker == "recommender") {
          turn.speaker = Speaker::kRecommender;
        } else {
          throw Error("unknown speaker '" + speaker + "'");
        }
        turn.text = catalog.vocab().encode(jt.value("text", std::string()));
        std::vector<ItemId> annotated;
        if (jt.contains("items")) {
          annotated = jt.at("items").get<std::vector<ItemId>>();
        }
        std::set<ItemId> located;
        for (const Span& s : locate_item_spans(turn.text, catalog)) {
          located.insert(s.item_id);
        }
        for (ItemId id : annotated) {
          if (located.count(id) &&
              std::find(turn.items.begin(), turn.items.end(), id) ==
                  turn.items.end()) {
            turn.items.push_back(id);
          } else if (!located.count(id)) {
            ++local.dropped_mentions;
          }
        }
        if (!conv.turns.empty() && conv.turns.back().speaker == turn.speaker) {
          auto& prev = conv.turns.back();
          prev.text.insert(prev.text.end(), turn.text.begin(), turn.text.end());
          for (ItemId id : turn.items) {
            if (std::find(prev.items.begin(), prev.items.end(), id) ==
                prev.items.end()) {
              prev.items.push_back(id);
            }
          }
          continue;
        }
        if (conv.turns.empty() && turn.speaker == Speaker::kRecommender) {
          conv.turns.push_back(ConversationTurn{Speaker::kSeeker, {}, {}});
        }
        conv.turns.push_back(std::move(turn));
      }
      if (conv.turns.empty()) throw Error("conversation has no turns");
      out.push_back(std::move(conv));
    } catch (const nlohmann::json::exception& e) {
      throw Error(line_error(path, line_no, e.what()));
    } catch (const Error& e) {
      throw Error(line_error(path, line_no, e.what()));
    }
  }
  if (local.dropped_mentions > 0) {
    std::cerr << "warning: " << path.string() << ": dropped "
              << local.dropped_mentions << " unresolvable item mention(s)\n";
  }
  if (stats) *stats = local;
  return out;
}

inline std::string write_conversations_jsonl(
    const std::vector<Conversation>& conversations, const Vocabulary& vocab) {
  std::string out;
  for (const auto& conv : conversations) {
    nlohmann::ordered_json j;
    j["id"] = conv.id;
    j["period"] = conv.period;
    j["turns"] = nlohmann::ordered_json::array();
    for (const auto& turn : conv.turns) {
      nlohmann::ordered_json jt;
      jt["speaker"] = speaker_name(turn.speaker);
      jt["text"] = vocab.decode(turn.text);
      jt["items"] = turn.items;
      j["turns"].push_back(std::move(jt));
    }
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

inline std::string write_samples_jsonl(const std::vector<RecSample>& samples,
                                       const Vocabulary& vocab) {
  std::string out;
  for (const auto& s : samples) {
    nlohmann::ordered_json j;
    j["kind"] = kind_name(s.kind);
    j["period"] = s.period;
    j["context"] = vocab.decode(s.context_tokens);
    j["target"] = s.target_item;
    j["context_items"] = s.context_items;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

inline std::vector<RecSample> load_samples(const std::filesystem::path& path,
                                           const ItemCatalog& catalog) {
  const std::string text = read_file(path);
  std::vector<RecSample> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RecSample s;
      const std::string kind = j.at("kind").get<std::string>();
      if (kind != "L2I" && kind != "L2R") throw Error("unknown kind " + kind);
      s.kind = kind == "L2I" ? SampleKind::kL2I : SampleKind::kL2R;
      s.period = j.value("period", 0);
      s.context_tokens = catalog.vocab().encode(j.at("context").get<std::string>());
      s.target_item = j.at("target").get<ItemId>();
      if (s.target_item < 0 ||
          static_cast<std::size_t>(s.target_item) >= catalog.size()) {
        throw Error("target out of range");
      }
      if (j.contains("context_items")) {
        s.context_items = j.at("context_items").get<std::vector<ItemId>>();
      }
      if (s.context_tokens.empty()) throw Error("empty context");
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw Error(line_error(path, line_no, std::string("malformed JSON: ") + e.what()));
    } catch (const Error& e) {
      throw Error(line_error(path, line_no, e.what()));
    }
  }
  return out;
}

}  // namespace rta
