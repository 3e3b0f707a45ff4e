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

#include <cctype>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "rta/common.hpp"
#include "rta/tokenizer.hpp"

namespace rta {

struct Item {
  ItemId id = 0;
  std::string title;
  TokenSeq title_tokens;
  std::string description;
  std::int64_t corpus_count = 0;
  std::int64_t platform_count = 0;
};

// A located item mention: tokens [start, start + length) spell the title.
struct Span {
  int start = 0;
  int length = 0;
  ItemId item_id = 0;

  bool operator==(const Span&) const = default;
};

// Lowercase, drop a trailing "(yyyy)" year, turn punctuation into spaces and
// collapse whitespace.
inline std::string normalize_title(std::string_view title) {
  std::string s(title);
  auto rtrim = [](std::string& x) {
    while (!x.empty() && std::isspace(static_cast<unsigned char>(x.back()))) {
      x.pop_back();
    }
  };
  rtrim(s);
  if (s.size() >= 6 && s.back() == ')') {
    const std::size_t open = s.size() - 6;
    bool year = s[open] == '(';
    for (std::size_t i = open + 1; year && i < s.size() - 1; ++i) {
      year = std::isdigit(static_cast<unsigned char>(s[i])) != 0;
    }
    if (year) {
      s.erase(open);
      rtrim(s);
    }
  }
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c) || std::ispunct(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

class TokenTrie {
 public:
  struct Node {
    std::map<TokenId, int> children;
    ItemId item = -1;  // item whose title ends here, or -1
  };

  TokenTrie() : nodes_(1) {}

  // Returns false if the sequence is already present.
  bool insert(const TokenSeq& seq, ItemId item) {
    int node = 0;
    for (TokenId t : seq) {
      auto it = nodes_[static_cast<std::size_t>(node)].children.find(t);
      if (it == nodes_[static_cast<std::size_t>(node)].children.end()) {
        const int next = static_cast<int>(nodes_.size());
        nodes_[static_cast<std::size_t>(node)].children.emplace(t, next);
        nodes_.emplace_back();
        node = next;
      } else {
        node = it->second;
      }
    }
    auto& leaf = nodes_[static_cast<std::size_t>(node)];
    if (leaf.item >= 0) return false;
    leaf.item = item;
    return true;
  }

  // Longest title starting at tokens[start]; returns (length, item).
  std::optional<std::pair<int, ItemId>> longest_match(const TokenSeq& tokens,
                                                      std::size_t start) const {
    std::optional<std::pair<int, ItemId>> best;
    int node = 0;
    for (std::size_t i = start; i < tokens.size(); ++i) {
      const auto& children = nodes_[static_cast<std::size_t>(node)].children;
      auto it = children.find(tokens[i]);
      if (it == children.end()) break;
      node = it->second;
      const ItemId item = nodes_[static_cast<std::size_t>(node)].item;
      if (item >= 0) best = {static_cast<int>(i - start + 1), item};
    }
    return best;
  }

  std::optional<ItemId> find(const TokenSeq& seq) const {
    int node = 0;
    for (TokenId t : seq) {
      const auto& children = nodes_[static_cast<std::size_t>(node)].children;
      auto it = children.find(t);
      if (it == children.end()) return std::nullopt;
      node = it->second;
    }
    const ItemId item = nodes_[static_cast<std::size_t>(node)].item;
    if (item < 0) return std::nullopt;
    return item;
  }

  const Node& node(int index) const {
    return nodes_[static_cast<std::size_t>(index)];
  }
  static constexpr int root() { return 0; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

// The item universe. Immutable after construction.
class ItemCatalog {
 public:
  ItemCatalog() = default;

  // Tokenizes titles with `vocab`; ids are reassigned in input order.
  static ItemCatalog create(std::vector<Item> items,
                            std::shared_ptr<const Vocabulary> vocab) {
    if (!vocab) throw Error("catalog: null vocabulary");
    ItemCatalog cat;
    cat.vocab_ = std::move(vocab);
    std::map<std::string, std::vector<ItemId>> by_norm;
    for (std::size_t i = 0; i < items.size(); ++i) {
      Item& item = items[i];
      item.id = static_cast<ItemId>(i);
      const std::string norm = normalize_title(item.title);
      if (norm.empty()) {
        throw Error("catalog: empty title at item " + std::to_string(i));
      }
      by_norm[norm].push_back(item.id);
      item.title_tokens = cat.vocab_->encode(item.title);
      for (TokenId t : item.title_tokens) {
        if (t == Vocabulary::kUnk) {
          throw Error("catalog: title '" + item.title +
                      "' has tokens missing from the vocabulary");
        }
      }
    }
    std::string collisions;
    for (const auto& [norm, ids] : by_norm) {
      if (ids.size() > 1) {
        collisions += " '" + norm + "' (ids";
        for (ItemId id : ids) collisions += " " + std::to_string(id);
        collisions += ")";
      }
    }
    if (!collisions.empty()) {
      throw Error("catalog: duplicate normalized titles:" + collisions);
    }
    cat.items_ = std::move(items);
    for (const Item& item : cat.items_) {
      const std::string norm = normalize_title(item.title);
      cat.title_index_.emplace(norm, item.id);
      cat.normalized_.push_back(norm);
      cat.trie_.insert(item.title_tokens, item.id);
      cat.max_title_len_ =
          std::max(cat.max_title_len_, item.title_tokens.size());
    }
    return cat;
  }

  std::size_t size() const { return items_.size(); }
  const Item& item(ItemId id) const {
    return items_.at(static_cast<std::size_t>(id));
  }
  const std::vector<Item>& items() const { return items_; }
  const TokenTrie& trie() const { return trie_; }
  const Vocabulary& vocab() const { return *vocab_; }
  std::shared_ptr<const Vocabulary> vocab_ptr() const { return vocab_; }
  std::size_t max_title_len() const { return max_title_len_; }
  const std::string& normalized_title(ItemId id) const {
    return normalized_.at(static_cast<std::size_t>(id));
  }

  std::optional<ItemId> find_title(std::string_view title) const {
    auto it = title_index_.find(normalize_title(title));
    if (it == title_index_.end()) return std::nullopt;
    return it->second;
  }

  // Replaces per-item counts (counts are statistics, not identity).
  void set_counts(const std::vector<std::int64_t>& corpus,
                  const std::vector<std::int64_t>& platform) {
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (i < corpus.size()) items_[i].corpus_count = corpus[i];
      if (i < platform.size()) items_[i].platform_count = platform[i];
    }
  }

 private:
  std::vector<Item> items_;
  std::unordered_map<std::string, ItemId> title_index_;
  std::vector<std::string> normalized_;
  TokenTrie trie_;
  std::shared_ptr<const Vocabulary> vocab_;
  std::size_t max_title_len_ = 0;
};

// Raw (untokenized) catalog records in file order.
inline std::vector<Item> read_catalog_jsonl(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<Item> items;
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
      throw Error(path.string() + ":" + std::to_string(line_no) +
                  ": malformed JSON: " + e.what());
    }
    if (!j.contains("title") || !j["title"].is_string()) {
      throw Error(path.string() + ":" + std::to_string(line_no) +
                  ": missing string field 'title'");
    }
    Item item;
    item.id = static_cast<ItemId>(items.size());
    item.title = j["title"].get<std::string>();
    if (j.contains("description") && j["description"].is_string()) {
      item.description = j["description"].get<std::string>();
    }
    if (j.contains("corpus_count")) {
      item.corpus_count = j["corpus_count"].get<std::int64_t>();
    }
    if (j.contains("platform_count")) {
      item.platform_count = j["platform_count"].get<std::int64_t>();
    }
    items.push_back(std::move(item));
  }
  return items;
}

inline std::string write_catalog_jsonl(const ItemCatalog& catalog) {
  std::string out;
  for (const Item& item : catalog.items()) {
    nlohmann::ordered_json j;
    j["id"] = item.id;
    j["title"] = item.title;
    if (!item.description.empty()) j["description"] = item.description;
    j["corpus_count"] = item.corpus_count;
    j["platform_count"] = item.platform_count;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

inline ItemCatalog build_catalog(const std::filesystem::path& items_file,
                                 std::shared_ptr<const Vocabulary> vocab) {
  return ItemCatalog::create(read_catalog_jsonl(items_file), std::move(vocab));
}

// Greedy left-to-right longest match; spans are disjoint and sorted.
inline std::vector<Span> locate_item_spans(const TokenSeq& tokens,
                                           const ItemCatalog& catalog) {
  std::vector<Span> spans;
  std::size_t i = 0;
  while (i < tokens.size()) {
    if (auto m = catalog.trie().longest_match(tokens, i)) {
      spans.push_back({static_cast<int>(i), m->first, m->second});
      i += static_cast<std::size_t>(m->first);
    } else {
      ++i;
    }
  }
  return spans;
}

inline double title_similarity(std::string_view a, std::string_view b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(edit_distance(a, b)) /
                   static_cast<double>(longest);
}

inline std::optional<ItemId> fuzzy_match(std::string_view title_text,
                                         const ItemCatalog& catalog,
                                         double threshold) {
  const std::string query = normalize_title(title_text);
  std::optional<ItemId> best;
  double best_sim = -1.0;
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    const double sim =
        title_similarity(query, catalog.normalized_title(static_cast<ItemId>(i)));
    if (sim > best_sim) {
      best_sim = sim;
      best = static_cast<ItemId>(i);
    }
  }
  if (!best || best_sim < threshold) return std::nullopt;
  return best;
}

}  // namespace rta
