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
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rta/common.hpp"

namespace rta {

// Lowercases and splits on whitespace; every punctuation character becomes
// its own token. Angle-bracket markers such as "<eoi>" stay whole.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush();
    } else if (c == '<') {
      std::size_t j = i + 1;
      while (j < text.size() &&
             (std::islower(static_cast<unsigned char>(text[j])) ||
              text[j] == '_')) {
        ++j;
      }
      if (j < text.size() && text[j] == '>' && j > i + 1) {
        flush();
        out.emplace_back(text.substr(i, j - i + 1));
        i = j;
      } else {
        flush();
        out.emplace_back(1, static_cast<char>(c));
      }
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEoi = 3;  // closes every item mention

  Vocabulary() {
    for (const char* s : {"<pad>", "<unk>", "<bos>", "<eoi>"}) add(s);
  }

  TokenId add(std::string_view token) {
    auto it = index_.find(std::string(token));
    if (it != index_.end()) return it->second;
    const TokenId id = static_cast<TokenId>(tokens_.size());
    tokens_.emplace_back(token);
    index_.emplace(tokens_.back(), id);
    return id;
  }

  // Adds every token of `text` in first-seen order.
  void extend(std::string_view text) {
    for (const auto& w : split_words(text)) add(w);
  }

  bool contains(std::string_view token) const {
    return index_.count(std::string(token)) > 0;
  }

  TokenId id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw Error("token id out of range: " + std::to_string(id));
    }
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return tokens_.size(); }

  TokenSeq encode(std::string_view text) const {
    TokenSeq ids;
    for (const auto& w : split_words(text)) ids.push_back(id(w));
    return ids;
  }

  std::string decode(const TokenSeq& ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out.push_back(' ');
      out += token(ids[i]);
    }
    return out;
  }

  // One token per line, in id order.
  std::string serialize() const {
    std::string out;
    for (const auto& t : tokens_) {
      out += t;
      out.push_back('\n');
    }
    return out;
  }

  static Vocabulary deserialize(std::string_view text) {
    Vocabulary v;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      std::string_view tok = text.substr(pos, end - pos);
      if (line_no < 4) {
        if (tok != v.tokens_[line_no]) throw Error("vocabulary: bad header");
      } else if (v.add(tok) != static_cast<TokenId>(line_no)) {
        throw Error("vocabulary: duplicate token " + std::string(tok));
      }
      ++line_no;
      pos = end + 1;
    }
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace rta
