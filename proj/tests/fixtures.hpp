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

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "rta/catalog.hpp"
#include "rta/tokenizer.hpp"

namespace rta::testing {

// A handful of titles with shared prefixes and one nested title.
inline ItemCatalog movie_catalog(std::shared_ptr<Vocabulary> vocab = nullptr) {
  std::vector<Item> items(5);
  items[0].title = "Edge of Tomorrow";
  items[0].description = "a 2014 american science fiction action film";
  items[1].title = "Tomorrow";
  items[1].description = "a 2015 french documentary film";
  items[2].title = "The Matrix";
  items[2].description = "a 1999 science fiction action film";
  items[3].title = "The Matrix Reloaded";
  items[3].description = "a 2003 science fiction action film";
  items[4].title = "Up";
  items[4].description = "a 2009 animated adventure film";
  if (!vocab) vocab = std::make_shared<Vocabulary>();
  for (const auto& it : items) {
    vocab->extend(it.title);
    vocab->extend(it.description);
  }
  vocab->extend("seeker recommender : i loved ! you should watch . description title or try thanks");
  return ItemCatalog::create(std::move(items), vocab);
}

// Per-test scratch directory, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("rta_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace rta::testing
