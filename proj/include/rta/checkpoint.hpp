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

// RTA1 checkpoint container.
//
//   "RTA1" | u8 version
//   u32 n_meta   { u16 key_len, key, u16 val_len, val }*
//   u32 n_tensor { u16 name_len, name, u8 ndim, u32 dim*, u8 dtype }*
//   payloads, in manifest order, f32 little-endian row-major
//
// Metadata carries the kind tag and the hyperparameters needed to rebuild
// the owning model.

#include <bit>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rta/autodiff.hpp"
#include "rta/common.hpp"

namespace rta {

class Checkpoint {
 public:
  static constexpr std::uint8_t kVersion = 1;
  static constexpr std::uint8_t kFloat32 = 0;

  using Tensor = ad::Matrix<float>;

  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : meta_) {
      if (k == key) {
        v = value;
        return;
      }
    }
    meta_.emplace_back(key, value);
  }

  std::optional<std::string> find(const std::string& key) const {
    for (const auto& [k, v] : meta_) {
      if (k == key) return v;
    }
    return std::nullopt;
  }

  std::string get(const std::string& key) const {
    auto v = find(key);
    if (!v) throw Error("checkpoint: missing metadata '" + key + "'");
    return *v;
  }
  long get_int(const std::string& key) const { return std::stol(get(key)); }
  double get_double(const std::string& key) const {
    return std::stod(get(key));
  }

  void add_tensor(const std::string& name, Tensor value) {
    for (const auto& [n, t] : tensors_) {
      if (n == name) throw Error("checkpoint: duplicate tensor " + name);
    }
    tensors_.emplace_back(name, std::move(value));
  }

  const Tensor& tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors_) {
      if (n == name) return t;
    }
    throw Error("checkpoint: missing tensor '" + name + "'");
  }

  bool has_tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors_) {
      if (n == name) return true;
    }
    return false;
  }

  const std::vector<std::pair<std::string, std::string>>& meta() const {
    return meta_;
  }
  const std::vector<std::pair<std::string, Tensor>>& tensors() const {
    return tensors_;
  }

  // Checks the kind tag; throws naming `origin` on mismatch.
  void expect_kind(const std::string& kind, const std::string& origin) const {
    const auto k = find("kind");
    if (!k || *k != kind) {
      throw Error(origin + ": expected checkpoint kind '" + kind + "', found '" +
                  k.value_or("") + "'");
    }
  }

  std::string serialize() const {
    std::string out = "RTA1";
    out.push_back(static_cast<char>(kVersion));
    put_u32(out, static_cast<std::uint32_t>(meta_.size()));
    for (const auto& [k, v] : meta_) {
      put_str(out, k);
      put_str(out, v);
    }
    put_u32(out, static_cast<std::uint32_t>(tensors_.size()));
    for (const auto& [name, t] : tensors_) {
      put_str(out, name);
      out.push_back(2);
      put_u32(out, static_cast<std::uint32_t>(t.rows()));
      put_u32(out, static_cast<std::uint32_t>(t.cols()));
      out.push_back(static_cast<char>(kFloat32));
    }
    for (const auto& [name, t] : tensors_) {
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        put_u32(out, std::bit_cast<std::uint32_t>(t.data()[i]));
      }
    }
    return out;
  }

  static Checkpoint parse(std::string_view bytes, const std::string& origin) {
    Reader r{bytes, 0, origin};
    if (r.take(4) != "RTA1") throw Error(origin + ": not an RTA1 checkpoint");
    const auto version = r.u8();
    if (version != kVersion) {
      throw Error(origin + ": unsupported checkpoint version " +
                  std::to_string(version));
    }
    Checkpoint c;
    const std::uint32_t n_meta = r.u32();
    for (std::uint32_t i = 0; i < n_meta; ++i) {
      std::string k = r.str();
      std::string v = r.str();
      c.meta_.emplace_back(std::move(k), std::move(v));
    }
    const std::uint32_t n_tensors = r.u32();
    std::vector<std::pair<std::string, std::pair<std::uint32_t, std::uint32_t>>>
        manifest;
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
      std::string name = r.str();
      const auto ndim = r.u8();
      std::vector<std::uint32_t> dims;
      for (int d = 0; d < ndim; ++d) dims.push_back(r.u32());
      const auto dtype = r.u8();
      if (dtype != kFloat32) throw Error(origin + ": unsupported dtype");
      std::uint32_t rows = 1, cols = 1;
      if (ndim == 1) {
        cols = dims[0];
      } else if (ndim == 2) {
        rows = dims[0];
        cols = dims[1];
      } else {
        throw Error(origin + ": unsupported tensor rank for " + name);
      }
      manifest.emplace_back(std::move(name), std::make_pair(rows, cols));
    }
    for (auto& [name, shape] : manifest) {
      Tensor t(shape.first, shape.second);
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        t.data()[i] = std::bit_cast<float>(r.u32());
      }
      c.tensors_.emplace_back(std::move(name), std::move(t));
    }
    if (r.pos != bytes.size()) throw Error(origin + ": trailing bytes");
    return c;
  }

 private:
  struct Reader {
    std::string_view bytes;
    std::size_t pos;
    const std::string& origin;

    std::string_view take(std::size_t n) {
      if (pos + n > bytes.size()) throw Error(origin + ": truncated checkpoint");
      std::string_view s = bytes.substr(pos, n);
      pos += n;
      return s;
    }
    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() {
      std::string_view s = take(4);
      std::uint32_t v = 0;
      for (int i = 3; i >= 0; --i) {
        v = (v << 8) | static_cast<std::uint8_t>(s[static_cast<std::size_t>(i)]);
      }
      return v;
    }
    std::string str() {
      std::string_view s = take(2);
      const std::size_t n = static_cast<std::uint8_t>(s[0]) |
                            (static_cast<std::size_t>(
                                 static_cast<std::uint8_t>(s[1]))
                             << 8);
      return std::string(take(n));
    }
  };

  static void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  static void put_str(std::string& out, const std::string& s) {
    if (s.size() > 0xffff) throw Error("checkpoint: string too long");
    out.push_back(static_cast<char>(s.size() & 0xff));
    out.push_back(static_cast<char>(s.size() >> 8));
    out += s;
  }

  std::vector<std::pair<std::string, std::string>> meta_;
  std::vector<std::pair<std::string, Tensor>> tensors_;
};

inline void save_checkpoint(const std::filesystem::path& path,
                            const Checkpoint& c) {
  write_file(path, c.serialize());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return Checkpoint::parse(read_file(path), path.string());
}

// Stores every parameter of `model` under its own name.
template <typename Model>
void put_params(Checkpoint& c, Model& model) {
  model.visit([&](auto& p) {
    c.add_tensor(p.name, p.value.template cast<float>());
  });
}

template <typename Model>
void get_params(const Checkpoint& c, Model& model) {
  model.visit([&](auto& p) {
    const auto& t = c.tensor(p.name);
    if (t.rows() != p.value.rows() || t.cols() != p.value.cols()) {
      throw Error("checkpoint: shape mismatch for " + p.name);
    }
    using S = typename std::remove_reference_t<decltype(p)>::Scalar;
    p.value = t.template cast<S>();
  });
}

}  // namespace rta
