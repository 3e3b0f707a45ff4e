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

// Layers shared by the language model, the aggregators and the
// recommenders, plus the Adam optimizer.
//
// Every parameterized struct exposes visit(f), calling f(Param&) on each of
// its parameters in a fixed order. Collecting, casting between scalar types
// and checkpointing are all written against that single hook.

#include <cmath>
#include <string>
#include <vector>

#include "rta/autodiff.hpp"
#include "rta/rng.hpp"

namespace rta::nn {

using ad::Matrix;
using ad::Param;
using ad::Segment;
using ad::Tape;
using ad::Var;

template <typename T>
Matrix<T> normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev,
                        Rng& rng) {
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<T>(rng.normal(0.0, stddev));
  }
  return m;
}

// Models declare `using Scalar = T;` next to their visit().
template <typename Model>
std::vector<Param<typename Model::Scalar>*> params_of(Model& model) {
  std::vector<Param<typename Model::Scalar>*> out;
  model.visit([&](Param<typename Model::Scalar>& p) { out.push_back(&p); });
  return out;
}

// Copies parameter values between two structurally identical models that
// may differ in scalar type.
template <typename Src, typename Dst>
void copy_params(Src& src, Dst& dst) {
  auto a = params_of(src);
  auto b = params_of(dst);
  if (a.size() != b.size()) throw Error("copy_params: structure mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    using U = typename Dst::Scalar;
    if (a[i]->value.rows() != b[i]->value.rows() ||
        a[i]->value.cols() != b[i]->value.cols()) {
      throw Error("copy_params: shape mismatch at " + a[i]->name);
    }
    b[i]->value = a[i]->value.template cast<U>();
    b[i]->trainable = a[i]->trainable;
    b[i]->decay_center = static_cast<U>(a[i]->decay_center);
  }
}

template <typename T>
bool all_finite(const std::vector<Param<T>*>& params) {
  for (const auto* p : params) {
    if (!p->value.allFinite()) return false;
  }
  return true;
}

template <typename T>
struct Linear {
  using Scalar = T;

  Param<T> w;  // in x out
  Param<T> b;  // 1 x out; empty when the layer has no bias

  Linear() = default;
  Linear(const std::string& name, int in, int out, double stddev, Rng& rng,
         bool bias = true) {
    w = {name + ".w", normal_matrix<T>(in, out, stddev, rng)};
    if (bias) b = {name + ".b", Matrix<T>::Zero(1, out)};
  }

  bool has_bias() const { return b.value.size() != 0; }

  Var<T> operator()(Tape<T>& tape, Var<T> x) const {
    Var<T> y = ad::matmul(x, tape.param(w));
    return has_bias() ? ad::add_row(y, tape.param(b)) : y;
  }

  template <typename F>
  void visit(F&& f) {
    f(w);
    if (has_bias()) f(b);
  }
};

template <typename T>
struct LayerNorm {
  using Scalar = T;

  Param<T> gain;
  Param<T> bias;

  LayerNorm() = default;
  LayerNorm(const std::string& name, int d)
      : gain{name + ".g", Matrix<T>::Ones(1, d)},
        bias{name + ".b", Matrix<T>::Zero(1, d)} {}

  Var<T> operator()(Tape<T>& tape, Var<T> x) const {
    return ad::layernorm(x, tape.param(gain), tape.param(bias));
  }

  template <typename F>
  void visit(F&& f) {
    f(gain);
    f(bias);
  }
};

// Pre-norm transformer block: x + Attn(LN(x)), then h + MLP(LN(h)).
template <typename T>
struct TransformerBlock {
  using Scalar = T;

  LayerNorm<T> ln1;
  Linear<T> qkv;
  Linear<T> attn_out;
  LayerNorm<T> ln2;
  Linear<T> fc;
  Linear<T> proj;
  int n_heads = 1;

  TransformerBlock() = default;
  TransformerBlock(const std::string& name, int d, int heads, int n_layers,
                   Rng& rng)
      : ln1(name + ".ln1", d),
        qkv(name + ".qkv", d, 3 * d, 0.02, rng),
        attn_out(name + ".attn_out", d, d,
                 0.02 / std::sqrt(2.0 * n_layers), rng),
        ln2(name + ".ln2", d),
        fc(name + ".fc", d, 4 * d, 0.02, rng),
        proj(name + ".proj", 4 * d, d, 0.02 / std::sqrt(2.0 * n_layers), rng),
        n_heads(heads) {
    if (d % heads != 0) throw Error("d_model must be divisible by n_heads");
  }

  Var<T> operator()(Tape<T>& tape, Var<T> x,
                    const std::vector<Segment>& segments, bool causal) const {
    Var<T> a = ad::attention(qkv(tape, ln1(tape, x)), segments, n_heads, causal);
    Var<T> h = ad::add(x, attn_out(tape, a));
    Var<T> m = proj(tape, ad::gelu(fc(tape, ln2(tape, h))));
    return ad::add(h, m);
  }

  template <typename F>
  void visit(F&& f) {
    ln1.visit(f);
    qkv.visit(f);
    attn_out.visit(f);
    ln2.visit(f);
    fc.visit(f);
    proj.visit(f);
  }
};

// Single-layer GRU cell with gates ordered [reset | update | candidate].
template <typename T>
struct GRUCell {
  using Scalar = T;

  Linear<T> wx;  // in -> 3h
  Linear<T> wh;  // h -> 3h
  int hidden = 0;

  GRUCell() = default;
  GRUCell(const std::string& name, int in, int h, Rng& rng)
      : wx(name + ".wx", in, 3 * h, 1.0 / std::sqrt(static_cast<double>(in)),
           rng),
        wh(name + ".wh", h, 3 * h, 1.0 / std::sqrt(static_cast<double>(h)),
           rng),
        hidden(h) {}

  // gx is the precomputed input projection for this step (rows x 3h);
  // mask (rows x h, 0/1) freezes finished sequences.
  Var<T> step(Tape<T>& tape, Var<T> gx, Var<T> h, Var<T> mask) const {
    Var<T> gh = wh(tape, h);
    Var<T> r = ad::sigmoid(
        ad::add(ad::slice_cols(gx, 0, hidden), ad::slice_cols(gh, 0, hidden)));
    Var<T> z = ad::sigmoid(ad::add(ad::slice_cols(gx, hidden, hidden),
                                   ad::slice_cols(gh, hidden, hidden)));
    Var<T> n = ad::tanh(
        ad::add(ad::slice_cols(gx, 2 * hidden, hidden),
                ad::mul(r, ad::slice_cols(gh, 2 * hidden, hidden))));
    Var<T> h_new = ad::add(n, ad::mul(z, ad::sub(h, n)));
    return ad::add(h, ad::mul(mask, ad::sub(h_new, h)));
  }

  template <typename F>
  void visit(F&& f) {
    wx.visit(f);
    wh.visit(f);
  }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // coupled L2 toward each param's decay_center
  double clip_norm = 0.0;     // global gradient-norm clip; 0 disables
};

template <typename T>
class Adam {
 public:
  Adam(std::vector<Param<T>*> params, AdamConfig config)
      : params_(std::move(params)), config_(config) {
    for (const auto* p : params_) {
      m_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  long steps() const { return t_; }

  // Applies one update from the gradients held by `tape`; returns the
  // (pre-clip) global gradient norm.
  double step(const Tape<T>& tape) {
    ++t_;
    std::vector<Matrix<T>> grads(params_.size());
    double sq = 0.0;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Param<T>& p = *params_[i];
      if (!p.trainable) continue;
      const Matrix<T>* g = tape.grad(p);
      if (!g) continue;
      grads[i] = *g;
      if (config_.weight_decay != 0.0) {
        grads[i].array() += static_cast<T>(config_.weight_decay) *
                            (p.value.array() - p.decay_center);
      }
      sq += static_cast<double>(grads[i].squaredNorm());
    }
    const double norm = std::sqrt(sq);
    T clip = T(1);
    if (config_.clip_norm > 0.0 && norm > config_.clip_norm) {
      clip = static_cast<T>(config_.clip_norm / norm);
    }
    const T b1 = static_cast<T>(config_.beta1);
    const T b2 = static_cast<T>(config_.beta2);
    const T c1 = T(1) - static_cast<T>(std::pow(config_.beta1, t_));
    const T c2 = T(1) - static_cast<T>(std::pow(config_.beta2, t_));
    const T lr = static_cast<T>(config_.lr);
    const T eps = static_cast<T>(config_.eps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (grads[i].size() == 0) continue;
      if (clip != T(1)) grads[i] *= clip;
      m_[i] = b1 * m_[i] + (T(1) - b1) * grads[i];
      v_[i] = b2 * v_[i] + (T(1) - b2) * grads[i].cwiseAbs2();
      params_[i]->value.array() -=
          lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
    return norm;
  }

 private:
  std::vector<Param<T>*> params_;
  AdamConfig config_;
  std::vector<Matrix<T>> m_;
  std::vector<Matrix<T>> v_;
  long t_ = 0;
};

}  // namespace rta::nn
