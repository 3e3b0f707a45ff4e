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

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape owns every node created during one forward pass. Ops append nodes
// and, when any input needs a gradient, a closure that pushes the output
// gradient back into the inputs. Tape::backward() runs those closures in
// reverse creation order. Parameters enter the tape by value through
// Tape::param(); their gradients are read back with Tape::grad().

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rta/common.hpp"

namespace rta::ad {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Param {
  using Scalar = T;
  std::string name;
  Matrix<T> value;
  bool trainable = true;
  // Weight decay pulls the value toward this constant.
  T decay_center = T(0);
};

template <typename T>
struct Node {
  Matrix<T> value;
  Matrix<T> grad;
  bool needs_grad = false;
  std::function<void()> backward;

  Matrix<T>& g() {
    if (grad.size() == 0) grad = Matrix<T>::Zero(value.rows(), value.cols());
    return grad;
  }
};

template <typename T>
class Tape;

template <typename T>
struct Var {
  Node<T>* node = nullptr;
  Tape<T>* tape = nullptr;

  const Matrix<T>& value() const { return node->value; }
  Eigen::Index rows() const { return node->value.rows(); }
  Eigen::Index cols() const { return node->value.cols(); }
  bool needs_grad() const { return node->needs_grad; }
  T scalar() const { return node->value(0, 0); }
};

// (start row, length) of one packed sequence.
struct Segment {
  int start = 0;
  int length = 0;
};

template <typename T>
class Tape {
 public:
  // With record == false no backward closures are kept (inference).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var<T> constant(Matrix<T> value) { return make(std::move(value), false); }

  // Entering the same parameter twice returns the same leaf, so gradients
  // from every use accumulate in one place.
  Var<T> param(const Param<T>& p) {
    auto it = params_.find(&p);
    if (it != params_.end()) return Var<T>{it->second, this};
    Var<T> v = make(p.value, record_ && p.trainable);
    params_.emplace(&p, v.node);
    return v;
  }

  Var<T> make(Matrix<T> value, bool needs_grad) {
    nodes_.push_back(std::make_unique<Node<T>>());
    Node<T>* n = nodes_.back().get();
    n->value = std::move(value);
    n->needs_grad = needs_grad && record_;
    return Var<T>{n, this};
  }

  void backward(Var<T> loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw Error("backward: loss must be a scalar");
    }
    if (!loss.node->needs_grad) return;
    loss.node->g()(0, 0) = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>& n = **it;
      if (n.backward && n.grad.size() != 0) n.backward();
    }
  }

  // Gradient of the last backward() w.r.t. a parameter; nullptr when the
  // parameter did not take part (or is frozen).
  const Matrix<T>* grad(const Param<T>& p) const {
    auto it = params_.find(&p);
    if (it == params_.end() || it->second->grad.size() == 0) return nullptr;
    return &it->second->grad;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  bool record_;
  std::vector<std::unique_ptr<Node<T>>> nodes_;
  std::unordered_map<const Param<T>*, Node<T>*> params_;
};

namespace detail {

template <typename T>
bool any_grad(std::initializer_list<Var<T>> vs) {
  for (const auto& v : vs) {
    if (v.node->needs_grad) return true;
  }
  return false;
}

template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(op) + ": shape mismatch " +
                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()));
  }
}

}  // namespace detail

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  if (a.cols() != b.rows()) throw Error("matmul: inner dimension mismatch");
  Var<T> out = a.tape->make(a.value() * b.value(), detail::any_grad({a, b}));
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* na = a.node;
    Node<T>* nb = b.node;
    o->backward = [o, na, nb] {
      if (na->needs_grad) na->g().noalias() += o->grad * nb->value.transpose();
      if (nb->needs_grad) nb->g().noalias() += na->value.transpose() * o->grad;
    };
  }
  return out;
}

// a * b^T
template <typename T>
Var<T> matmul_bt(Var<T> a, Var<T> b) {
  if (a.cols() != b.cols()) throw Error("matmul_bt: inner dimension mismatch");
  Var<T> out = a.tape->make(a.value() * b.value().transpose(),
                            detail::any_grad({a, b}));
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* na = a.node;
    Node<T>* nb = b.node;
    o->backward = [o, na, nb] {
      if (na->needs_grad) na->g().noalias() += o->grad * nb->value;
      if (nb->needs_grad) nb->g().noalias() += o->grad.transpose() * na->value;
    };
  }
  return out;
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "add");
  Var<T> out = a.tape->make(a.value() + b.value(), detail::any_grad({a, b}));
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* na = a.node;
    Node<T>* nb = b.node;
    o->backward = [o, na, nb] {
      if (na->needs_grad) na->g() += o->grad;
      if (nb->needs_grad) nb->g() += o->grad;
    };
  }
  return out;
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "sub");
  Var<T> out = a.tape->make(a.value() - b.value(), detail::any_grad({a, b}));
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* na = a.node;
    Node<T>* nb = b.node;
    o->backward = [o, na, nb] {
      if (na->needs_grad) na->g() += o->grad;
      if (nb->needs_grad) nb->g() -= o->grad;
    };
  }
  return out;
}

// Elementwise product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "mul");
  Var<T> out = a.tape->make(a.value().cwiseProduct(b.value()),
                            detail::any_grad({a, b}));
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* na = a.node;
    Node<T>* nb = b.node;
    o->backward = [o, na, nb] {
      if (na->needs_grad) na->g() += o->grad.cwiseProduct(nb->value);
      if (nb->needs_grad) nb->g() += o->grad.cwiseProduct(na->value);
    };
  }
  return out;
}

// a + row, with row (1 x m) broadcast over every row of a.
template <typename T>
Var<T> add_row(Var<T> a, Var<T> row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw Error("add_row: row must be 1 x cols(a)");
  }
  Matrix<T> v = a.value();
  v.rowwise() += row.value().row(0);
  Var<T> out = a.tape->make(std::move(v), detail::any_grad({a, row}));
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* na = a.node;
    Node<T>* nr = row.node;
    o->backward = [o, na, nr] {
      if (na->needs_grad) na->g() += o->grad;
      if (nr->needs_grad) nr->g() += o->grad.colwise().sum();
    };
  }
  return out;
}

// a * row elementwise, with row (1 x m) broadcast over every row of a.
template <typename T>
Var<T> mul_row(Var<T> a, Var<T> row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw Error("mul_row: row must be 1 x cols(a)");
  }
  Matrix<T> v = a.value();
  v.array().rowwise() *= row.value().row(0).array();
  Var<T> out = a.tape->make(std::move(v), detail::any_grad({a, row}));
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* na = a.node;
    Node<T>* nr = row.node;
    o->backward = [o, na, nr] {
      if (na->needs_grad) {
        Matrix<T> ga = o->grad;
        ga.array().rowwise() *= nr->value.row(0).array();
        na->g() += ga;
      }
      if (nr->needs_grad) {
        nr->g() += o->grad.cwiseProduct(na->value).colwise().sum();
      }
    };
  }
  return out;
}

// s * a + c for constants s, c.
template <typename T>
Var<T> affine(Var<T> a, T s, T c = T(0)) {
  Matrix<T> v = (a.value().array() * s + c).matrix();
  Var<T> out = a.tape->make(std::move(v), a.needs_grad());
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* na = a.node;
    o->backward = [o, na, s] { na->g() += o->grad * s; };
  }
  return out;
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  return affine(a, s, T(0));
}

// s * a where s is a 1x1 variable.
template <typename T>
Var<T> scale_by(Var<T> a, Var<T> s) {
  if (s.rows() != 1 || s.cols() != 1) throw Error("scale_by: s must be 1x1");
  Var<T> out =
      a.tape->make(a.value() * s.value()(0, 0), detail::any_grad({a, s}));
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* na = a.node;
    Node<T>* ns = s.node;
    o->backward = [o, na, ns] {
      if (na->needs_grad) na->g() += o->grad * ns->value(0, 0);
      if (ns->needs_grad) ns->g()(0, 0) += o->grad.cwiseProduct(na->value).sum();
    };
  }
  return out;
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Matrix<T> v =
      a.value().unaryExpr([](T x) { return T(1) / (T(1) + std::exp(-x)); });
  Var<T> out = a.tape->make(std::move(v), a.needs_grad());
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* na = a.node;
    o->backward = [o, na] {
      na->g().array() +=
          o->grad.array() * o->value.array() * (T(1) - o->value.array());
    };
  }
  return out;
}

template <typename T>
Var<T> tanh(Var<T> a) {
  Matrix<T> v = a.value().array().tanh().matrix();
  Var<T> out = a.tape->make(std::move(v), a.needs_grad());
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* na = a.node;
    o->backward = [o, na] {
      na->g().array() += o->grad.array() * (T(1) - o->value.array().square());
    };
  }
  return out;
}

// tanh approximation of GELU.
template <typename T>
Var<T> gelu(Var<T> a) {
  static constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  static constexpr T kA = T(0.044715);
  const auto x = a.value().array();
  auto t = std::make_shared<Matrix<T>>((kC * (x + kA * x.cube())).tanh().matrix());
  Matrix<T> v = (T(0.5) * x * (T(1) + t->array())).matrix();
  Var<T> out = a.tape->make(std::move(v), a.needs_grad());
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* na = a.node;
    o->backward = [o, na, t] {
      const auto xa = na->value.array();
      const auto ta = t->array();
      na->g().array() +=
          o->grad.array() *
          (T(0.5) * (T(1) + ta) +
           T(0.5) * xa * (T(1) - ta.square()) * kC * (T(1) + T(3) * kA * xa.square()));
    };
  }
  return out;
}

// Row-wise layer normalization with gain and bias rows (1 x d).
template <typename T>
Var<T> layernorm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  const Eigen::Index d = x.cols();
  if (gain.cols() != d || bias.cols() != d) throw Error("layernorm: shape");
  using Col = Eigen::Array<T, Eigen::Dynamic, 1>;
  const auto xa = x.value().array();
  const Col mu = xa.rowwise().mean();
  auto xhat = std::make_shared<Matrix<T>>((xa.colwise() - mu).matrix());
  const Col var = xhat->array().square().rowwise().mean();
  auto inv_std = std::make_shared<Col>((var + eps).rsqrt());
  xhat->array().colwise() *= *inv_std;
  Matrix<T> y = *xhat;
  y.array().rowwise() *= gain.value().row(0).array();
  y.rowwise() += bias.value().row(0);
  Var<T> out = x.tape->make(std::move(y), detail::any_grad({x, gain, bias}));
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* nx = x.node;
    Node<T>* ng = gain.node;
    Node<T>* nb = bias.node;
    o->backward = [o, nx, ng, nb, xhat, inv_std] {
      if (ng->needs_grad) {
        ng->g() += o->grad.cwiseProduct(*xhat).colwise().sum();
      }
      if (nb->needs_grad) nb->g() += o->grad.colwise().sum();
      if (nx->needs_grad) {
        Matrix<T> dxhat = o->grad;
        dxhat.array().rowwise() *= ng->value.row(0).array();
        const Col m1 = dxhat.array().rowwise().mean();
        const Col m2 = (dxhat.array() * xhat->array()).rowwise().mean();
        dxhat.array().colwise() -= m1;
        dxhat.array() -= xhat->array().colwise() * m2;
        dxhat.array().colwise() *= *inv_std;
        nx->g() += dxhat;
      }
    };
  }
  return out;
}

// Rows of `table` at `ids` (embedding lookup); gradients scatter-add.
template <typename T>
Var<T> gather_rows(Var<T> table, const std::vector<int>& ids) {
  const Eigen::Index d = table.cols();
  Matrix<T> v(static_cast<Eigen::Index>(ids.size()), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw Error("gather_rows: index " + std::to_string(ids[i]) +
                  " out of range " + std::to_string(table.rows()));
    }
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  Var<T> out = table.tape->make(std::move(v), table.needs_grad());
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* nt = table.node;
    o->backward = [o, nt, ids] {
      auto& g = nt->g();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        g.row(ids[i]) += o->grad.row(static_cast<Eigen::Index>(i));
      }
    };
  }
  return out;
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw Error("concat_cols: empty");
  const Eigen::Index n = parts[0].rows();
  Eigen::Index total = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.rows() != n) throw Error("concat_cols: row mismatch");
    total += p.cols();
    needs = needs || p.needs_grad();
  }
  Matrix<T> v(n, total);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  Var<T> out = parts[0].tape->make(std::move(v), needs);
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    std::vector<Node<T>*> ns;
    for (const auto& p : parts) ns.push_back(p.node);
    o->backward = [o, ns] {
      Eigen::Index c0 = 0;
      for (Node<T>* n : ns) {
        if (n->needs_grad) n->g() += o->grad.middleCols(c0, n->value.cols());
        c0 += n->value.cols();
      }
    };
  }
  return out;
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw Error("concat_rows: empty");
  const Eigen::Index d = parts[0].cols();
  Eigen::Index total = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.cols() != d) throw Error("concat_rows: col mismatch");
    total += p.rows();
    needs = needs || p.needs_grad();
  }
  Matrix<T> v(total, d);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  Var<T> out = parts[0].tape->make(std::move(v), needs);
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    std::vector<Node<T>*> ns;
    for (const auto& p : parts) ns.push_back(p.node);
    o->backward = [o, ns] {
      Eigen::Index r0 = 0;
      for (Node<T>* n : ns) {
        if (n->needs_grad) n->g() += o->grad.middleRows(r0, n->value.rows());
        r0 += n->value.rows();
      }
    };
  }
  return out;
}

template <typename T>
Var<T> slice_cols(Var<T> a, Eigen::Index start, Eigen::Index width) {
  if (start < 0 || start + width > a.cols()) throw Error("slice_cols: range");
  Var<T> out =
      a.tape->make(Matrix<T>(a.value().middleCols(start, width)), a.needs_grad());
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* na = a.node;
    o->backward = [o, na, start, width] {
      na->g().middleCols(start, width) += o->grad;
    };
  }
  return out;
}

template <typename T>
Var<T> sum(Var<T> a) {
  Matrix<T> v(1, 1);
  v(0, 0) = a.value().sum();
  Var<T> out = a.tape->make(std::move(v), a.needs_grad());
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* na = a.node;
    o->backward = [o, na] { na->g().array() += o->grad(0, 0); };
  }
  return out;
}

template <typename T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

// Row-wise dot products of equally shaped a and b; result is n x 1.
template <typename T>
Var<T> rowwise_dot(Var<T> a, Var<T> b) {
  detail::check_same_shape(a, b, "rowwise_dot");
  Matrix<T> v = a.value().cwiseProduct(b.value()).rowwise().sum();
  Var<T> out = a.tape->make(std::move(v), detail::any_grad({a, b}));
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* na = a.node;
    Node<T>* nb = b.node;
    o->backward = [o, na, nb] {
      if (na->needs_grad) {
        na->g() += (nb->value.array().colwise() * o->grad.col(0).array()).matrix();
      }
      if (nb->needs_grad) {
        nb->g() += (na->value.array().colwise() * o->grad.col(0).array()).matrix();
      }
    };
  }
  return out;
}

// out(b, j) = h.row(b) . c.row(b * group + j); h is B x d, c is (B*group) x d.
template <typename T>
Var<T> group_dot(Var<T> h, Var<T> c, int group) {
  const Eigen::Index B = h.rows();
  if (c.rows() != B * group || c.cols() != h.cols()) {
    throw Error("group_dot: shape mismatch");
  }
  Matrix<T> v(B, group);
  for (Eigen::Index b = 0; b < B; ++b) {
    v.row(b) = (c.value().middleRows(b * group, group) *
                h.value().row(b).transpose())
                   .transpose();
  }
  Var<T> out = h.tape->make(std::move(v), detail::any_grad({h, c}));
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* nh = h.node;
    Node<T>* nc = c.node;
    o->backward = [o, nh, nc, group] {
      const Eigen::Index B2 = nh->value.rows();
      for (Eigen::Index b = 0; b < B2; ++b) {
        if (nh->needs_grad) {
          nh->g().row(b).noalias() +=
              o->grad.row(b) * nc->value.middleRows(b * group, group);
        }
        if (nc->needs_grad) {
          nc->g().middleRows(b * group, group).noalias() +=
              o->grad.row(b).transpose() * nh->value.row(b);
        }
      }
    };
  }
  return out;
}

// out.row(r) = sum_k w_rk * table.row(id_rk); an embedding bag.
template <typename T>
Var<T> embedding_bag(Var<T> table,
                     const std::vector<std::vector<std::pair<int, T>>>& bags) {
  const Eigen::Index d = table.cols();
  Matrix<T> v = Matrix<T>::Zero(static_cast<Eigen::Index>(bags.size()), d);
  for (std::size_t r = 0; r < bags.size(); ++r) {
    for (const auto& [id, w] : bags[r]) {
      if (id < 0 || id >= table.rows()) throw Error("embedding_bag: index");
      v.row(static_cast<Eigen::Index>(r)) += w * table.value().row(id);
    }
  }
  Var<T> out = table.tape->make(std::move(v), table.needs_grad());
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* nt = table.node;
    o->backward = [o, nt, bags] {
      auto& g = nt->g();
      for (std::size_t r = 0; r < bags.size(); ++r) {
        for (const auto& [id, w] : bags[r]) {
          g.row(id) += w * o->grad.row(static_cast<Eigen::Index>(r));
        }
      }
    };
  }
  return out;
}

// Copy of s with s(pos[i]) replaced by vals(i, 0).
template <typename T>
Var<T> replace_entries(Var<T> s, const std::vector<std::pair<int, int>>& pos,
                       Var<T> vals) {
  if (vals.rows() != static_cast<Eigen::Index>(pos.size()) || vals.cols() != 1) {
    throw Error("replace_entries: vals must be n x 1");
  }
  Matrix<T> v = s.value();
  for (std::size_t i = 0; i < pos.size(); ++i) {
    v(pos[i].first, pos[i].second) = vals.value()(static_cast<Eigen::Index>(i), 0);
  }
  Var<T> out = s.tape->make(std::move(v), detail::any_grad({s, vals}));
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* ns = s.node;
    Node<T>* nv = vals.node;
    o->backward = [o, ns, nv, pos] {
      if (ns->needs_grad) {
        Matrix<T> g = o->grad;
        for (const auto& [r, c] : pos) g(r, c) = T(0);
        ns->g() += g;
      }
      if (nv->needs_grad) {
        for (std::size_t i = 0; i < pos.size(); ++i) {
          nv->g()(static_cast<Eigen::Index>(i), 0) +=
              o->grad(pos[i].first, pos[i].second);
        }
      }
    };
  }
  return out;
}

// Softmax-weighted pooling over a prefix of learned position logits.
// tokens stacks every item's token rows back to back (lengths[b] rows each);
// out.row(b) = sum_j softmax(logits[0:len_b])_j * tokens.row(offset_b + j).
template <typename T>
Var<T> position_pool(Var<T> tokens, const std::vector<int>& lengths,
                     Var<T> logits) {
  const Eigen::Index d = tokens.cols();
  const Eigen::Index max_len = logits.cols();
  const Eigen::Index B = static_cast<Eigen::Index>(lengths.size());
  auto weights = std::make_shared<std::vector<RowVector<T>>>();
  Matrix<T> v = Matrix<T>::Zero(B, d);
  Eigen::Index off = 0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const Eigen::Index len = lengths[static_cast<std::size_t>(b)];
    if (len < 1 || len > max_len) {
      throw Error("position_pool: length " + std::to_string(len) +
                  " outside [1, " + std::to_string(max_len) + "]");
    }
    RowVector<T> a = logits.value().row(0).head(len);
    a.array() -= a.maxCoeff();
    a = a.array().exp();
    a /= a.sum();
    v.row(b) = a * tokens.value().middleRows(off, len);
    weights->push_back(std::move(a));
    off += len;
  }
  if (off != tokens.rows()) throw Error("position_pool: lengths/rows mismatch");
  Var<T> out = tokens.tape->make(std::move(v), detail::any_grad({tokens, logits}));
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* nt = tokens.node;
    Node<T>* nl = logits.node;
    o->backward = [o, nt, nl, weights, lengths] {
      Eigen::Index off2 = 0;
      for (std::size_t b = 0; b < lengths.size(); ++b) {
        const Eigen::Index len = lengths[b];
        const RowVector<T>& a = (*weights)[b];
        const auto gy = o->grad.row(static_cast<Eigen::Index>(b));
        if (nt->needs_grad) {
          nt->g().middleRows(off2, len).noalias() += a.transpose() * gy;
        }
        if (nl->needs_grad) {
          RowVector<T> e = (nt->value.middleRows(off2, len) * gy.transpose())
                               .transpose();
          const T ebar = a.dot(e);
          nl->g().row(0).head(len).array() += a.array() * (e.array() - ebar);
        }
        off2 += len;
      }
    };
  }
  return out;
}

// Multi-head scaled dot-product attention over packed sequences.
// qkv is N x 3d laid out as [q | k | v]; heads split d evenly. Positions in
// different segments never attend to each other.
template <typename T>
Var<T> attention(Var<T> qkv, const std::vector<Segment>& segments, int n_heads,
                 bool causal) {
  const Eigen::Index N = qkv.rows();
  if (qkv.cols() % 3 != 0) throw Error("attention: qkv must be N x 3d");
  const Eigen::Index d = qkv.cols() / 3;
  if (d % n_heads != 0) throw Error("attention: d not divisible by heads");
  const Eigen::Index hd = d / n_heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  const bool record = qkv.tape->recording() && qkv.needs_grad();
  auto probs = std::make_shared<std::vector<Matrix<T>>>();
  Matrix<T> out_v = Matrix<T>::Zero(N, d);
  const auto& x = qkv.value();
  for (const Segment& seg : segments) {
    const Eigen::Index s = seg.start;
    const Eigen::Index L = seg.length;
    if (s < 0 || s + L > N) throw Error("attention: segment out of range");
    for (Eigen::Index h = 0; h < n_heads; ++h) {
      auto Q = x.block(s, h * hd, L, hd);
      auto K = x.block(s, d + h * hd, L, hd);
      auto V = x.block(s, 2 * d + h * hd, L, hd);
      Matrix<T> S = (Q * K.transpose()) * scale;
      for (Eigen::Index i = 0; i < L; ++i) {
        const Eigen::Index visible = causal ? i + 1 : L;
        const T m = S.row(i).head(visible).maxCoeff();
        S.row(i).head(visible) = (S.row(i).head(visible).array() - m).exp();
        if (visible < L) S.row(i).tail(L - visible).setZero();
        S.row(i) /= S.row(i).sum();
      }
      out_v.block(s, h * hd, L, hd).noalias() = S * V;
      if (record) probs->push_back(std::move(S));
    }
  }
  Var<T> out = qkv.tape->make(std::move(out_v), qkv.needs_grad());
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* nq = qkv.node;
    o->backward = [o, nq, probs, segments, n_heads, d, hd, scale] {
      auto& g = nq->g();
      const auto& xv = nq->value;
      std::size_t k = 0;
      for (const Segment& seg : segments) {
        const Eigen::Index s = seg.start;
        const Eigen::Index L = seg.length;
        for (Eigen::Index h = 0; h < n_heads; ++h, ++k) {
          const Matrix<T>& P = (*probs)[k];
          auto Q = xv.block(s, h * hd, L, hd);
          auto K = xv.block(s, d + h * hd, L, hd);
          auto V = xv.block(s, 2 * d + h * hd, L, hd);
          auto dO = o->grad.block(s, h * hd, L, hd);
          Matrix<T> dP = dO * V.transpose();
          g.block(s, 2 * d + h * hd, L, hd).noalias() += P.transpose() * dO;
          Matrix<T> dS = P.cwiseProduct(dP);
          const Eigen::Matrix<T, Eigen::Dynamic, 1> rs = dS.rowwise().sum();
          dS -= (P.array().colwise() * rs.array()).matrix();
          dS *= scale;
          g.block(s, h * hd, L, hd).noalias() += dS * K;
          g.block(s, d + h * hd, L, hd).noalias() += dS.transpose() * Q;
        }
      }
    };
  }
  return out;
}

// Mean over rows with target >= 0 of -log softmax(logits.row(r))[target_r].
// `mask`, when given, is added to the logits (use -inf to exclude entries).
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, const std::vector<int>& targets,
                             const Matrix<T>* mask = nullptr) {
  const Eigen::Index R = logits.rows();
  const Eigen::Index C = logits.cols();
  if (static_cast<Eigen::Index>(targets.size()) != R) {
    throw Error("softmax_cross_entropy: one target per row required");
  }
  if (mask && (mask->rows() != R || mask->cols() != C)) {
    throw Error("softmax_cross_entropy: mask shape");
  }
  auto probs = std::make_shared<Matrix<T>>(R, C);
  double total = 0.0;
  int count = 0;
  for (Eigen::Index r = 0; r < R; ++r) {
    RowVector<T> z = logits.value().row(r);
    if (mask) z += mask->row(r);
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0) {
      probs->row(r).setZero();
      continue;
    }
    if (t >= C) throw Error("softmax_cross_entropy: target out of range");
    const T m = z.maxCoeff();
    RowVector<T> e = (z.array() - m).exp();
    const T s = e.sum();
    probs->row(r) = e / s;
    total += static_cast<double>(m + std::log(s) - z(t));
    ++count;
  }
  Matrix<T> v(1, 1);
  v(0, 0) = count ? static_cast<T>(total / count) : T(0);
  Var<T> out = logits.tape->make(std::move(v), logits.needs_grad() && count > 0);
  if (out.node->needs_grad) {
    Node<T>* o = out.node;
    Node<T>* nl = logits.node;
    o->backward = [o, nl, probs, targets, count] {
      const T scale = o->grad(0, 0) / static_cast<T>(count);
      auto& g = nl->g();
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const int t = targets[static_cast<std::size_t>(r)];
        if (t < 0) continue;
        g.row(r) += scale * probs->row(r);
        g(r, t) -= scale;
      }
    };
  }
  return out;
}

}  // namespace rta::ad
