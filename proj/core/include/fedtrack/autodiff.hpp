// Copyright 2026 The fedtrack Authors
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

// Minimal matrix-level reverse-mode differentiation. A Tape records every op
// in evaluation order; backward() walks it in reverse and accumulates
// gradients for parameter leaves into a flat buffer.

#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace fedtrack::ad {

/// Row-major dense matrix.
template <typename T>
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(int r, int c, T fill = T(0)) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  void reshape(int r, int c) {
    rows = r;
    cols = c;
    data.assign(static_cast<std::size_t>(r) * c, T(0));
  }
  /// Like reshape() but leaves the contents unspecified.
  void resize(int r, int c) {
    rows = r;
    cols = c;
    data.resize(static_cast<std::size_t>(r) * c);
  }
  std::size_t size() const { return data.size(); }

  using EigenMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstEigenMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  EigenMap map() { return EigenMap(data.data(), rows, cols); }
  ConstEigenMap map() const { return ConstEigenMap(data.data(), rows, cols); }

  T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

struct Var {
  int id = -1;
};

template <typename T>
class Tape {
 public:
  void reset() { count_ = 0; }
  std::size_t size() const { return count_; }

  const Matrix<T>& value(Var v) const { return nodes_[idx(v)].value; }
  const Matrix<T>& grad(Var v) const { return nodes_[idx(v)].grad; }

  Var constant(const Matrix<T>& m) {
    Node& n = push(Op::kLeaf, m.rows, m.cols);
    std::copy(m.data.begin(), m.data.end(), n.value.data.begin());
    return last();
  }

  /// Leaf reading `rows * cols` values starting at `offset`; its gradient is
  /// added to the same range of the buffer passed to backward().
  Var parameter(std::span<const T> params, std::size_t offset, int rows, int cols) {
    Node& n = push(Op::kParam, rows, cols);
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(offset), n.value.size(), n.value.data.begin());
    n.offset = offset;
    return last();
  }

  /// a (n x k) * b (k x m)
  Var matmul(Var a, Var b) {
    const int n = value(a).rows, m = value(b).cols;
    [[maybe_unused]] const int k = value(a).cols;
    assert(value(b).rows == k);
    Node& out = push(Op::kMatMul, n, m, a, b);
    out.value.map().noalias() = value(a).map() * value(b).map();
    return last();
  }

  /// a (n x k) * b^T where b is (m x k)
  Var matmul_nt(Var a, Var b) {
    const int n = value(a).rows, m = value(b).rows;
    [[maybe_unused]] const int k = value(a).cols;
    assert(value(b).cols == k);
    Node& out = push(Op::kMatMulNT, n, m, a, b);
    out.value.map().noalias() = value(a).map() * value(b).map().transpose();
    return last();
  }

  Var add(Var a, Var b) {
    assert(value(a).rows == value(b).rows && value(a).cols == value(b).cols);
    Node& out = push(Op::kAdd, value(a).rows, value(a).cols, a, b);
    const auto& A = value(a).data;
    const auto& B = value(b).data;
    for (std::size_t i = 0; i < A.size(); ++i) out.value.data[i] = A[i] + B[i];
    return last();
  }

  /// Adds a 1 x cols row to every row of a.
  Var add_row(Var a, Var row) {
    assert(value(row).rows == 1 && value(row).cols == value(a).cols);
    Node& out = push(Op::kAddRow, value(a).rows, value(a).cols, a, row);
    const auto& A = value(a);
    const auto& R = value(row);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < A.cols; ++j) out.value(i, j) = A(i, j) + R(0, j);
    return last();
  }

  /// Multiplies every row of a element-wise by a 1 x cols row.
  Var mul_row(Var a, Var row) {
    assert(value(row).rows == 1 && value(row).cols == value(a).cols);
    Node& out = push(Op::kMulRow, value(a).rows, value(a).cols, a, row);
    const auto& A = value(a);
    const auto& R = value(row);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < A.cols; ++j) out.value(i, j) = A(i, j) * R(0, j);
    return last();
  }

  Var scale(Var a, T s) {
    Node& out = push(Op::kScale, value(a).rows, value(a).cols, a);
    out.scalar = s;
    const auto& A = value(a).data;
    for (std::size_t i = 0; i < A.size(); ++i) out.value.data[i] = A[i] * s;
    return last();
  }

  Var relu(Var a) {
    Node& out = push(Op::kRelu, value(a).rows, value(a).cols, a);
    const auto& A = value(a).data;
    for (std::size_t i = 0; i < A.size(); ++i) out.value.data[i] = A[i] > T(0) ? A[i] : T(0);
    return last();
  }

  Var softmax_rows(Var a) {
    Node& out = push(Op::kSoftmaxRows, value(a).rows, value(a).cols, a);
    const auto& A = value(a);
    for (int i = 0; i < A.rows; ++i) {
      T mx = A(i, 0);
      for (int j = 1; j < A.cols; ++j) mx = std::max(mx, A(i, j));
      T sum = 0;
      for (int j = 0; j < A.cols; ++j) {
        out.value(i, j) = std::exp(A(i, j) - mx);
        sum += out.value(i, j);
      }
      for (int j = 0; j < A.cols; ++j) out.value(i, j) /= sum;
    }
    return last();
  }

  Var slice_cols(Var a, int begin, int count) {
    Node& out = push(Op::kSliceCols, value(a).rows, count, a);
    out.first = begin;
    const auto& A = value(a);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < count; ++j) out.value(i, j) = A(i, begin + j);
    return last();
  }

  Var concat_cols(std::span<const Var> parts) {
    int cols = 0;
    for (Var p : parts) cols += value(p).cols;
    const int rows = value(parts.front()).rows;
    Node& out = push(Op::kConcatCols, rows, cols);
    out.inputs.assign(parts.begin(), parts.end());
    int c0 = 0;
    for (Var p : parts) {
      const auto& P = value(p);
      assert(P.rows == rows);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < P.cols; ++j) out.value(i, c0 + j) = P(i, j);
      c0 += P.cols;
    }
    return last();
  }

  /// Per-column normalization over the row (sequence) axis:
  /// (x - mean) / sqrt(var + eps), population variance.
  Var instance_norm(Var a, T eps) {
    const int rows = value(a).rows, cols = value(a).cols;
    Node& out = push(Op::kInstanceNorm, rows, cols, a);
    out.aux.reshape(1, cols);
    const auto& A = value(a);
    for (int j = 0; j < cols; ++j) {
      T mean = 0;
      for (int i = 0; i < rows; ++i) mean += A(i, j);
      mean /= rows;
      T var = 0;
      for (int i = 0; i < rows; ++i) var += (A(i, j) - mean) * (A(i, j) - mean);
      var /= rows;
      const T inv_std = T(1) / std::sqrt(var + eps);
      out.aux(0, j) = inv_std;
      for (int i = 0; i < rows; ++i) out.value(i, j) = (A(i, j) - mean) * inv_std;
    }
    return last();
  }

  /// Element-wise product with a fixed, pre-scaled mask.
  Var dropout(Var a, const Matrix<T>& mask) {
    Node& out = push(Op::kDropout, value(a).rows, value(a).cols, a);
    out.aux = mask;
    const auto& A = value(a).data;
    for (std::size_t i = 0; i < A.size(); ++i) out.value.data[i] = A[i] * mask.data[i];
    return last();
  }

  /// Mean squared difference against a constant target; 1 x 1 result.
  Var mse(Var a, const Matrix<T>& target) {
    Node& out = push(Op::kMse, 1, 1, a);
    out.aux = target;
    const auto& A = value(a).data;
    T s = 0;
    for (std::size_t i = 0; i < A.size(); ++i) s += (A[i] - target.data[i]) * (A[i] - target.data[i]);
    out.value.data[0] = s / static_cast<T>(A.size());
    return last();
  }

  /// Seeds d(root) = seed (root must be 1 x 1) and accumulates parameter
  /// gradients into `param_grad`.
  void backward(Var root, T seed, std::span<T> param_grad) {
    for (std::size_t i = 0; i < count_; ++i) nodes_[i].has_grad = false;
    Node& r = nodes_[idx(root)];
    ensure_grad(r);
    r.grad.data[0] = seed;
    for (std::size_t i = idx(root) + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad) continue;
      propagate(n, param_grad);
    }
  }

 private:
  enum class Op {
    kLeaf,
    kParam,
    kMatMul,
    kMatMulNT,
    kAdd,
    kAddRow,
    kMulRow,
    kScale,
    kRelu,
    kSoftmaxRows,
    kSliceCols,
    kConcatCols,
    kInstanceNorm,
    kDropout,
    kMse,
  };

  struct Node {
    Op op = Op::kLeaf;
    Matrix<T> value;
    Matrix<T> grad;
    Matrix<T> aux;
    std::vector<Var> inputs;
    std::size_t offset = 0;
    T scalar = 0;
    int first = 0;
    bool has_grad = false;
  };

  static std::size_t idx(Var v) { return static_cast<std::size_t>(v.id); }
  Var last() const { return Var{static_cast<int>(count_ - 1)}; }

  Node& push(Op op, int rows, int cols, Var a = {}, Var b = {}) {
    if (count_ == nodes_.size()) nodes_.emplace_back();
    Node& n = nodes_[count_++];
    n.op = op;
    n.value.resize(rows, cols);  // every op writes its full output
    n.inputs.clear();
    if (a.id >= 0) n.inputs.push_back(a);
    if (b.id >= 0) n.inputs.push_back(b);
    n.has_grad = false;
    return n;
  }

  void ensure_grad(Node& n) {
    if (!n.has_grad) {
      n.grad.reshape(n.value.rows, n.value.cols);
      n.has_grad = true;
    }
  }

  Matrix<T>& input_grad(const Node& n, int which) {
    Node& in = nodes_[idx(n.inputs[static_cast<std::size_t>(which)])];
    ensure_grad(in);
    return in.grad;
  }
  const Matrix<T>& input_value(const Node& n, int which) const {
    return nodes_[idx(n.inputs[static_cast<std::size_t>(which)])].value;
  }

  void propagate(Node& n, std::span<T> param_grad) {
    const auto& G = n.grad;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kParam:
        for (std::size_t i = 0; i < G.size(); ++i) param_grad[n.offset + i] += G.data[i];
        break;
      case Op::kMatMul: {
        const auto& A = input_value(n, 0);
        const auto& B = input_value(n, 1);
        auto& dA = input_grad(n, 0);
        auto& dB = input_grad(n, 1);
        // dA += G B^T ; dB += A^T G
        dA.map().noalias() += G.map() * B.map().transpose();
        dB.map().noalias() += A.map().transpose() * G.map();
        break;
      }
      case Op::kMatMulNT: {
        const auto& A = input_value(n, 0);
        const auto& B = input_value(n, 1);
        auto& dA = input_grad(n, 0);
        auto& dB = input_grad(n, 1);
        // C = A B^T: dA += G B ; dB += G^T A
        dA.map().noalias() += G.map() * B.map();
        dB.map().noalias() += G.map().transpose() * A.map();
        break;
      }
      case Op::kAdd: {
        auto& dA = input_grad(n, 0);
        for (std::size_t i = 0; i < G.size(); ++i) dA.data[i] += G.data[i];
        auto& dB = input_grad(n, 1);
        for (std::size_t i = 0; i < G.size(); ++i) dB.data[i] += G.data[i];
        break;
      }
      case Op::kAddRow: {
        auto& dA = input_grad(n, 0);
        for (std::size_t i = 0; i < G.size(); ++i) dA.data[i] += G.data[i];
        auto& dR = input_grad(n, 1);
        for (int i = 0; i < G.rows; ++i)
          for (int j = 0; j < G.cols; ++j) dR(0, j) += G(i, j);
        break;
      }
      case Op::kMulRow: {
        const auto& A = input_value(n, 0);
        const auto& R = input_value(n, 1);
        auto& dA = input_grad(n, 0);
        for (int i = 0; i < G.rows; ++i)
          for (int j = 0; j < G.cols; ++j) dA(i, j) += G(i, j) * R(0, j);
        auto& dR = input_grad(n, 1);
        for (int i = 0; i < G.rows; ++i)
          for (int j = 0; j < G.cols; ++j) dR(0, j) += G(i, j) * A(i, j);
        break;
      }
      case Op::kScale: {
        auto& dA = input_grad(n, 0);
        for (std::size_t i = 0; i < G.size(); ++i) dA.data[i] += G.data[i] * n.scalar;
        break;
      }
      case Op::kRelu: {
        const auto& A = input_value(n, 0);
        auto& dA = input_grad(n, 0);
        for (std::size_t i = 0; i < G.size(); ++i)
          if (A.data[i] > T(0)) dA.data[i] += G.data[i];
        break;
      }
      case Op::kSoftmaxRows: {
        const auto& Y = n.value;
        auto& dA = input_grad(n, 0);
        for (int i = 0; i < Y.rows; ++i) {
          T dot = 0;
          for (int j = 0; j < Y.cols; ++j) dot += G(i, j) * Y(i, j);
          for (int j = 0; j < Y.cols; ++j) dA(i, j) += Y(i, j) * (G(i, j) - dot);
        }
        break;
      }
      case Op::kSliceCols: {
        auto& dA = input_grad(n, 0);
        for (int i = 0; i < G.rows; ++i)
          for (int j = 0; j < G.cols; ++j) dA(i, n.first + j) += G(i, j);
        break;
      }
      case Op::kConcatCols: {
        int c0 = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          auto& dP = input_grad(n, static_cast<int>(k));
          for (int i = 0; i < dP.rows; ++i)
            for (int j = 0; j < dP.cols; ++j) dP(i, j) += G(i, c0 + j);
          c0 += dP.cols;
        }
        break;
      }
      case Op::kInstanceNorm: {
        const auto& Xhat = n.value;
        auto& dA = input_grad(n, 0);
        const int rows = Xhat.rows;
        for (int j = 0; j < Xhat.cols; ++j) {
          T mean_g = 0, mean_gx = 0;
          for (int i = 0; i < rows; ++i) {
            mean_g += G(i, j);
            mean_gx += G(i, j) * Xhat(i, j);
          }
          mean_g /= rows;
          mean_gx /= rows;
          const T inv_std = n.aux(0, j);
          for (int i = 0; i < rows; ++i) dA(i, j) += inv_std * (G(i, j) - mean_g - Xhat(i, j) * mean_gx);
        }
        break;
      }
      case Op::kDropout: {
        auto& dA = input_grad(n, 0);
        for (std::size_t i = 0; i < G.size(); ++i) dA.data[i] += G.data[i] * n.aux.data[i];
        break;
      }
      case Op::kMse: {
        const auto& A = input_value(n, 0);
        auto& dA = input_grad(n, 0);
        const T k = T(2) * G.data[0] / static_cast<T>(A.size());
        for (std::size_t i = 0; i < A.size(); ++i) dA.data[i] += k * (A.data[i] - n.aux.data[i]);
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::size_t count_ = 0;
};

}  // namespace fedtrack::ad
