#pragma once

#include <Eigen/Core>
#include <functional>
#include <span>
#include <vector>

#include "munmt/common/rng.hpp"

// Minimal reverse-mode automatic differentiation over dense row-major matrices.
// A Tape records operations as they execute; backward() replays them in
// reverse and accumulates gradients into the leaves' sinks.
namespace munmt::ad {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// A run of rows [offset, offset + length) in a packed matrix: one sequence.
struct Segment {
  int offset = 0;
  int length = 0;
};

template <class T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf referencing external storage. Gradients are added into *grad_sink,
  // which must be pre-sized to value's shape; a null sink makes it a constant.
  Var leaf(const Matrix<T>& value, Matrix<T>* grad_sink);
  Var constant(Matrix<T> value);

  const Matrix<T>& value(Var v) const;
  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);     // a * b
  Var matmul_bt(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);  // row (1 x n) broadcast over a's rows
  Var scale(Var a, T factor);
  Var relu(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, T eps);
  Var gather_rows(Var table, std::vector<int> rows);
  // Inverted dropout; identity (same Var) when rate == 0.
  Var dropout(Var x, T rate, Rng& rng);
  // Multi-head scaled dot-product attention, segment by segment. q_segments[i]
  // attends only to k_segments[i]; causal masks keys after the query position.
  Var attention(Var q, Var k, Var v, std::vector<Segment> q_segments, std::vector<Segment> k_segments, int heads,
                bool causal);
  // Sum over rows of -log softmax(logits)[target]; returns a 1x1 Var. If
  // target_logprobs is given it receives log p(target) per row.
  Var nll(Var logits, std::vector<int> targets, std::vector<T>* target_logprobs = nullptr);
  Var sum(std::span<const Var> scalars);

  // Seeds d(loss)/d(loss) = 1 and propagates. loss must be 1x1.
  void backward(Var loss);

 private:
  struct Node {
    Matrix<T> owned;
    const Matrix<T>* external = nullptr;
    Matrix<T> grad;
    Matrix<T>* grad_sink = nullptr;
    bool needs_grad = false;
    bool has_grad = false;
    std::function<void()> backward;

    const Matrix<T>& value() const { return external ? *external : owned; }
  };

  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }
  Var push(Matrix<T> value, bool needs_grad);
  Matrix<T>& grad(Var v);

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace munmt::ad
