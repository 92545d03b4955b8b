#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "reconmil/matrix.hpp"

namespace reconmil {

class Tape;

// Handle into the active computation record. Cheap to copy; the tape owns
// all storage. Valid only while the tape that produced it is alive.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  int rows() const;
  int cols() const;
  bool requires_grad() const;
};

// Append-only record of forward operations. One record per training step;
// nodes are topologically ordered by construction, so reverse iteration is
// a valid backward schedule. Single-threaded by contract.
class Tape {
public:
  Var leaf(Matrix value, bool requires_grad);

  // Internal: used by op implementations to append a result node.
  Var push(Matrix value, bool requires_grad, std::function<void(Tape&)> back);

  // Reverse-mode sweep from a 1x1 root. Grad buffers are (re)allocated as
  // zeros, the root is seeded with 1, and node backward hooks run in
  // reverse insertion order.
  void backward(Var root);

  const Matrix& value(int id) const { return nodes_[id].value; }
  Matrix& mutable_value(int id) { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  // Gradient buffer for a node, allocated on demand (zeros).
  Matrix& grad(int id);
  const Matrix& grad(Var v) { return grad(v.id); }

  std::size_t size() const { return nodes_.size(); }

  // Live bytes held by node values and grads; used for footprint reports.
  std::size_t bytes() const;

private:
  struct Node {
    Matrix value;
    Matrix grad;  // empty until backward touches it
    bool requires_grad = false;
    std::function<void(Tape&)> back;  // null for leaves / no-grad results
  };

  std::vector<Node> nodes_;
};

}  // namespace reconmil
