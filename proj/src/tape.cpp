#include "reconmil/tape.hpp"

#include <stdexcept>

namespace reconmil {

const Matrix& Var::value() const { return tape->value(id); }
int Var::rows() const { return tape->value(id).rows; }
int Var::cols() const { return tape->value(id).cols; }
bool Var::requires_grad() const { return tape->requires_grad(id); }

Var Tape::leaf(Matrix value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&)> back) {
#ifndef NDEBUG
  if (!value.all_finite()) throw std::runtime_error("non-finite forward value");
#endif
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad(int id) {
  Node& node = nodes_[id];
  if (node.grad.rows != node.value.rows || node.grad.cols != node.value.cols) {
    node.grad = Matrix(node.value.rows, node.value.cols, 0.0);
  }
  return node.grad;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::invalid_argument("backward: foreign var");
  const Matrix& v = nodes_[root.id].value;
  if (v.rows != 1 || v.cols != 1) {
    throw std::invalid_argument("backward: root must be a scalar");
  }
  for (auto& node : nodes_) node.grad = Matrix();
  grad(root.id).at(0, 0) = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& node = nodes_[i];
    if (node.back && node.grad.size() > 0) node.back(*this);
  }
}

std::size_t Tape::bytes() const {
  std::size_t total = 0;
  for (const auto& node : nodes_) {
    total += (node.value.size() + node.grad.size()) * sizeof(double);
  }
  return total;
}

}  // namespace reconmil
