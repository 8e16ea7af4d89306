#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace mtsk {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic, Eigen::RowMajor>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string shape_string(Index rows, Index cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

namespace detail {

template <typename Scalar>
struct Node {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

}  // namespace detail

/// Dense row-major 2-D tensor with reverse-mode autodiff.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node.
/// Leaves created with `requires_grad = true` are parameters; gradients from
/// every `backward()` call accumulate into them until `zero_grad()`.
/// Results of operations whose inputs all have `requires_grad == false` are
/// detached and record no graph.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using MatrixType = Matrix<Scalar>;
  using Node = detail::Node<Scalar>;

  Tensor() = default;

  explicit Tensor(MatrixType value, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false) {
    return Tensor(MatrixType::Zero(rows, cols), requires_grad);
  }

  static Tensor scalar(Scalar v) {
    MatrixType m(1, 1);
    m(0, 0) = v;
    return Tensor(std::move(m));
  }

  bool defined() const { return node_ != nullptr; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  std::vector<Index> shape() const { return {rows(), cols()}; }

  const MatrixType& value() const { return node_->value; }
  /// Direct write access; reserved for optimizers and loaders.
  MatrixType& mutable_value() { return node_->value; }

  bool has_grad() const { return node_->grad.size() != 0; }

  /// Accumulated gradient; a zero matrix of matching shape if nothing flowed.
  MatrixType grad() const {
    if (!has_grad()) return MatrixType::Zero(rows(), cols());
    return node_->grad;
  }

  void zero_grad() { node_->grad.resize(0, 0); }
  /// Direct access for optimisers; empty until a backward pass reaches this node.
  MatrixType& mutable_grad() { return node_->grad; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  Scalar item() const {
    if (size() != 1) {
      throw DimensionError("item() needs a 1x1 tensor, got " + shape_string(rows(), cols()));
    }
    return node_->value(0, 0);
  }

  Tensor detach() const { return Tensor(node_->value, false); }

  /// Reverse sweep from this tensor, seeding its gradient with ones.
  void backward() const {
    if (!node_->requires_grad) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->accumulate(MatrixType::Ones(rows(), cols()));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
    }
  }

  /// Builds an op result. The backward closure receives the result node and
  /// reads parent values through `node.parents`.
  static Tensor make_result(MatrixType value, std::initializer_list<Tensor> parents,
                            std::function<void(Node&)> backward_fn) {
    return make_result(std::move(value), std::vector<Tensor>(parents), std::move(backward_fn));
  }

  static Tensor make_result(MatrixType value, const std::vector<Tensor>& parents,
                            std::function<void(Node&)> backward_fn) {
    Tensor out(std::move(value), false);
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->parents.reserve(parents.size());
    for (const auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward_fn = std::move(backward_fn);
    return out;
  }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace mtsk
