#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rrl {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

/// Handle to a value recorded on a Tape.
///
/// Values are row-major. The handle is cheap to copy and stays valid for the
/// lifetime of the owning tape; the value itself is immutable once recorded,
/// only its gradient changes and only during Tape::backward.
class DiffArray {
 public:
  DiffArray() = default;

  const Shape& shape() const;
  Index size() const;
  Index dim() const { return static_cast<Index>(shape().size()); }
  Index rows() const;
  Index cols() const;

  const Vector& data() const;
  // Accumulated gradient; zeros when no gradient reached this value.
  Vector grad() const;
  bool requires_grad() const;
  double item() const;

  Eigen::Map<const RowMatrix> matrix() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  DiffArray(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of operations supporting reverse-mode differentiation.
///
/// Every op appends one node whose inputs precede it, so the node order is a
/// topological order and backward() is a single reverse sweep.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  DiffArray constant(Shape shape, Vector value);
  DiffArray variable(Shape shape, Vector value);
  DiffArray scalar(double value) { return constant({}, Vector::Constant(1, value)); }

  // Records an op result. The backward closure is kept only if some input
  // requires a gradient.
  DiffArray record(Shape shape, Vector value, std::initializer_list<DiffArray> inputs,
                   Backward backward);
  DiffArray record(Shape shape, Vector value, std::span<const DiffArray> inputs,
                   Backward backward);

  // Seeds d(output)/d(output) = 1 for a single-element output.
  void backward(const DiffArray& output);
  // Seeds arbitrary output cotangents; used to resume a backward pass that
  // started on another tape.
  void backward(std::span<const DiffArray> outputs, std::span<const Vector> seeds);
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }

  const Shape& shape(std::size_t id) const { return nodes_[id].shape; }
  const Vector& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool has_grad(std::size_t id) const { return nodes_[id].grad.size() != 0; }
  const Vector& grad(std::size_t id) const { return nodes_[id].grad; }
  // Gradient buffer of a node, allocated as zeros on first use.
  Vector& grad_buffer(std::size_t id);

 private:
  struct Node {
    Shape shape;
    Vector value;
    Vector grad;
    bool requires_grad = false;
    Backward backward;
  };

  void run_backward();

  std::vector<Node> nodes_;
};

}  // namespace rrl
