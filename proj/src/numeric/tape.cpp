#include "rrl/numeric/tape.hpp"

#include <sstream>

#include "rrl/error.hpp"

namespace rrl {

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

const Shape& DiffArray::shape() const { return tape_->shape(id_); }
Index DiffArray::size() const { return tape_->value(id_).size(); }

Index DiffArray::rows() const {
  const Shape& s = shape();
  require(s.size() == 2, "rows(): expected a 2-D array, got " + shape_string(s));
  return s[0];
}

Index DiffArray::cols() const {
  const Shape& s = shape();
  require(s.size() == 2, "cols(): expected a 2-D array, got " + shape_string(s));
  return s[1];
}

const Vector& DiffArray::data() const { return tape_->value(id_); }

Vector DiffArray::grad() const {
  if (tape_->has_grad(id_)) return tape_->grad(id_);
  return Vector::Zero(size());
}

bool DiffArray::requires_grad() const { return tape_->requires_grad(id_); }

double DiffArray::item() const {
  require(size() == 1, "item(): array has " + std::to_string(size()) + " elements");
  return data()[0];
}

Eigen::Map<const RowMatrix> DiffArray::matrix() const {
  return {data().data(), rows(), cols()};
}

DiffArray Tape::constant(Shape shape, Vector value) {
  require(shape_size(shape) == value.size(),
          "constant(): shape " + shape_string(shape) + " does not match " +
              std::to_string(value.size()) + " values");
  nodes_.push_back(Node{std::move(shape), std::move(value), {}, false, {}});
  return {this, nodes_.size() - 1};
}

DiffArray Tape::variable(Shape shape, Vector value) {
  DiffArray out = constant(std::move(shape), std::move(value));
  nodes_.back().requires_grad = true;
  return out;
}

DiffArray Tape::record(Shape shape, Vector value, std::initializer_list<DiffArray> inputs,
                       Backward backward) {
  return record(std::move(shape), std::move(value),
                std::span<const DiffArray>(inputs.begin(), inputs.size()), std::move(backward));
}

DiffArray Tape::record(Shape shape, Vector value, std::span<const DiffArray> inputs,
                       Backward backward) {
  bool needs_grad = false;
  for (const DiffArray& in : inputs) {
    require(in.tape_ == this, "op inputs must live on the same tape");
    needs_grad = needs_grad || nodes_[in.id_].requires_grad;
  }
  DiffArray out = constant(std::move(shape), std::move(value));
  if (needs_grad) {
    nodes_.back().requires_grad = true;
    nodes_.back().backward = std::move(backward);
  }
  return out;
}

Vector& Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.size() == 0) node.grad = Vector::Zero(node.value.size());
  return node.grad;
}

void Tape::backward(const DiffArray& output) {
  require(output.size() == 1, "backward(): output must be a single element, got " +
                                  shape_string(output.shape()));
  const Vector seed = Vector::Ones(1);
  backward(std::span<const DiffArray>(&output, 1), std::span<const Vector>(&seed, 1));
}

void Tape::backward(std::span<const DiffArray> outputs, std::span<const Vector> seeds) {
  require(outputs.size() == seeds.size(), "backward(): one seed per output");
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    require(outputs[i].tape_ == this, "backward(): output from another tape");
    require(seeds[i].size() == outputs[i].size(), "backward(): seed size mismatch");
    if (!nodes_[outputs[i].id_].requires_grad) continue;
    grad_buffer(outputs[i].id_) += seeds[i];
  }
  run_backward();
}

void Tape::run_backward() {
  for (std::size_t id = nodes_.size(); id-- > 0;) {
    Node& node = nodes_[id];
    if (node.backward && node.grad.size() != 0) node.backward(*this, id);
  }
}

void Tape::zero_grad() {
  for (Node& node : nodes_) node.grad.resize(0);
}

}  // namespace rrl
