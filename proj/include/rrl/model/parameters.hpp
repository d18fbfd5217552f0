#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rrl/numeric/ops.hpp"
#include "rrl/numeric/tape.hpp"

namespace rrl {

struct Parameter {
  std::string name;
  Shape shape;
  Vector value;
};

/// Named parameter tensors kept in insertion order, which fixes the flat
/// layout, checkpoint order, and gradient reduction order.
class ParameterSet {
 public:
  Parameter& add(std::string name, Shape shape, Vector value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Parameter& at(const std::string& name) const;
  Parameter& at(const std::string& name);
  const std::vector<Parameter>& items() const { return items_; }
  std::vector<Parameter>& items() { return items_; }
  std::size_t count() const { return items_.size(); }

  Index total_size() const;
  Vector flatten() const;
  void assign(const Vector& flat);
  // Subset whose names start with `prefix`.
  ParameterSet filtered(const std::string& prefix) const;

 private:
  std::vector<Parameter> items_;
  std::map<std::string, std::size_t> index_;
};

using GradientMap = std::map<std::string, Vector>;
using BufferSet = std::map<std::string, BatchNormStats>;

/// Parameters placed on a tape, looked up by name.
class BoundParameters {
 public:
  void set(const std::string& name, DiffArray value) { values_[name] = value; }
  const DiffArray& operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return values_.count(name) != 0; }
  const std::map<std::string, DiffArray>& values() const { return values_; }

  // Gradients of every bound variable, zeros where nothing flowed.
  GradientMap gradients() const;

 private:
  std::map<std::string, DiffArray> values_;
};

BoundParameters bind(Tape& tape, const ParameterSet& params, bool trainable);
// Slices a flat array laid out like `layout` into named parameters.
BoundParameters bind_flat(const DiffArray& flat, const ParameterSet& layout);

// FNV-1a over names, shapes and the raw bytes of every value.
std::uint64_t parameter_hash(const ParameterSet& params);

}  // namespace rrl
