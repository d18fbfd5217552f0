#include "rrl/model/parameters.hpp"

#include <cstring>

#include "rrl/error.hpp"

namespace rrl {

Parameter& ParameterSet::add(std::string name, Shape shape, Vector value) {
  require(!contains(name), "duplicate parameter " + name);
  require(shape_size(shape) == value.size(), "parameter " + name + ": shape does not match value");
  index_[name] = items_.size();
  items_.push_back({std::move(name), std::move(shape), std::move(value)});
  return items_.back();
}

const Parameter& ParameterSet::at(const std::string& name) const {
  const auto it = index_.find(name);
  require(it != index_.end(), "unknown parameter " + name);
  return items_[it->second];
}

Parameter& ParameterSet::at(const std::string& name) {
  const auto it = index_.find(name);
  require(it != index_.end(), "unknown parameter " + name);
  return items_[it->second];
}

Index ParameterSet::total_size() const {
  Index n = 0;
  for (const Parameter& p : items_) n += p.value.size();
  return n;
}

Vector ParameterSet::flatten() const {
  Vector flat(total_size());
  Index offset = 0;
  for (const Parameter& p : items_) {
    flat.segment(offset, p.value.size()) = p.value;
    offset += p.value.size();
  }
  return flat;
}

void ParameterSet::assign(const Vector& flat) {
  require(flat.size() == total_size(), "assign: flat vector has the wrong length");
  Index offset = 0;
  for (Parameter& p : items_) {
    p.value = flat.segment(offset, p.value.size());
    offset += p.value.size();
  }
}

ParameterSet ParameterSet::filtered(const std::string& prefix) const {
  ParameterSet out;
  for (const Parameter& p : items_) {
    if (p.name.rfind(prefix, 0) == 0) out.add(p.name, p.shape, p.value);
  }
  return out;
}

const DiffArray& BoundParameters::operator[](const std::string& name) const {
  const auto it = values_.find(name);
  require(it != values_.end(), "parameter not bound: " + name);
  return it->second;
}

GradientMap BoundParameters::gradients() const {
  GradientMap out;
  for (const auto& [name, value] : values_) out[name] = value.grad();
  return out;
}

BoundParameters bind(Tape& tape, const ParameterSet& params, bool trainable) {
  BoundParameters bound;
  for (const Parameter& p : params.items()) {
    bound.set(p.name, trainable ? tape.variable(p.shape, p.value) : tape.constant(p.shape, p.value));
  }
  return bound;
}

BoundParameters bind_flat(const DiffArray& flat, const ParameterSet& layout) {
  require(flat.size() == layout.total_size(), "bind_flat: flat array does not match the layout");
  BoundParameters bound;
  Index offset = 0;
  for (const Parameter& p : layout.items()) {
    bound.set(p.name, reshape(segment(flat, offset, p.value.size()), p.shape));
    offset += p.value.size();
  }
  return bound;
}

std::uint64_t parameter_hash(const ParameterSet& params) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 0x100000001B3ULL;
    }
  };
  for (const Parameter& p : params.items()) {
    mix(p.name.data(), p.name.size());
    for (Index d : p.shape) mix(&d, sizeof d);
    mix(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(double));
  }
  return h;
}

}  // namespace rrl
