#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mera/errors.hpp"
#include "mera/matrix.hpp"
#include "mera/random.hpp"

namespace mera {

struct ParameterEntry {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;
};

/// Named learnable tensors with gradient slots and Adam moments. Entries keep
/// insertion order, which fixes the checkpoint layout.
class ParameterStore {
 public:
  Matrix& add(const std::string& name, Matrix value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    const std::size_t r = value.rows(), c = value.cols();
    entries_.push_back({name, std::move(value), Matrix(r, c), Matrix(r, c), Matrix(r, c)});
    return entries_.back().value;
  }

  /// Glorot-uniform weights in ±sqrt(6 / (fan_in + fan_out)).
  Matrix& add_glorot(const std::string& name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    Matrix w(fan_in, fan_out);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : w.data()) v = rng.uniform(-limit, limit);
    return add(name, std::move(w));
  }

  Matrix& add_zeros(const std::string& name, std::size_t rows, std::size_t cols) {
    return add(name, Matrix(rows, cols));
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  ParameterEntry& entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw LookupError("no parameter named '" + name + "'");
    return entries_[it->second];
  }
  const ParameterEntry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw LookupError("no parameter named '" + name + "'");
    return entries_[it->second];
  }

  Matrix& value(const std::string& name) { return entry(name).value; }
  const Matrix& value(const std::string& name) const { return entry(name).value; }
  Matrix& grad(const std::string& name) { return entry(name).grad; }
  const Matrix& grad(const std::string& name) const { return entry(name).grad; }

  /// Replaces a value (and resets its slots) when the shape changes.
  void set(const std::string& name, Matrix value) {
    auto& e = entry(name);
    const std::size_t r = value.rows(), c = value.cols();
    e.value = std::move(value);
    if (!e.grad.same_shape(e.value)) {
      e.grad = Matrix(r, c);
      e.adam_m = Matrix(r, c);
      e.adam_v = Matrix(r, c);
    }
  }

  void zero_grad() {
    for (auto& e : entries_) e.grad.fill(0.0);
  }

  std::vector<ParameterEntry>& entries() { return entries_; }
  const std::vector<ParameterEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  std::uint64_t adam_step = 0;

 private:
  std::vector<ParameterEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace mera
