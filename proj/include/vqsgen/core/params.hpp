#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vqsgen/core/tensor.hpp"

namespace vqsgen {

using Rng = std::mt19937_64;

/// Ordered registry of named trainable arrays.
class ParamSet {
 public:
  Var add(const std::string& name, Var v) {
    for (const auto& [n, _] : items_)
      if (n == name) throw std::invalid_argument("duplicate parameter name: " + name);
    items_.emplace_back(name, v);
    return v;
  }

  void extend(const ParamSet& other) {
    for (const auto& [n, v] : other.items_) add(n, v);
  }

  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }

  std::vector<Var> vars() const {
    std::vector<Var> out;
    out.reserve(items_.size());
    for (const auto& [_, v] : items_) out.push_back(v);
    return out;
  }

  Var find(const std::string& name) const {
    for (const auto& [n, v] : items_)
      if (n == name) return v;
    throw std::out_of_range("unknown parameter: " + name);
  }

  void zero_grad() {
    for (auto& [_, v] : items_) v.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : items_) n += v.size();
    return n;
  }

  /// Bitwise snapshot of all values, in registration order.
  std::vector<std::vector<double>> snapshot() const {
    std::vector<std::vector<double>> out;
    for (const auto& [_, v] : items_) out.push_back(v.vec());
    return out;
  }

 private:
  std::vector<std::pair<std::string, Var>> items_;
};

/// Kaiming-normal weights (std = sqrt(2 / fan_in)).
inline Var kaiming(Shape shape, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<double> v(numel(shape));
  for (double& x : v) x = dist(rng);
  return Var::from(std::move(shape), std::move(v), true);
}

inline Var normal_init(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = dist(rng);
  return Var::from(std::move(shape), std::move(v), true);
}

inline Var zeros_param(Shape shape) { return Var::zeros(std::move(shape), true); }
inline Var ones_param(Shape shape) { return Var::full(std::move(shape), 1.0, true); }

}  // namespace vqsgen
