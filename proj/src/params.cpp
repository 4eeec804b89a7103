#include "kelm/params.hpp"

#include <cmath>

namespace kelm {

double Rng::normal() {
  // Box-Muller; draws two uniforms per value, discards the second sample so
  // consumption per call is fixed.
  double u1 = uniform();
  double u2 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Tensor ModelParams::add(const std::string& name, Tensor t) {
  auto it = index_.find(name);
  if (it != index_.end()) return entries_[it->second].second;
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, t);
  return t;
}

Tensor ModelParams::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return entries_[it->second].second;
}

void ModelParams::zero_grads() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

Tensor glorot_uniform(Shape shape, Rng& rng) {
  int fan_in, fan_out;
  if (shape.size() == 2) {
    fan_out = shape[0];
    fan_in = shape[1];
  } else {
    fan_in = shape[0];
    fan_out = 1;
  }
  const double r = std::sqrt(6.0 / (fan_in + fan_out));
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.uniform(-r, r);
  return Tensor::of(std::move(shape), std::move(v), true);
}

}  // namespace kelm
