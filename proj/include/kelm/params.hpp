#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "kelm/tensor.hpp"

namespace kelm {

// Deterministic 64-bit RNG used everywhere randomness is needed. All
// streams derive from one master seed so a run is reproducible bit for bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  // splitmix64
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }  // [0,1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();                    // Box-Muller, one value per call
  int below(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }

  // independent child stream (for per-purpose substreams)
  Rng fork(std::uint64_t tag) const { return Rng(state_ ^ (tag * 0xd1b54a32d192ed03ULL + 0x2545F4914F6CDD1DULL)); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<size_t>(below(static_cast<int>(i)))]);
  }

 private:
  std::uint64_t state_;
};

// Named collection of all trainable tensors, in a stable creation order.
// Checkpoints, the optimizer, and grad checks all walk this order.
class ModelParams {
 public:
  // Creates (or returns the existing) named parameter.
  Tensor add(const std::string& name, Tensor t);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  size_t count() const { return entries_.size(); }

  void zero_grads();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Glorot-style uniform init on (-r, r), r = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, Rng& rng);

}  // namespace kelm
