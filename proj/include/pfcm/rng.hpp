#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace pfcm {

// Named sub-stream derived from one master seed, so that the individual
// sources of randomness (split, init, synth, ...) stay independently
// reproducible when one of them is reconfigured.
std::uint64_t sub_seed(std::uint64_t master, std::string_view stream);

// mt19937_64 plus hand-rolled value transforms. The engine's output sequence
// is pinned by the standard; the library distributions are not, and every
// draw here must reproduce bit-exactly from a seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // uniform in [0,1), 53-bit resolution
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // uniform in [0,n), unbiased
  std::uint64_t uniform_below(std::uint64_t n);

  // uniform integer in [lo,hi], inclusive
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // standard normal (Box-Muller)
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = uniform_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pfcm
