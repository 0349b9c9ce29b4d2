#pragma once

#include <cstdint>
#include <cmath>

#include "bird/array.hpp"

namespace bird {

/// Counter-based pseudo-random stream (SplitMix64 core). Every stochastic
/// draw in the library goes through an explicitly derived stream, so a run
/// is a pure function of its seed. Streams derived with the same tags are
/// bitwise identical regardless of what other streams consumed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : key_(mix(key ^ 0x9e3779b97f4a7c15ull)), counter_(0) {}

  /// Derives a child stream from the immutable key and a caller-chosen tag.
  /// Forking does not consume or disturb this stream's state.
  RngStream fork(std::uint64_t tag) const { return RngStream(mix(key_ + mix(tag ^ 0xbf58476d1ce4e5b9ull))); }

  std::uint64_t next_u64() {
    std::uint64_t z = key_ + 0x9e3779b97f4a7c15ull * ++counter_;
    return mix(z);
  }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller; consumes two uniforms per draw and keeps
  /// no spare, so the stream state stays a plain counter.
  double normal() {
    double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  Array normal_array(std::size_t n) {
    Array a = Array::zeros(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = normal();
    return a;
  }

  Array normal_array(std::size_t rows, std::size_t cols) {
    Array a = Array::zeros(rows, cols);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = normal();
    return a;
  }

  Array uniform_array(std::size_t rows, std::size_t cols, double lo, double hi) {
    Array a = Array::zeros(rows, cols);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = uniform(lo, hi);
    return a;
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_;
};

/// Stream purpose tags. Using fixed constants (not evolving state) means a
/// resumed run derives exactly the streams an uninterrupted run would.
namespace stream_tag {
constexpr std::uint64_t init_model = 0x01;
constexpr std::uint64_t init_actor = 0x02;
constexpr std::uint64_t init_critic = 0x03;
constexpr std::uint64_t prefill = 0x10;
constexpr std::uint64_t interact = 0x11;
constexpr std::uint64_t learn = 0x12;
constexpr std::uint64_t env_reset = 0x13;
constexpr std::uint64_t eval = 0x14;
constexpr std::uint64_t diagnostics = 0x15;
}  // namespace stream_tag

}  // namespace bird
