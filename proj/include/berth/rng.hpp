#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace berth {

// Seeded 64-bit Mersenne Twister. Distributions are constructed per draw, so
// the engine state alone captures everything needed to resume a stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  std::uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }
  void deserialize(const std::string& text) {
    std::istringstream is(text);
    is >> engine_;
  }

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace berth
