#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace idml {

// Deterministic random stream. Every draw is an explicit mapping of raw
// mt19937_64 output; std::*_distribution is never used because its output
// is implementation-defined and would break run-to-run reproducibility
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(gen_()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal, Box-Muller; the second value of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Text form of the full generator state; round-trips exactly.
  std::string serialize() const {
    std::ostringstream os;
    os << gen_ << ' ' << (have_spare_ ? 1 : 0) << ' ' << double_bits(spare_);
    return os.str();
  }

  static Rng deserialize(const std::string& text) {
    Rng r;
    std::istringstream is(text);
    int have = 0;
    std::uint64_t bits = 0;
    is >> r.gen_ >> have >> bits;
    if (!is) throw std::runtime_error("Rng::deserialize: malformed state string");
    r.have_spare_ = have != 0;
    r.spare_ = bits_double(bits);
    return r;
  }

 private:
  static std::uint64_t double_bits(double d) {
    std::uint64_t b;
    std::memcpy(&b, &d, sizeof(b));
    return b;
  }
  static double bits_double(std::uint64_t b) {
    double d;
    std::memcpy(&d, &b, sizeof(d));
    return d;
  }

  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Derives an independent stream seed from a run seed and a stream tag
// (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace idml
