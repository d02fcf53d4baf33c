#include "simeval/common.hpp"

#include <cmath>
#include <limits>

namespace simeval {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) noexcept {
  // FNV-1a over the tag, then mixed with the master seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(master ^ splitmix64(h));
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t index) noexcept {
  return splitmix64(derive_seed(master, tag) +
                    0x9e3779b97f4a7c15ULL * (index + 1));
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) {
    throw ComputeError("Rng::below: n must be positive");
  }
  // 2^64 mod n; accept draws below 2^64 - rem so every residue is equally
  // likely.
  const std::uint64_t rem =
      (std::numeric_limits<std::uint64_t>::max() % n + 1) % n;
  if (rem == 0) {
    return engine_() % n;
  }
  const std::uint64_t threshold = static_cast<std::uint64_t>(0) - rem;
  std::uint64_t x = engine_();
  while (x >= threshold) {
    x = engine_();
  }
  return x % n;
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u = 0.0;
  double v = 0.0;
  double s = 0.0;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  have_spare_ = true;
  return u * m;
}

}  // namespace simeval
