#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace simeval {

inline constexpr std::string_view kToolName = "simeval";
inline constexpr std::string_view kToolVersion = "0.1.0";

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or parameter values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, missing or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Failure inside a numeric computation (fit, metric, explainer).
class ComputeError : public Error {
 public:
  using Error::Error;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Derives an independent seed from a master seed and a textual tag. Every
/// seeded stage of a run draws its seed through this function, so a single
/// master seed reproduces an entire experiment.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) noexcept;
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t index) noexcept;

/// mt19937_64 plus portable sampling helpers. The standard pins the engine's
/// output sequence exactly; the helpers below avoid std::*_distribution,
/// whose sequences are implementation-defined, so seeded results match
/// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t u64() { return engine_(); }

  /// Uniform in [0,1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). Rejection sampling, unbiased.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform01() < p; }

  /// Standard normal via Marsaglia's polar method.
  double normal();

  double lognormal(double mu_log, double sigma_log) {
    return std::exp(mu_log + sigma_log * normal());
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * cols_, cols_};
  }
  std::span<double> row(std::size_t i) {
    return {values_.data() + i * cols_, cols_};
  }
  double operator()(std::size_t i, std::size_t j) const {
    return values_[i * cols_ + j];
  }
  double& operator()(std::size_t i, std::size_t j) {
    return values_[i * cols_ + j];
  }
  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

}  // namespace simeval
