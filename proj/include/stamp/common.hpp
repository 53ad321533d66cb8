// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace stamp {

// Bad or missing input data (files, configs, datasets). CLI exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric/runtime failures (shape mismatch, divergence). CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic RNG wrapper. mt19937_64 has a standardized sequence, and the
// distributions below are hand-rolled so results are identical across
// platforms and standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Uniform in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw NumericError("Rng::uniform_int: n must be positive");
    return static_cast<int>(uniform01() * n);
  }

  // Uniform in [lo, hi] inclusive.
  int uniform_range(int lo, int hi) { return lo + uniform_int(hi - lo + 1); }

  // Index drawn proportionally to non-negative weights.
  int categorical(const std::vector<double>& w) {
    double total = 0.0;
    for (double x : w) total += x;
    double r = uniform01() * total;
    double acc = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      if (r < acc) return static_cast<int>(i);
    }
    return static_cast<int>(w.size()) - 1;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

// Full-string numeric parse (leading/trailing ASCII whitespace tolerated).
std::optional<double> parse_number(const std::string& s);

// ASCII-only case folding; bytes >= 0x80 pass through so UTF-8 is preserved.
char ascii_lower(char c);
std::string lower_copy(const std::string& s);
bool ci_equal(const std::string& a, const std::string& b);

// Shortest round-trip decimal form of a double (17 significant digits).
std::string format_double(double v);

// Compact human formatting: integral values print without a decimal point.
std::string format_value(double v);

}  // namespace stamp
