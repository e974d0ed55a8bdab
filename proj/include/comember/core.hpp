#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace comember {

using NodeId = std::uint32_t;
using EdgeType = std::uint8_t;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// malformed input files
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// a requested computation exceeds a configured size limit
class SizeGuardError : public Error {
 public:
  using Error::Error;
};

// the observations have zero probability under the model
class InconsistencyError : public Error {
 public:
  using Error::Error;
};

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

inline double log_sum_exp(const std::vector<double>& xs) {
  double mx = kNegInf;
  for (double x : xs) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

// k*log(x) with 0*log(0) = 0
inline double xlogy(double k, double x) {
  if (k == 0.0) return 0.0;
  return k * std::log(x);
}

inline std::size_t pair_count(std::size_t n) { return n * (n - 1) / 2; }

// index of unordered pair (v<w) in row-major upper-triangle order
inline std::size_t pair_index(std::size_t n, std::size_t v, std::size_t w) {
  if (v > w) std::swap(v, w);
  return v * n - v * (v + 1) / 2 + (w - v - 1);
}

inline std::uint64_t pair_key(NodeId v, NodeId w) {
  if (v > w) std::swap(v, w);
  return (static_cast<std::uint64_t>(v) << 32) | w;
}

}  // namespace comember
