#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ftlab {

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

// Dense row-major tensor of doubles. Shapes are small (rank <= 3 in practice).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    values.assign(numel(), 0.0);
  }
  Tensor(std::vector<std::size_t> s, std::vector<double> v)
      : shape(std::move(s)), values(std::move(v)) {
    check(values.size() == numel(), "tensor: values/shape mismatch");
  }

  std::size_t numel() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < t.shape.size(); ++i)
    os << (i ? "x" : "") << t.shape[i];
  os << "]";
  return os.str();
}

}  // namespace ftlab
