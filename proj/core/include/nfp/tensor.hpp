#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace nfp {

// Dense row-major tensor of 64-bit floats. Rank is 1 or 2 everywhere in
// this codebase; shape is kept as a vector so diagnostics stay uniform.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  // 2-D accessors; a rank-1 tensor behaves as a single row.
  std::size_t rows() const { return rank() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape[1] : (shape.empty() ? 0 : shape[0]); }

  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_string() const;
};

// Throws std::runtime_error naming `what` if any entry is NaN or Inf.
void check_finite(const Tensor& t, const std::string& what);
void check_finite(double v, const std::string& what);

// Elementwise helpers used by the hand-wired backward passes.
void add_inplace(Tensor& dst, const Tensor& src);
void scale_inplace(Tensor& t, double factor);

}  // namespace nfp
