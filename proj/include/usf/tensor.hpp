#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "usf/common.hpp"
#include "usf/rng.hpp"

namespace usf::nd {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

// Dense row-major array of 64-bit floats.
struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), v(shape_numel(shape), 0.0) {}
  Tensor(Shape s, std::vector<double> data);

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  double& at2(int r, int c) { return v[static_cast<size_t>(r) * shape.back() + c]; }
  double at2(int r, int c) const { return v[static_cast<size_t>(r) * shape.back() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double value);
  static Tensor scalar(double value) { return full({1}, value); }
  static Tensor randn(Shape s, Rng& rng, double stddev = 1.0);
  static Tensor uniform(Shape s, Rng& rng, double lo, double hi);
};

// C = A x B on the trailing two axes; leading axes must match or B may be
// rank-2 (shared across A's batch). Inner loops go through Eigen.
Tensor matmul(const Tensor& a, const Tensor& b);

// C (+)= op(A)[m x k] * op(B)[k x n] on raw row-major blocks.
void gemm(const double* a, const double* b, double* c, int m, int k, int n,
          bool trans_a, bool trans_b, bool accumulate);

double dot(const Tensor& a, const Tensor& b);

}  // namespace usf::nd
