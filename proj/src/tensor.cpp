#include "usf/tensor.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

namespace usf::nd {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ValidationError("tensor extent must be positive, got shape " + shape_str(s));
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
  if (shape_numel(shape) != static_cast<int64_t>(v.size()))
    throw ValidationError("tensor data size " + std::to_string(v.size()) +
                          " does not match shape " + shape_str(shape));
}

bool Tensor::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

Tensor Tensor::full(Shape s, double value) {
  Tensor t(std::move(s));
  std::fill(t.v.begin(), t.v.end(), value);
  return t;
}

Tensor Tensor::randn(Shape s, Rng& rng, double stddev) {
  Tensor t(std::move(s));
  for (double& x : t.v) x = rng.normal(0.0, stddev);
  return t;
}

Tensor Tensor::uniform(Shape s, Rng& rng, double lo, double hi) {
  Tensor t(std::move(s));
  for (double& x : t.v) x = rng.uniform(lo, hi);
  return t;
}

using MatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void gemm(const double* a, const double* b, double* c, int m, int k, int n,
          bool trans_a, bool trans_b, bool accumulate) {
  MatMap am(a, trans_a ? k : m, trans_a ? m : k);
  MatMap bm(b, trans_b ? n : k, trans_b ? k : n);
  MutMap cm(c, m, n);
  if (!trans_a && !trans_b) {
    if (accumulate) cm.noalias() += am * bm; else cm.noalias() = am * bm;
  } else if (trans_a && !trans_b) {
    if (accumulate) cm.noalias() += am.transpose() * bm; else cm.noalias() = am.transpose() * bm;
  } else if (!trans_a && trans_b) {
    if (accumulate) cm.noalias() += am * bm.transpose(); else cm.noalias() = am * bm.transpose();
  } else {
    if (accumulate) cm.noalias() += am.transpose() * bm.transpose(); else cm.noalias() = am.transpose() * bm.transpose();
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw ValidationError("matmul requires rank >= 2, got " + shape_str(a.shape) + " and " + shape_str(b.shape));
  int m = a.shape[a.rank() - 2], ka = a.shape[a.rank() - 1];
  int kb = b.shape[b.rank() - 2], n = b.shape[b.rank() - 1];
  if (ka != kb)
    throw ValidationError("matmul inner extents differ: " + shape_str(a.shape) + " x " + shape_str(b.shape));
  Shape batch(a.shape.begin(), a.shape.end() - 2);
  bool shared_b = b.rank() == 2;
  if (!shared_b) {
    Shape bbatch(b.shape.begin(), b.shape.end() - 2);
    if (batch != bbatch)
      throw ValidationError("matmul batch extents differ: " + shape_str(a.shape) + " x " + shape_str(b.shape));
  }
  Shape out = batch;
  out.push_back(m);
  out.push_back(n);
  Tensor c(out);
  int64_t batches = shape_numel(batch.empty() ? Shape{1} : batch);
  for (int64_t i = 0; i < batches; ++i) {
    const double* ap = a.v.data() + i * static_cast<int64_t>(m) * ka;
    const double* bp = shared_b ? b.v.data() : b.v.data() + i * static_cast<int64_t>(ka) * n;
    gemm(ap, bp, c.v.data() + i * static_cast<int64_t>(m) * n, m, ka, n, false, false, false);
  }
  return c;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel())
    throw ValidationError("dot size mismatch: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) s += a.v[static_cast<size_t>(i)] * b.v[static_cast<size_t>(i)];
  return s;
}

}  // namespace usf::nd
