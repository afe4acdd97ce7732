#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace dsn {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major array of 64-bit reals. Rank 0 (empty shape) is a scalar
// with one element.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor of(Shape s, std::initializer_list<double> values);

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double item() const;  // requires size() == 1

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // 2-D accessors; the heavier kernels index raw data directly.
  double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
};

bool all_finite(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

namespace detail {
// C[M,N] += A[M,K] * B[K,N], all row-major.
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n);
// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n);
// C[K,N] += A[M,K]^T * B[M,N]
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n);
}  // namespace detail

}  // namespace dsn
