#include "dsn/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace dsn {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)) {
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("Tensor: nonpositive extent in shape " + shape_str(shape));
  }
  data.assign(static_cast<size_t>(shape_numel(shape)), fill);
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data.assign(1, v);
  return t;
}

Tensor Tensor::of(Shape s, std::initializer_list<double> values) {
  return Tensor(std::move(s), std::vector<double>(values));
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("Tensor::item: shape " + shape_str(shape) + " is not a scalar");
  return data[0];
}

bool all_finite(const Tensor& t) {
  for (double v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) return HUGE_VAL;
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

namespace detail {

void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    const double* bi = b + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      double aip = ai[p];
      if (aip == 0.0) continue;
      double* cp = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

}  // namespace detail
}  // namespace dsn
