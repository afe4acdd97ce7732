#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dsn/graph.hpp"
#include "dsn/tensor.hpp"

namespace dsn {

// Builds the loss on a fresh graph over the given leaves (bound in order).
using LossBuilder = std::function<Var(Graph&, const std::vector<Var>&)>;

struct FdReport {
  double max_rel_err = 0.0;
  std::string worst_leaf;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int64_t checked = 0;
  bool ok(double tol) const { return max_rel_err < tol; }
  std::string describe() const;
};

// Central differences (f(p+eps) - f(p-eps)) / 2eps against reverse-mode
// gradients; relative error uses denominator max(|analytic|, |numeric|, 1e-8).
// When probe is non-null only the listed element indices of each leaf are
// perturbed (one entry per leaf; empty list means skip that leaf).
//
// grad_scale is a fault-injection hook for tests of the checker itself: the
// analytic gradient of leaf 0 is multiplied by it before comparison.
FdReport finite_difference_check(const LossBuilder& build, std::vector<Tensor>& leaves,
                                 const std::vector<std::string>& names, double epsilon = 1e-5,
                                 const std::vector<std::vector<int64_t>>* probe = nullptr,
                                 double grad_scale = 1.0);

}  // namespace dsn
