#include "dsn/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace dsn {

std::string FdReport::describe() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "max rel err %.3e at %s[%lld] (analytic %.6e, numeric %.6e, %lld checked)",
                max_rel_err, worst_leaf.empty() ? "<none>" : worst_leaf.c_str(),
                static_cast<long long>(worst_index), worst_analytic, worst_numeric,
                static_cast<long long>(checked));
  return buf;
}

namespace {

double eval_loss(const LossBuilder& build, const std::vector<Tensor>& leaves, const std::vector<std::string>& names) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(leaves.size());
  for (size_t i = 0; i < leaves.size(); ++i) vars.push_back(g.leaf(leaves[i], names[i], true));
  Var loss = build(g, vars);
  return g.value(loss).item();
}

}  // namespace

FdReport finite_difference_check(const LossBuilder& build, std::vector<Tensor>& leaves,
                                 const std::vector<std::string>& names, double epsilon,
                                 const std::vector<std::vector<int64_t>>* probe, double grad_scale) {
  if (epsilon <= 0.0) throw std::invalid_argument("finite_difference_check: epsilon must be positive");
  if (leaves.size() != names.size()) throw std::invalid_argument("finite_difference_check: one name per leaf required");

  // Analytic pass.
  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    for (size_t i = 0; i < leaves.size(); ++i) vars.push_back(g.leaf(leaves[i], names[i], true));
    Var loss = build(g, vars);
    GradientMap gm = g.backward(loss);
    for (auto& v : vars) analytic.push_back(gm.at(v));
  }
  if (grad_scale != 1.0 && !analytic.empty())
    for (double& v : analytic[0].data) v *= grad_scale;

  FdReport rep;
  for (size_t li = 0; li < leaves.size(); ++li) {
    std::vector<int64_t> indices;
    if (probe) {
      indices = (*probe)[li];
    } else {
      indices.resize(static_cast<size_t>(leaves[li].size()));
      for (int64_t i = 0; i < leaves[li].size(); ++i) indices[static_cast<size_t>(i)] = i;
    }
    for (int64_t idx : indices) {
      double saved = leaves[li][idx];
      leaves[li][idx] = saved + epsilon;
      double fp = eval_loss(build, leaves, names);
      leaves[li][idx] = saved - epsilon;
      double fm = eval_loss(build, leaves, names);
      leaves[li][idx] = saved;

      double numeric = (fp - fm) / (2.0 * epsilon);
      double a = analytic[li][idx];
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      double rel = std::fabs(a - numeric) / denom;
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_leaf = names[li];
        rep.worst_index = idx;
        rep.worst_analytic = a;
        rep.worst_numeric = numeric;
      }
    }
  }
  return rep;
}

}  // namespace dsn
