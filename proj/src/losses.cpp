#include "dsn/losses.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace dsn {

namespace {

constexpr double kLogFloor = 1e-12;
constexpr double kPoseFloor = 1e-6;
constexpr double kNormFloor = 1e-8;
constexpr double kPi = 3.14159265358979323846;

Var flatten_per_sample(Var x) {
  const Tensor& t = x.graph->value(x);
  if (t.rank() <= 1) return reshape(x, {1, static_cast<int>(t.size())});
  int n = t.shape[0];
  return reshape(x, {n, static_cast<int>(t.size() / n)});
}

// Rows scaled to unit L2 norm; rows with norm below kNormFloor are left
// (near) untouched instead of blowing up.
Var normalize_rows(Var h) {
  Var ss = sum_axis(square(h), 1);
  Var norm = dsn::sqrt(clamp_min(ss, kNormFloor * kNormFloor));
  return scale_rows(h, recip(norm));
}

Var pairwise_sqdist(Var a, Var b) {
  Var ra = sum_axis(square(a), 1);            // [Na]
  Var rb = sum_axis(square(b), 1);            // [Nb]
  Var cross = matmul(a, transpose(b));        // [Na,Nb]
  return add_col(add_row(mul_scalar(cross, -2.0), rb), ra);
}

}  // namespace

KernelSpec KernelSpec::default_multi_rbf() {
  KernelSpec k;
  k.sigmas = {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 5.0, 10.0, 15.0,
              20.0, 25.0, 30.0, 35.0, 100.0, 1e3, 1e4, 1e5, 1e6};
  k.etas.assign(k.sigmas.size(), 1.0);
  return k;
}

void KernelSpec::validate() const {
  if (sigmas.empty() || sigmas.size() != etas.size())
    throw std::invalid_argument("KernelSpec: sigmas and etas must be nonempty and the same length");
  bool any = false;
  for (size_t i = 0; i < sigmas.size(); ++i) {
    if (sigmas[i] <= 0.0) throw std::invalid_argument("KernelSpec: bandwidths must be positive");
    if (etas[i] < 0.0) throw std::invalid_argument("KernelSpec: kernel weights must be nonnegative");
    any = any || etas[i] > 0.0;
  }
  if (!any) throw std::invalid_argument("KernelSpec: at least one kernel weight must be positive");
}

Quaternion Quaternion::normalized() const {
  double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (n < kNormFloor) n = kNormFloor;
  Quaternion q{w / n, x / n, y / n, z / n};
  if (q.w < 0.0) {
    q.w = -q.w;
    q.x = -q.x;
    q.y = -q.y;
    q.z = -q.z;
  }
  return q;
}

Quaternion Quaternion::about_z(double radians) {
  return Quaternion{std::cos(radians / 2.0), 0.0, 0.0, std::sin(radians / 2.0)}.normalized();
}

Var task_nll(Var predictions, const Tensor& labels) {
  Graph& g = *predictions.graph;
  const Tensor& p = g.value(predictions);
  if (p.rank() != 2 || !p.same_shape(labels))
    throw std::invalid_argument("task_nll: predictions " + shape_str(p.shape) + " vs labels " +
                                shape_str(labels.shape));
  int n = p.shape[0];
  Var y = g.constant(labels);
  Var ll = mul(y, dsn::log(clamp_min(predictions, kLogFloor)));
  return mul_scalar(sum(ll), -1.0 / static_cast<double>(n));
}

Var si_mse(Var x, Var x_hat) {
  Graph& g = *x.graph;
  const Tensor& a = g.value(x);
  const Tensor& b = g.value(x_hat);
  if (!a.same_shape(b)) throw std::invalid_argument("si_mse: shapes " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Var d = flatten_per_sample(sub(x, x_hat));
  int k = x.graph->value(d).shape[1];
  Var quad = mul_scalar(sum_axis(square(d), 1), 1.0 / k);
  Var lin = mul_scalar(square(sum_axis(d, 1)), 1.0 / (static_cast<double>(k) * k));
  return mean(sub(quad, lin));
}

Var plain_mse(Var x, Var x_hat) {
  Graph& g = *x.graph;
  const Tensor& a = g.value(x);
  const Tensor& b = g.value(x_hat);
  if (!a.same_shape(b)) throw std::invalid_argument("plain_mse: shapes " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Var d = flatten_per_sample(sub(x, x_hat));
  int k = x.graph->value(d).shape[1];
  return mean(mul_scalar(sum_axis(square(d), 1), 1.0 / k));
}

Var reconstruction_loss(Var x_src, Var xhat_src, Var x_tgt, Var xhat_tgt) {
  return add(si_mse(x_src, xhat_src), si_mse(x_tgt, xhat_tgt));
}

Var subspace_overlap(Var hc, Var hp, bool normalize) {
  const Tensor& a = hc.graph->value(hc);
  const Tensor& b = hp.graph->value(hp);
  if (a.rank() != 2 || b.rank() != 2 || a.shape[0] != b.shape[0])
    throw std::invalid_argument("difference_loss: row counts must match, got " + shape_str(a.shape) + " vs " +
                                shape_str(b.shape));
  Var c = normalize ? normalize_rows(hc) : hc;
  Var p = normalize ? normalize_rows(hp) : hp;
  // The raw form is the plain squared Frobenius norm. The normalized training
  // form averages over the overlap-matrix entries as well; the summed norm
  // grows like batch^2 and at weight 0.05 it overwhelms every other term.
  if (!normalize) return sum(square(matmul(transpose(c), p)));
  return mean(square(matmul(transpose(c), p)));
}

Var difference_loss(Var hc_s, Var hp_s, Var hc_t, Var hp_t, bool normalize_rows) {
  return add(subspace_overlap(hc_s, hp_s, normalize_rows), subspace_overlap(hc_t, hp_t, normalize_rows));
}

Var dann_domain_loss(Var dhat, const Tensor& domain_labels) {
  Graph& g = *dhat.graph;
  const Tensor& p = g.value(dhat);
  int64_t m = p.size();
  if (m != domain_labels.size())
    throw std::invalid_argument("dann_domain_loss: predictions " + shape_str(p.shape) + " vs labels " +
                                shape_str(domain_labels.shape));
  for (double d : domain_labels.data)
    if (d != 0.0 && d != 1.0) throw std::invalid_argument("dann_domain_loss: domain labels must be 0 or 1");

  Var flat = reshape(dhat, {static_cast<int>(m)});
  Tensor d = domain_labels;
  d.shape = {static_cast<int>(m)};
  Var dv = g.constant(d);
  Var pos = mul(dv, dsn::log(clamp_min(flat, kLogFloor)));
  Var negp = mul(add_scalar(neg(dv), 1.0), dsn::log(clamp_min(add_scalar(neg(flat), 1.0), kLogFloor)));
  return mul_scalar(sum(add(pos, negp)), -1.0 / static_cast<double>(m));
}

Var mmd_loss(Var h_src, Var h_tgt, const KernelSpec& kernel) {
  kernel.validate();
  Graph& g = *h_src.graph;
  const Tensor& a = g.value(h_src);
  const Tensor& b = g.value(h_tgt);
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[1])
    throw std::invalid_argument("mmd_loss: feature widths differ, " + shape_str(a.shape) + " vs " + shape_str(b.shape));

  auto kernel_mean = [&](Var dist) {
    Var acc;
    for (size_t n = 0; n < kernel.sigmas.size(); ++n) {
      if (kernel.etas[n] == 0.0) continue;
      Var term = mul_scalar(dsn::exp(mul_scalar(dist, -0.5 / kernel.sigmas[n])), kernel.etas[n]);
      acc = acc.valid() ? add(acc, term) : term;
    }
    return mean(acc);
  };

  Var ss = kernel_mean(pairwise_sqdist(h_src, h_src));
  Var st = kernel_mean(pairwise_sqdist(h_src, h_tgt));
  Var tt = kernel_mean(pairwise_sqdist(h_tgt, h_tgt));
  return add(sub(ss, mul_scalar(st, 2.0)), tt);
}

Var correg_loss(Var h_src, Var h_tgt, bool normalize, bool scale_by_n) {
  Graph& g = *h_src.graph;
  const Tensor& a = g.value(h_src);
  const Tensor& b = g.value(h_tgt);
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[1])
    throw std::invalid_argument("correg_loss: feature widths differ, " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  const int ns = a.shape[0], nt = b.shape[0];
  Var hs = normalize ? normalize_rows(h_src) : h_src;
  Var ht = normalize ? normalize_rows(h_tgt) : h_tgt;
  Var gs = matmul(transpose(hs), hs);
  Var gt = matmul(transpose(ht), ht);
  if (scale_by_n) {
    gs = mul_scalar(gs, 1.0 / ns);
    gt = mul_scalar(gt, 1.0 / nt);
  }
  return sum(square(sub(gs, gt)));
}

Var quat_normalize_rows(Var q) {
  Graph& g = *q.graph;
  const Tensor& t = g.value(q);
  if (t.rank() != 2 || t.shape[1] != 4)
    throw std::invalid_argument("quat_normalize_rows: expected [N,4], got " + shape_str(t.shape));
  Var ss = sum_axis(square(q), 1);
  Var norm = dsn::sqrt(clamp_min(ss, kNormFloor * kNormFloor));
  Var unit = scale_rows(q, recip(norm));

  // Flip rows so w >= 0. The sign is locally constant, so backward just
  // applies the same flip to the upstream gradient.
  const Tensor& uv = g.value(unit);
  int n = uv.shape[0];
  Tensor y = uv;
  auto flips = std::make_shared<std::vector<double>>(static_cast<size_t>(n), 1.0);
  for (int i = 0; i < n; ++i) {
    if (uv.at(i, 0) < 0.0) {
      (*flips)[static_cast<size_t>(i)] = -1.0;
      for (int j = 0; j < 4; ++j) y.at(i, j) = -y.at(i, j);
    }
  }
  int iu = unit.id;
  int out = static_cast<int>(g.node_count());
  g.push("quat_sign_fix", {iu}, std::move(y), [iu, out, n, flips](Graph& gg) {
    const Tensor& go = gg.node_grad(out);
    Tensor& gu = gg.grad_buf(iu);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 4; ++j) gu.at(i, j) += go.at(i, j) * (*flips)[static_cast<size_t>(i)];
  });
  return Var{&g, out};
}

Var pose_log_term(Var qhat_raw, const Tensor& q, double xi) {
  Graph& g = *qhat_raw.graph;
  const Tensor& t = g.value(qhat_raw);
  if (t.rank() != 2 || t.shape[1] != 4 || !t.same_shape(q))
    throw std::invalid_argument("pose_log_term: predictions " + shape_str(t.shape) + " vs labels " + shape_str(q.shape));
  for (int i = 0; i < t.shape[0]; ++i) {
    double ss = 0.0;
    for (int j = 0; j < 4; ++j) ss += t.at(i, j) * t.at(i, j);
    if (ss == 0.0) throw std::invalid_argument("pose_log_term: zero-norm predicted quaternion in row " + std::to_string(i));
  }
  Var qhat = quat_normalize_rows(qhat_raw);
  Var dots = sum_axis(mul(qhat, g.constant(q)), 1);
  Var gap = clamp_min(add_scalar(neg(dsn::abs(dots)), 1.0), kPoseFloor);
  return mul_scalar(mean(dsn::log(gap)), xi);
}

Var pose_task_loss(Var predictions, const Tensor& labels, Var qhat_raw, const Tensor& q, double xi) {
  return add(task_nll(predictions, labels), pose_log_term(qhat_raw, q, xi));
}

double mean_angle_error_deg(const Tensor& q, const Tensor& q_hat) {
  if (q.rank() != 2 || q.shape[1] != 4 || !q.same_shape(q_hat))
    throw std::invalid_argument("mean_angle_error: expected matching [N,4] tensors");
  int n = q.shape[0];
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double dot = 0.0;
    for (int j = 0; j < 4; ++j) dot += q.at(i, j) * q_hat.at(i, j);
    double c = std::min(std::fabs(dot), 1.0);
    acc += 2.0 * std::acos(c);
  }
  return acc / n * (180.0 / kPi);
}

Var total_loss(const LossParts& parts, const LossWeights& weights, int64_t step) {
  if (!parts.task.valid()) throw std::invalid_argument("total_loss: task part is required");
  Var total = parts.task;
  if (step < weights.warmup_steps) return total;
  if (parts.recon.valid() && weights.alpha > 0.0) total = add(total, mul_scalar(parts.recon, weights.alpha));
  if (parts.diff.valid() && weights.beta > 0.0) total = add(total, mul_scalar(parts.diff, weights.beta));
  if (parts.sim.valid() && weights.gamma > 0.0) total = add(total, mul_scalar(parts.sim, weights.gamma));
  return total;
}

}  // namespace dsn
