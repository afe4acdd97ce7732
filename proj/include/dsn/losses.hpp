#pragma once

#include <vector>

#include "dsn/graph.hpp"

namespace dsn {

// Linear combination of RBF kernels, k(x,y) = sum_n eta_n * exp(-|x-y|^2 / (2 sigma_n)).
// sigma_n acts as a variance-like divisor.
struct KernelSpec {
  std::vector<double> sigmas;
  std::vector<double> etas;

  // 19 bandwidths spanning 1e-6 .. 1e6 with equal unit weights.
  static KernelSpec default_multi_rbf();
  void validate() const;
};

struct LossWeights {
  double alpha = 0.05;  // reconstruction
  double beta = 0.05;   // difference
  double gamma = 0.25;  // similarity
  double xi = 0.125;    // pose
  int64_t warmup_steps = 500;
};

struct Quaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;
  Quaternion normalized() const;
  static Quaternion about_z(double radians);
};

// Mean over the batch of -y . log(yhat), logs clamped at 1e-12.
// predictions: [N,C] softmax rows; labels: [N,C] one-hot constants.
Var task_nll(Var predictions, const Tensor& labels);

// Per-sample (1/k)|x-xhat|^2 - (1/k^2)((x-xhat).1)^2 with k the per-sample
// element count, averaged over the leading batch axis. Rank-1 inputs are one
// sample.
Var si_mse(Var x, Var x_hat);

// Plain per-sample MSE with the same batching convention (ablation variant).
Var plain_mse(Var x, Var x_hat);

Var reconstruction_loss(Var x_src, Var xhat_src, Var x_tgt, Var xhat_tgt);

// |Hc^T Hp|_F^2 summed over both domains. Rows are L2-normalized first unless
// normalize_rows is false (norm floor 1e-8; zero rows stay zero).
Var difference_loss(Var hc_s, Var hp_s, Var hc_t, Var hp_t, bool normalize_rows = true);
Var subspace_overlap(Var hc, Var hp, bool normalize_rows = true);  // single domain

// Mean negative binomial log-likelihood over M = Ns + Nt domain predictions in
// (0,1); labels in {0,1}. The adversarial direction comes from the gradient
// reversal in front of the domain classifier, not from this loss.
Var dann_domain_loss(Var dhat, const Tensor& domain_labels);

// Biased squared-population MMD between the two row sets.
Var mmd_loss(Var h_src, Var h_tgt, const KernelSpec& kernel);

// |Gram_s - Gram_t|_F^2 on the d x d second-moment matrices. With scale_by_n
// each Gram is divided by its row count.
Var correg_loss(Var h_src, Var h_tgt, bool normalize_rows = true, bool scale_by_n = true);

// L2-normalize quaternion rows (floor 1e-8) and flip rows so w >= 0.
Var quat_normalize_rows(Var q);

// xi * mean(log(max(1 - |q . qhat|, 1e-6))); qhat rows are normalized inside.
Var pose_log_term(Var qhat_raw, const Tensor& q, double xi);

// task_nll plus the pose term.
Var pose_task_loss(Var predictions, const Tensor& labels, Var qhat_raw, const Tensor& q, double xi);

// Mean of 2*acos(clamp(|q . qhat|, 0, 1)) in degrees. Not differentiated.
double mean_angle_error_deg(const Tensor& q, const Tensor& q_hat);

// L_task + alpha L_recon + beta L_diff + gamma L_sim; the three adaptation
// weights are treated as zero while step < warmup_steps, and absent or
// zero-weighted parts are skipped so the gated total is bitwise the task loss.
struct LossParts {
  Var task;
  Var recon;
  Var diff;
  Var sim;
};
Var total_loss(const LossParts& parts, const LossWeights& weights, int64_t step);

}  // namespace dsn
