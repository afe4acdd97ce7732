#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsn/data.hpp"
#include "dsn/model.hpp"

namespace dsn {

struct DecayRule {
  double factor = 0.9;
  int64_t interval = 1000;
};

// initial_lr * factor^floor(step / interval)
double lr_schedule(double initial_lr, int64_t step, const DecayRule& rule);

struct OptimizerState {
  double initial_lr = 0.01;
  double momentum = 0.9;
  DecayRule decay;
  std::vector<Tensor> velocity;  // aligned with ParameterSet::all()
  int64_t step = 0;
};

OptimizerState make_optimizer(const ParameterSet& params, double lr, double momentum, DecayRule decay);

// Classical momentum: v <- mu v + g; p <- p - lr v.
void sgd_momentum_step(std::vector<Param*> params, const std::vector<const Tensor*>& grads, OptimizerState& state);

enum class ReconKind { si_mse, mse };

struct TrainConfig {
  int64_t steps = 2000;
  int batch_size = 32;
  double lr = 0.01;
  double momentum = 0.9;
  DecayRule decay;
  LossWeights weights;
  ReconKind recon = ReconKind::si_mse;
  int64_t eval_interval = 250;
  uint64_t seed = 1;
  KernelSpec kernel = KernelSpec::default_multi_rbf();
};

struct TrainRecord {
  int64_t step = 0;
  double lr = 0.0;
  double l_total = 0.0;
  double l_task = 0.0;
  std::optional<double> l_recon, l_diff, l_sim;
  std::optional<double> src_acc, tgt_acc, angle_err;
};

// Thrown when a loss goes non-finite; carries the failing step and the last
// finite record for diagnostics.
struct NumericalFailure : std::runtime_error {
  NumericalFailure(int64_t step, std::optional<TrainRecord> last)
      : std::runtime_error("non-finite loss at step " + std::to_string(step)), step(step), last_finite(std::move(last)) {}
  int64_t step;
  std::optional<TrainRecord> last_finite;
};

struct EvalResult {
  double accuracy = 0.0;
  std::optional<double> angle_err;
};

// Accuracy of argmax predictions against the dataset's labels; pose scenarios
// also report the mean rotation angle error in degrees.
EvalResult evaluate(DsnModel& model, const Dataset& dataset);

struct TrainResult {
  std::vector<TrainRecord> records;
  double final_src_acc = 0.0;
  double final_tgt_acc = 0.0;
  std::optional<double> final_angle_err;
};

// Runs the full regime: per-step domain batches, warmup-gated total loss,
// backprop, momentum updates, periodic evaluation on the held-out sets.
// target_only trains its task head on the labeled target training set.
TrainResult train(DsnModel& model, const DomainData& data, const TrainConfig& cfg,
                  const std::function<void(const TrainRecord&)>& on_record = nullptr);

}  // namespace dsn
