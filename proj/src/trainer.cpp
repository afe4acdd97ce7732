#include "dsn/trainer.hpp"

#include <cmath>
#include <stdexcept>

namespace dsn {

double lr_schedule(double initial_lr, int64_t step, const DecayRule& rule) {
  if (rule.interval <= 0) throw std::invalid_argument("lr_schedule: interval must be positive");
  return initial_lr * std::pow(rule.factor, static_cast<double>(step / rule.interval));
}

OptimizerState make_optimizer(const ParameterSet& params, double lr, double momentum, DecayRule decay) {
  OptimizerState st;
  st.initial_lr = lr;
  st.momentum = momentum;
  st.decay = decay;
  for (const Param* p : params.all()) st.velocity.emplace_back(p->value.shape, 0.0);
  return st;
}

void sgd_momentum_step(std::vector<Param*> params, const std::vector<const Tensor*>& grads, OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.velocity.size())
    throw std::invalid_argument("sgd_momentum_step: parameter, gradient and velocity counts differ");
  double lr = lr_schedule(state.initial_lr, state.step, state.decay);
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i]->value;
    const Tensor& g = *grads[i];
    Tensor& v = state.velocity[i];
    if (!p.same_shape(g))
      throw std::invalid_argument("sgd_momentum_step: gradient shape " + shape_str(g.shape) + " does not match " +
                                  params[i]->name + " " + shape_str(p.shape));
    for (int64_t k = 0; k < p.size(); ++k) {
      v[k] = state.momentum * v[k] + g[k];
      p[k] -= lr * v[k];
    }
  }
  ++state.step;
}

EvalResult evaluate(DsnModel& model, const Dataset& dataset) {
  constexpr int kChunk = 200;
  int n = dataset.size();
  int correct = 0;
  double angle_sum = 0.0;
  bool pose = model.has_pose() && !dataset.samples.empty() && dataset.samples[0].has_pose;
  for (int start = 0; start < n; start += kChunk) {
    int end = std::min(n, start + kChunk);
    std::vector<int> idx;
    for (int i = start; i < end; ++i) idx.push_back(i);
    Predictions pred = predict(model, dataset.images_of(idx));
    for (int i = start; i < end; ++i)
      if (pred.classes[static_cast<size_t>(i - start)] == dataset.samples[static_cast<size_t>(i)].class_label) ++correct;
    if (pose) angle_sum += mean_angle_error_deg(dataset.quats_of(idx), pred.quats) * static_cast<double>(end - start);
  }
  EvalResult r;
  r.accuracy = static_cast<double>(correct) / n;
  if (pose) r.angle_err = angle_sum / n;
  return r;
}

TrainResult train(DsnModel& model, const DomainData& data, const TrainConfig& cfg,
                  const std::function<void(const TrainRecord&)>& on_record) {
  const bool target_supervised = model.variant == Variant::target_only;
  const Dataset& labeled = target_supervised ? data.tgt_train : data.src_train;
  BatchIterator it(&labeled, &data.tgt_train, cfg.batch_size, cfg.seed);

  OptimizerState opt = make_optimizer(model.params, cfg.lr, cfg.momentum, cfg.decay);
  TrainResult result;
  std::optional<TrainRecord> last_finite;

  auto run_eval = [&](TrainRecord& rec) {
    EvalResult src = evaluate(model, target_supervised ? data.tgt_eval : data.src_eval);
    EvalResult tgt = evaluate(model, data.tgt_eval);
    rec.src_acc = src.accuracy;
    rec.tgt_acc = tgt.accuracy;
    rec.angle_err = tgt.angle_err;
    result.final_src_acc = src.accuracy;
    result.final_tgt_acc = tgt.accuracy;
    result.final_angle_err = tgt.angle_err;
  };

  for (int64_t step = 0; step < cfg.steps; ++step) {
    DomainBatch batch = it.next();

    Graph g;
    BoundParams bp = bind_params(g, model.params);
    const bool wants_target = model.has_private() || model.similarity != Similarity::none;
    ForwardOutputs fo = forward(g, model, bp, batch.src_images, wants_target ? &batch.tgt_images : nullptr);

    LossParts parts;
    if (model.has_pose() && batch.has_quats)
      parts.task = pose_task_loss(fo.yhat_s, batch.src_labels, fo.qhat_s, batch.src_quats, cfg.weights.xi);
    else
      parts.task = task_nll(fo.yhat_s, batch.src_labels);

    if (model.has_decoder()) {
      Var xs = g.constant(batch.src_images);
      Var xt = g.constant(batch.tgt_images);
      parts.recon = cfg.recon == ReconKind::si_mse
                        ? reconstruction_loss(xs, fo.xhat_s, xt, fo.xhat_t)
                        : add(plain_mse(xs, fo.xhat_s), plain_mse(xt, fo.xhat_t));
    }
    if (model.has_private()) parts.diff = difference_loss(fo.hc_s, fo.hp_s, fo.hc_t, fo.hp_t);
    switch (model.similarity) {
      case Similarity::dann: {
        const Tensor& ds = g.value(fo.dhat);
        Tensor labels({ds.shape[0]}, 0.0);
        for (int i = cfg.batch_size; i < ds.shape[0]; ++i) labels[i] = 1.0;
        parts.sim = dann_domain_loss(fo.dhat, labels);
        break;
      }
      case Similarity::mmd:
        parts.sim = mmd_loss(fo.hc_s, fo.hc_t, cfg.kernel);
        break;
      case Similarity::correg:
        parts.sim = correg_loss(fo.hc_s, fo.hc_t);
        break;
      case Similarity::none:
        break;
    }

    Var total = total_loss(parts, cfg.weights, step);

    TrainRecord rec;
    rec.step = step;
    rec.lr = lr_schedule(cfg.lr, step, cfg.decay);
    rec.l_total = g.value(total).item();
    rec.l_task = g.value(parts.task).item();
    if (parts.recon.valid()) rec.l_recon = g.value(parts.recon).item();
    if (parts.diff.valid()) rec.l_diff = g.value(parts.diff).item();
    if (parts.sim.valid()) rec.l_sim = g.value(parts.sim).item();

    if (!std::isfinite(rec.l_total)) throw NumericalFailure(step, last_finite);

    GradientMap grads = g.backward(total);
    std::vector<Param*> ps;
    std::vector<const Tensor*> gs;
    for (auto& [param, var] : bp.flat) {
      ps.push_back(param);
      gs.push_back(&grads.at(var));
    }
    sgd_momentum_step(ps, gs, opt);

    if ((step + 1) % cfg.eval_interval == 0 || step + 1 == cfg.steps) run_eval(rec);

    last_finite = rec;
    result.records.push_back(rec);
    if (on_record) on_record(rec);
  }
  return result;
}

}  // namespace dsn
