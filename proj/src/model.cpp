#include "dsn/model.hpp"

#include <stdexcept>

namespace dsn {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::glyph16: return "glyph16";
    case Scenario::blobs2d: return "blobs2d";
    case Scenario::pose_glyph: return "pose_glyph";
  }
  return "?";
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::dsn: return "dsn";
    case Variant::source_only: return "source_only";
    case Variant::target_only: return "target_only";
    case Variant::dann_only: return "dann_only";
    case Variant::mmd_only: return "mmd_only";
    case Variant::correg_only: return "correg_only";
  }
  return "?";
}

std::string to_string(Similarity s) {
  switch (s) {
    case Similarity::none: return "none";
    case Similarity::dann: return "dann";
    case Similarity::mmd: return "mmd";
    case Similarity::correg: return "correg";
  }
  return "?";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "glyph16") return Scenario::glyph16;
  if (s == "blobs2d") return Scenario::blobs2d;
  if (s == "pose_glyph") return Scenario::pose_glyph;
  throw std::invalid_argument("unknown scenario '" + s + "'");
}

Variant variant_from_string(const std::string& s) {
  if (s == "dsn") return Variant::dsn;
  if (s == "source_only") return Variant::source_only;
  if (s == "target_only") return Variant::target_only;
  if (s == "dann_only") return Variant::dann_only;
  if (s == "mmd_only") return Variant::mmd_only;
  if (s == "correg_only") return Variant::correg_only;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

Similarity similarity_from_string(const std::string& s) {
  if (s == "none") return Similarity::none;
  if (s == "dann") return Similarity::dann;
  if (s == "mmd") return Similarity::mmd;
  if (s == "correg") return Similarity::correg;
  throw std::invalid_argument("unknown similarity '" + s + "'");
}

Similarity effective_similarity(Variant v, Similarity requested) {
  switch (v) {
    case Variant::dsn: return requested;
    case Variant::dann_only: return Similarity::dann;
    case Variant::mmd_only: return Similarity::mmd;
    case Variant::correg_only: return Similarity::correg;
    default: return Similarity::none;
  }
}

namespace {

void build_stacks(DsnModel& m) {
  using L = LayerSpec;
  if (m.scenario != Scenario::glyph16 && m.scenario != Scenario::blobs2d && m.scenario != Scenario::pose_glyph)
    throw std::invalid_argument("build_desk_topology: unknown scenario");
  if (m.scenario == Scenario::blobs2d) {
    m.input_shape = {2};
    m.num_classes = 3;
    m.code_width = 8;
    m.shared_encoder = {L::dense(16), L::relu(), L::dense(8), L::relu()};
    m.private_encoder = m.shared_encoder;
    m.decoder = {L::dense(16), L::relu(), L::dense(2)};
    m.class_head = {L::dense(3), L::softmax()};
    m.domain_classifier = {L::grl(), L::dense(8), L::relu(), L::dense(1), L::sigmoid()};
    return;
  }
  // glyph16 and pose_glyph share the 16x16x3 topology.
  m.input_shape = {16, 16, 3};
  m.num_classes = m.scenario == Scenario::pose_glyph ? 5 : 10;
  m.code_width = 64;
  m.shared_encoder = {L::conv(3, 3, 3, 8),  L::relu(), L::maxpool(), L::conv(3, 3, 8, 16),
                      L::relu(), L::maxpool(), L::dense(64), L::relu()};
  m.private_encoder = {L::conv(3, 3, 3, 8), L::relu(), L::maxpool(), L::dense(64), L::relu()};
  m.decoder = {L::dense(4 * 4 * 16), L::relu(), L::reshape({4, 4, 16}),
               L::conv(3, 3, 16, 16), L::relu(), L::upsample(),
               L::conv(3, 3, 16, 16), L::relu(), L::upsample(),
               L::conv(3, 3, 16, 3)};
  m.class_head = {L::dense(m.num_classes), L::softmax()};
  if (m.scenario == Scenario::pose_glyph) m.pose_head = {L::dense(4), L::quat_normalize()};
  m.domain_classifier = {L::grl(), L::dense(32), L::relu(), L::dense(1), L::sigmoid()};
}

}  // namespace

DsnModel build_desk_topology(Scenario scenario, Variant variant, Similarity similarity, uint64_t seed) {
  DsnModel m;
  m.scenario = scenario;
  m.variant = variant;
  m.similarity = effective_similarity(variant, similarity);
  build_stacks(m);

  SplitMix64 rng(seed);
  SplitMix64 rc = rng.fork(1), rps = rng.fork(2), rpt = rng.fork(3), rd = rng.fork(4), rg = rng.fork(5),
             rz = rng.fork(6);

  Shape code = init_stack(m.shared_encoder, m.input_shape, "ec/", rc, m.params.theta_c);
  if (code != Shape{m.code_width}) throw std::logic_error("shared encoder code width mismatch");

  if (m.has_private()) {
    Shape pcode_s = init_stack(m.private_encoder, m.input_shape, "eps/", rps, m.params.theta_p_s);
    Shape pcode_t = init_stack(m.private_encoder, m.input_shape, "ept/", rpt, m.params.theta_p_t);
    if (pcode_s != code || pcode_t != code)
      throw std::logic_error("private encoder code width must match the shared encoder");
  }
  if (m.has_decoder()) {
    Shape rec = init_stack(m.decoder, code, "dec/", rd, m.params.theta_d);
    if (rec != m.input_shape) throw std::logic_error("decoder output shape must equal the input shape");
  }
  init_stack(m.class_head, code, "g/", rg, m.params.theta_g);
  if (m.has_pose()) init_stack(m.pose_head, code, "gq/", rg, m.params.theta_g);
  if (m.has_domain_classifier()) init_stack(m.domain_classifier, code, "z/", rz, m.params.theta_z);
  return m;
}

BoundParams bind_params(Graph& g, ParameterSet& ps) {
  BoundParams bp;
  auto bind_group = [&](std::vector<Param>& group, std::vector<Var>& out) {
    for (Param& p : group) {
      Var v = g.leaf(p.value, p.name, true);
      out.push_back(v);
      bp.flat.emplace_back(&p, v);
    }
  };
  bind_group(ps.theta_c, bp.c);
  bind_group(ps.theta_p_s, bp.p_s);
  bind_group(ps.theta_p_t, bp.p_t);
  bind_group(ps.theta_d, bp.d);
  bind_group(ps.theta_g, bp.g);
  bind_group(ps.theta_z, bp.z);
  return bp;
}

BoundParams bind_from_vars(DsnModel& model, const std::vector<Var>& vars) {
  BoundParams bp;
  size_t i = 0;
  auto take = [&](std::vector<Param>& group, std::vector<Var>& out) {
    for (Param& p : group) {
      if (i >= vars.size()) throw std::invalid_argument("bind_from_vars: too few leaves");
      out.push_back(vars[i]);
      bp.flat.emplace_back(&p, vars[i]);
      ++i;
    }
  };
  take(model.params.theta_c, bp.c);
  take(model.params.theta_p_s, bp.p_s);
  take(model.params.theta_p_t, bp.p_t);
  take(model.params.theta_d, bp.d);
  take(model.params.theta_g, bp.g);
  take(model.params.theta_z, bp.z);
  if (i != vars.size()) throw std::invalid_argument("bind_from_vars: too many leaves");
  return bp;
}

namespace {

// The pose head shares theta_g with the class head; its Vars sit after the
// class head's in group order.
std::pair<std::vector<Var>, std::vector<Var>> split_task_params(const DsnModel& m, const std::vector<Var>& g_vars) {
  size_t class_n = 0;
  for (const LayerSpec& l : m.class_head)
    if (l.kind == LayerKind::dense || l.kind == LayerKind::conv2d) class_n += 2;
  std::vector<Var> cls(g_vars.begin(), g_vars.begin() + static_cast<long>(class_n));
  std::vector<Var> pose(g_vars.begin() + static_cast<long>(class_n), g_vars.end());
  return {cls, pose};
}

}  // namespace

ForwardOutputs forward(Graph& g, const DsnModel& model, const BoundParams& bp, const Tensor& labeled_images,
                       const Tensor* target_images) {
  ForwardOutputs fo;
  Var xs = g.constant(labeled_images);
  fo.hc_s = apply_stack(model.shared_encoder, bp.c, xs);

  auto [cls_vars, pose_vars] = split_task_params(model, bp.g);
  fo.yhat_s = apply_stack(model.class_head, cls_vars, fo.hc_s);
  if (model.has_pose()) fo.qhat_s = apply_stack(model.pose_head, pose_vars, fo.hc_s);

  bool needs_target = target_images != nullptr &&
                      (model.has_private() || model.similarity != Similarity::none);
  Var xt;
  if (needs_target) {
    xt = g.constant(*target_images);
    fo.hc_t = apply_stack(model.shared_encoder, bp.c, xt);
  }

  if (model.has_private()) {
    fo.hp_s = apply_stack(model.private_encoder, bp.p_s, xs);
    fo.xhat_s = apply_stack(model.decoder, bp.d, add(fo.hc_s, fo.hp_s));
    if (needs_target) {
      fo.hp_t = apply_stack(model.private_encoder, bp.p_t, xt);
      fo.xhat_t = apply_stack(model.decoder, bp.d, add(fo.hc_t, fo.hp_t));
    }
  }

  if (model.has_domain_classifier() && needs_target) {
    Var ds = apply_stack(model.domain_classifier, bp.z, fo.hc_s);
    Var dt = apply_stack(model.domain_classifier, bp.z, fo.hc_t);
    fo.dhat = concat(ds, dt, 0);
  }
  return fo;
}

Tensor decode_partial(DsnModel& model, const Tensor& images, DomainSide domain, DecodeMode mode) {
  if (!model.has_decoder()) throw std::invalid_argument("decode_partial: this variant has no decoder");
  Graph g;
  BoundParams bp = bind_params(g, model.params);
  Var x = g.constant(images);
  Var code;
  const std::vector<Var>& pvars = domain == DomainSide::source ? bp.p_s : bp.p_t;
  switch (mode) {
    case DecodeMode::shared_only:
      code = apply_stack(model.shared_encoder, bp.c, x);
      break;
    case DecodeMode::private_only:
      code = apply_stack(model.private_encoder, pvars, x);
      break;
    case DecodeMode::combined:
      code = add(apply_stack(model.shared_encoder, bp.c, x), apply_stack(model.private_encoder, pvars, x));
      break;
  }
  Var rec = apply_stack(model.decoder, bp.d, code);
  return g.value(rec);
}

Predictions predict(DsnModel& model, const Tensor& images) {
  Graph g;
  BoundParams bp = bind_params(g, model.params);
  Var x = g.constant(images);
  Var code = apply_stack(model.shared_encoder, bp.c, x);
  auto [cls_vars, pose_vars] = split_task_params(model, bp.g);
  Var probs = apply_stack(model.class_head, cls_vars, code);

  const Tensor& p = g.value(probs);
  Predictions out;
  out.classes.resize(static_cast<size_t>(p.shape[0]));
  for (int i = 0; i < p.shape[0]; ++i) {
    int best = 0;
    for (int c = 1; c < p.shape[1]; ++c)
      if (p.at(i, c) > p.at(i, best)) best = c;
    out.classes[static_cast<size_t>(i)] = best;
  }
  if (model.has_pose()) {
    Var q = apply_stack(model.pose_head, pose_vars, code);
    out.quats = g.value(q);
  }
  return out;
}

}  // namespace dsn
