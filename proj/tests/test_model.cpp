#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "dsn/gradcheck.hpp"
#include "dsn/model.hpp"
#include "dsn/rng.hpp"

using namespace dsn;

namespace {

Tensor rand_images(SplitMix64& rng, int n, const Shape& sample) {
  Shape s = sample;
  s.insert(s.begin(), n);
  Tensor t(s);
  for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

Tensor onehot(int n, int c, int fill_class) {
  Tensor t({n, c}, 0.0);
  for (int i = 0; i < n; ++i) t.at(i, fill_class) = 1.0;
  return t;
}

void zero_group(std::vector<Param>& group) {
  for (Param& p : group)
    for (double& v : p.value.data) v = 0.0;
}

}  // namespace

TEST_CASE("desk topology shapes") {
  DsnModel m = build_desk_topology(Scenario::glyph16, Variant::dsn, Similarity::dann, 1);
  CHECK(m.input_shape == Shape{16, 16, 3});
  CHECK(m.code_width == 64);
  CHECK(stack_output_shape(m.shared_encoder, m.input_shape) == stack_output_shape(m.private_encoder, m.input_shape));
  CHECK(stack_output_shape(m.decoder, {m.code_width}) == m.input_shape);

  SplitMix64 rng(2);
  Tensor xs = rand_images(rng, 3, m.input_shape);
  Graph g;
  BoundParams bp = bind_params(g, m.params);
  ForwardOutputs fo = forward(g, m, bp, xs, &xs);
  CHECK(g.value(fo.xhat_s).shape == Shape{3, 16, 16, 3});
  CHECK(g.value(fo.yhat_s).shape == Shape{3, 10});
  CHECK(g.value(fo.dhat).shape == Shape{6, 1});

  CHECK_THROWS_AS((void)build_desk_topology(static_cast<Scenario>(99), Variant::dsn, Similarity::dann, 1),
                  std::invalid_argument);
}

TEST_CASE("zeroed private weights collapse the reconstruction to the shared path") {
  DsnModel m = build_desk_topology(Scenario::glyph16, Variant::dsn, Similarity::mmd, 3);
  zero_group(m.params.theta_p_s);
  zero_group(m.params.theta_p_t);
  SplitMix64 rng(4);
  Tensor x = rand_images(rng, 2, m.input_shape);

  Tensor combined = decode_partial(m, x, DomainSide::source, DecodeMode::combined);
  Tensor shared = decode_partial(m, x, DomainSide::source, DecodeMode::shared_only);
  CHECK(combined.data == shared.data);  // exact: private code is the zero vector
  CHECK(combined.shape == Shape{2, 16, 16, 3});
  Tensor priv = decode_partial(m, x, DomainSide::target, DecodeMode::private_only);
  CHECK(priv.shape == Shape{2, 16, 16, 3});
}

TEST_CASE("class predictions ignore the private encoders") {
  DsnModel m = build_desk_topology(Scenario::glyph16, Variant::dsn, Similarity::dann, 5);
  SplitMix64 rng(6);
  Tensor x = rand_images(rng, 4, m.input_shape);

  Graph g1;
  Tensor y1 = g1.value(forward(g1, m, bind_params(g1, m.params), x, &x).yhat_s);

  for (Param& p : m.params.theta_p_s)
    for (double& v : p.value.data) v += 0.37;
  for (Param& p : m.params.theta_p_t)
    for (double& v : p.value.data) v -= 0.11;

  Graph g2;
  Tensor y2 = g2.value(forward(g2, m, bind_params(g2, m.params), x, &x).yhat_s);
  CHECK(y1.data == y2.data);
}

TEST_CASE("mmd and correg variants never touch a domain classifier") {
  for (Similarity sim : {Similarity::mmd, Similarity::correg}) {
    DsnModel m = build_desk_topology(Scenario::glyph16, Variant::dsn, sim, 7);
    CHECK(m.params.theta_z.empty());
    SplitMix64 rng(8);
    Tensor x = rand_images(rng, 2, m.input_shape);
    Graph g;
    ForwardOutputs fo = forward(g, m, bind_params(g, m.params), x, &x);
    CHECK_FALSE(fo.dhat.valid());
    CHECK(fo.hc_t.valid());
  }
}

TEST_CASE("baseline variants carry only the parts they train") {
  for (Variant v : {Variant::source_only, Variant::target_only}) {
    DsnModel m = build_desk_topology(Scenario::glyph16, v, Similarity::none, 9);
    CHECK(m.params.theta_p_s.empty());
    CHECK(m.params.theta_p_t.empty());
    CHECK(m.params.theta_d.empty());
    CHECK(m.params.theta_z.empty());
    CHECK_FALSE(m.params.theta_c.empty());
    CHECK_FALSE(m.params.theta_g.empty());
    SplitMix64 rng(10);
    Tensor x = rand_images(rng, 2, m.input_shape);
    Graph g;
    ForwardOutputs fo = forward(g, m, bind_params(g, m.params), x, nullptr);
    CHECK(fo.yhat_s.valid());
    CHECK_FALSE(fo.hp_s.valid());
    CHECK_FALSE(fo.xhat_s.valid());
    CHECK_FALSE(fo.dhat.valid());
  }
  DsnModel dann = build_desk_topology(Scenario::glyph16, Variant::dann_only, Similarity::none, 9);
  CHECK(dann.params.theta_p_s.empty());
  CHECK(dann.params.theta_d.empty());
  CHECK_FALSE(dann.params.theta_z.empty());
}

TEST_CASE("theta_z gradient of the total equals the gradient of the weighted domain loss") {
  DsnModel m = build_desk_topology(Scenario::glyph16, Variant::dsn, Similarity::dann, 12);
  SplitMix64 rng(13);
  Tensor xs = rand_images(rng, 3, m.input_shape);
  Tensor xt = rand_images(rng, 3, m.input_shape);
  Tensor y = onehot(3, 10, 4);
  Tensor dlab = Tensor::of({6}, {0, 0, 0, 1, 1, 1});
  const double gamma = 0.25;

  auto z_grads = [&](bool full) {
    Graph g;
    BoundParams bp = bind_params(g, m.params);
    ForwardOutputs fo = forward(g, m, bp, xs, &xt);
    Var sim = dann_domain_loss(fo.dhat, dlab);
    Var loss;
    if (full) {
      LossParts parts;
      parts.task = task_nll(fo.yhat_s, y);
      Var xsv = g.constant(xs), xtv = g.constant(xt);
      parts.recon = reconstruction_loss(xsv, fo.xhat_s, xtv, fo.xhat_t);
      parts.diff = difference_loss(fo.hc_s, fo.hp_s, fo.hc_t, fo.hp_t);
      parts.sim = sim;
      loss = total_loss(parts, {0.05, 0.05, gamma, 0.0, 0}, 100);
    } else {
      loss = mul_scalar(sim, gamma);
    }
    GradientMap gm = g.backward(loss);
    std::vector<Tensor> out;
    for (const Var& v : bp.z) out.push_back(gm.at(v));
    return out;
  };

  auto full = z_grads(true);
  auto sim_only = z_grads(false);
  REQUIRE(full.size() == sim_only.size());
  for (size_t i = 0; i < full.size(); ++i) CHECK(full[i].data == sim_only[i].data);
}

TEST_CASE("pose head emits positive unit quaternions") {
  DsnModel m = build_desk_topology(Scenario::pose_glyph, Variant::dsn, Similarity::dann, 14);
  CHECK(m.num_classes == 5);
  SplitMix64 rng(15);
  Tensor x = rand_images(rng, 5, m.input_shape);
  Predictions pred = predict(m, x);
  REQUIRE(pred.quats.shape == Shape{5, 4});
  for (int i = 0; i < 5; ++i) {
    double ss = 0.0;
    for (int j = 0; j < 4; ++j) ss += pred.quats.at(i, j) * pred.quats.at(i, j);
    CHECK(std::fabs(ss - 1.0) < 1e-9);
    CHECK(pred.quats.at(i, 0) >= 0.0);
  }
}

TEST_CASE("pose model end to end finite differences") {
  DsnModel m = build_desk_topology(Scenario::pose_glyph, Variant::dsn, Similarity::mmd, 16);
  SplitMix64 rng(17);
  Tensor xs = rand_images(rng, 2, m.input_shape);
  Tensor xt = rand_images(rng, 2, m.input_shape);
  Tensor y = onehot(2, 5, 1);
  Tensor q({2, 4});
  for (int i = 0; i < 2; ++i) {
    Quaternion r = Quaternion::about_z(rng.uniform(-2.0, 2.0));
    q.at(i, 0) = r.w;
    q.at(i, 1) = r.x;
    q.at(i, 2) = r.y;
    q.at(i, 3) = r.z;
  }

  std::vector<Tensor> leaves;
  std::vector<std::string> names;
  for (const Param* p : m.params.all()) {
    leaves.push_back(p->value);
    names.push_back(p->name);
  }
  LossBuilder build = [&](Graph& g, const std::vector<Var>& vars) {
    BoundParams bp = bind_from_vars(m, vars);
    ForwardOutputs fo = forward(g, m, bp, xs, &xt);
    LossParts parts;
    parts.task = pose_task_loss(fo.yhat_s, y, fo.qhat_s, q, 0.125);
    Var xsv = g.constant(xs), xtv = g.constant(xt);
    parts.recon = reconstruction_loss(xsv, fo.xhat_s, xtv, fo.xhat_t);
    parts.diff = difference_loss(fo.hc_s, fo.hp_s, fo.hc_t, fo.hp_t);
    parts.sim = mmd_loss(fo.hc_s, fo.hc_t, KernelSpec::default_multi_rbf());
    return total_loss(parts, {0.05, 0.05, 0.25, 0.125, 0}, 10);
  };
  std::vector<std::vector<int64_t>> probe(leaves.size());
  for (size_t i = 0; i < leaves.size(); ++i)
    for (int k = 0; k < 3; ++k)
      probe[i].push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(leaves[i].size()))));
  FdReport rep = finite_difference_check(build, leaves, names, 1e-5, &probe);
  INFO(rep.describe());
  CHECK(rep.max_rel_err < 1e-3);
}
