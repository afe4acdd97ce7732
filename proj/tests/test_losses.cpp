#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "dsn/experiment.hpp"
#include "dsn/losses.hpp"
#include "dsn/rng.hpp"

using namespace dsn;

namespace {

Tensor rand_tensor(SplitMix64& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

double eval1(const std::function<Var(Graph&)>& f) {
  Graph g;
  return g.value(f(g)).item();
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

TEST_CASE("task_nll closed forms") {
  CHECK(eval1([](Graph& g) {
          return task_nll(g.constant(Tensor::of({1, 3}, {0, 1, 0})), Tensor::of({1, 3}, {0, 1, 0}));
        }) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(eval1([](Graph& g) {
          return task_nll(g.constant(Tensor::of({1, 3}, {0.2, 0.3, 0.5})), Tensor::of({1, 3}, {0, 0, 1}));
        }) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(eval1([](Graph& g) {
          return task_nll(g.constant(Tensor({2, 4}, 0.25)), Tensor::of({2, 4}, {1, 0, 0, 0, 0, 0, 1, 0}));
        }) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("si_mse closed forms and shift invariance") {
  Tensor x = Tensor::of({4}, {1, 2, 3, 4});
  Tensor zero({4}, 0.0);
  CHECK(eval1([&](Graph& g) { return si_mse(g.constant(x), g.constant(zero)); }) ==
        doctest::Approx(1.25).epsilon(1e-14));
  CHECK(eval1([&](Graph& g) { return si_mse(g.constant(x), g.constant(x)); }) == 0.0);

  SplitMix64 rng(4);
  Tensor a = rand_tensor(rng, {3, 6});
  Tensor b = rand_tensor(rng, {3, 6});
  double base = eval1([&](Graph& g) { return si_mse(g.constant(a), g.constant(b)); });
  for (double c : {0.37, -2.0, 11.5}) {
    Tensor ac = a, bc = b;
    for (double& v : ac.data) v += c;
    CHECK(eval1([&](Graph& g) { return si_mse(g.constant(ac), g.constant(b)); }) ==
          doctest::Approx(base).epsilon(1e-10));
    for (double& v : bc.data) v += c;
    CHECK(eval1([&](Graph& g) { return si_mse(g.constant(a), g.constant(bc)); }) ==
          doctest::Approx(base).epsilon(1e-10));
  }
}

TEST_CASE("reconstruction loss adds the two domains") {
  Tensor x = Tensor::of({4}, {1, 2, 3, 4});
  Tensor zero({4}, 0.0);
  double both = eval1([&](Graph& g) {
    return reconstruction_loss(g.constant(x), g.constant(zero), g.constant(x), g.constant(x));
  });
  CHECK(both == doctest::Approx(1.25).epsilon(1e-14));
  double swapped = eval1([&](Graph& g) {
    return reconstruction_loss(g.constant(x), g.constant(x), g.constant(x), g.constant(zero));
  });
  CHECK(swapped == doctest::Approx(both).epsilon(1e-14));
}

TEST_CASE("difference loss closed forms") {
  SUBCASE("zero private representations") {
    Tensor hc = Tensor::of({2, 2}, {1, 0, 0, 1});
    Tensor hp({2, 2}, 0.0);
    CHECK(eval1([&](Graph& g) {
            return difference_loss(g.constant(hc), g.constant(hp), g.constant(hc), g.constant(hp));
          }) == 0.0);
  }
  SUBCASE("batch-level column orthogonality, not row orthogonality") {
    Tensor hc = Tensor::of({2, 2}, {1, 0, 0, 0});
    Tensor hp = Tensor::of({2, 2}, {0, 0, 0, 1});
    CHECK(eval1([&](Graph& g) { return subspace_overlap(g.constant(hc), g.constant(hp), false); }) == 0.0);

    Tensor hc2 = Tensor::of({1, 2}, {1, 1});
    Tensor hp2 = Tensor::of({1, 2}, {1, -1});
    CHECK(eval1([&](Graph& g) { return subspace_overlap(g.constant(hc2), g.constant(hp2), false); }) ==
          doctest::Approx(4.0).epsilon(1e-14));
  }
  SUBCASE("row permutation invariance") {
    SplitMix64 rng(9);
    Tensor hc = rand_tensor(rng, {5, 3}), hp = rand_tensor(rng, {5, 3});
    double base = eval1([&](Graph& g) { return subspace_overlap(g.constant(hc), g.constant(hp)); });
    std::vector<int> perm = {4, 2, 0, 3, 1};
    Tensor hcp({5, 3}), hpp({5, 3});
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 3; ++j) {
        hcp.at(i, j) = hc.at(perm[static_cast<size_t>(i)], j);
        hpp.at(i, j) = hp.at(perm[static_cast<size_t>(i)], j);
      }
    CHECK(eval1([&](Graph& g) { return subspace_overlap(g.constant(hcp), g.constant(hpp)); }) ==
          doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("dann domain loss closed forms") {
  CHECK(eval1([](Graph& g) {
          return dann_domain_loss(g.constant(Tensor::of({2, 1}, {0.5, 0.5})), Tensor::of({2}, {1, 0}));
        }) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(eval1([](Graph& g) {
          return dann_domain_loss(g.constant(Tensor::of({2, 1}, {0.0, 1.0})), Tensor::of({2}, {1, 0}));
        }) == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
  // perfect predictions cost only the clamp epsilon
  CHECK(eval1([](Graph& g) {
          return dann_domain_loss(g.constant(Tensor::of({2, 1}, {1.0, 0.0})), Tensor::of({2}, {1, 0}));
        }) == doctest::Approx(0.0).epsilon(1e-9));
  Graph g;
  CHECK_THROWS_AS(
      (void)dann_domain_loss(g.constant(Tensor::of({2, 1}, {0.5, 0.5})), Tensor::of({2}, {2, 0})),
      std::invalid_argument);
}

TEST_CASE("mmd closed forms and properties") {
  KernelSpec one;
  one.sigmas = {1.0};
  one.etas = {1.0};
  SUBCASE("singleton sets") {
    double v = eval1([&](Graph& g) {
      return mmd_loss(g.constant(Tensor({1, 1}, 0.0)), g.constant(Tensor({1, 1}, 1.0)), one);
    });
    CHECK(v == doctest::Approx(2.0 - 2.0 * std::exp(-0.5)).epsilon(1e-14));
  }
  SUBCASE("identical sets, symmetry, nonnegativity") {
    SplitMix64 rng(21);
    for (int trial = 0; trial < 8; ++trial) {
      Tensor a = rand_tensor(rng, {2 + static_cast<int>(rng.below(4)), 3});
      Tensor b = rand_tensor(rng, {2 + static_cast<int>(rng.below(4)), 3});
      KernelSpec k = KernelSpec::default_multi_rbf();
      double self = eval1([&](Graph& g) { return mmd_loss(g.constant(a), g.constant(a), k); });
      CHECK(std::fabs(self) <= 1e-12);
      double ab = eval1([&](Graph& g) { return mmd_loss(g.constant(a), g.constant(b), k); });
      double ba = eval1([&](Graph& g) { return mmd_loss(g.constant(b), g.constant(a), k); });
      CHECK(ab >= -1e-12);
      CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    }
  }
  SUBCASE("kernel spec validation") {
    KernelSpec bad;
    bad.sigmas = {1.0, 2.0};
    bad.etas = {0.0, 0.0};
    Graph g;
    CHECK_THROWS_AS((void)mmd_loss(g.constant(Tensor({1, 1}, 0.0)), g.constant(Tensor({1, 1}, 0.0)), bad),
                    std::invalid_argument);
  }
}

TEST_CASE("correg closed forms") {
  CHECK(eval1([](Graph& g) {
          return correg_loss(g.constant(Tensor::of({1, 2}, {1, 0})), g.constant(Tensor::of({1, 2}, {0, 1})), false,
                             false);
        }) == doctest::Approx(2.0).epsilon(1e-14));
  SplitMix64 rng(31);
  Tensor a = rand_tensor(rng, {4, 3}), b = rand_tensor(rng, {5, 3});
  double same = eval1([&](Graph& g) { return correg_loss(g.constant(a), g.constant(a)); });
  CHECK(same == doctest::Approx(0.0).epsilon(1e-12));
  double ab = eval1([&](Graph& g) { return correg_loss(g.constant(a), g.constant(b)); });
  double ba = eval1([&](Graph& g) { return correg_loss(g.constant(b), g.constant(a)); });
  CHECK(ab == doctest::Approx(ba).epsilon(1e-12));

  // permutation invariance
  Tensor ap({4, 3});
  std::vector<int> perm = {2, 0, 3, 1};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) ap.at(i, j) = a.at(perm[static_cast<size_t>(i)], j);
  double abp = eval1([&](Graph& g) { return correg_loss(g.constant(ap), g.constant(b)); });
  CHECK(abp == doctest::Approx(ab).epsilon(1e-12));
}

TEST_CASE("pose term closed forms") {
  double xi = 0.125;
  Tensor q_id = Tensor::of({1, 4}, {1, 0, 0, 0});
  SUBCASE("perfect prediction hits the clamp floor exactly") {
    double v = eval1([&](Graph& g) { return pose_log_term(g.constant(q_id), q_id, xi); });
    CHECK(v == xi * std::log(1e-6));
  }
  SUBCASE("double cover") {
    Tensor neg_q = Tensor::of({1, 4}, {-1, 0, 0, 0});
    double v = eval1([&](Graph& g) { return pose_log_term(g.constant(neg_q), q_id, xi); });
    CHECK(v == xi * std::log(1e-6));
  }
  SUBCASE("90 degree rotation about z") {
    Quaternion r = Quaternion::about_z(kPi / 2.0);
    Tensor qhat = Tensor::of({1, 4}, {r.w, r.x, r.y, r.z});
    double v = eval1([&](Graph& g) { return pose_log_term(g.constant(qhat), q_id, xi); });
    CHECK(v == doctest::Approx(xi * std::log(1.0 - std::cos(kPi / 4.0))).epsilon(1e-12));
  }
  SUBCASE("zero-norm prediction rejected") {
    Graph g;
    CHECK_THROWS_AS((void)pose_log_term(g.constant(Tensor({1, 4}, 0.0)), q_id, xi), std::invalid_argument);
  }
}

TEST_CASE("mean angle error") {
  Tensor q_id = Tensor::of({1, 4}, {1, 0, 0, 0});
  CHECK(std::fabs(mean_angle_error_deg(q_id, q_id)) < 1e-9);
  Tensor neg_q = Tensor::of({1, 4}, {-1, 0, 0, 0});
  CHECK(std::fabs(mean_angle_error_deg(q_id, neg_q)) < 1e-9);
  Quaternion r = Quaternion::about_z(kPi / 2.0);
  Tensor q90 = Tensor::of({1, 4}, {r.w, r.x, r.y, r.z});
  CHECK(std::fabs(mean_angle_error_deg(q_id, q90) - 90.0) < 1e-9);
}

TEST_CASE("total loss gating") {
  SplitMix64 rng(8);
  auto build_parts = [&](Graph& g) {
    LossParts parts;
    parts.task = mean(square(g.constant(rand_tensor(rng, {3, 2}))));
    parts.recon = mean(square(g.constant(rand_tensor(rng, {3, 2}))));
    parts.diff = mean(square(g.constant(rand_tensor(rng, {3, 2}))));
    parts.sim = mean(square(g.constant(rand_tensor(rng, {3, 2}))));
    return parts;
  };
  LossWeights w{0.5, 0.25, 0.125, 0.0, 100};

  SUBCASE("before warmup the total IS the task loss") {
    Graph g;
    LossParts parts = build_parts(g);
    Var total = total_loss(parts, w, 99);
    CHECK(g.value(total).item() == g.value(parts.task).item());
  }
  SUBCASE("zero weights reduce to the task loss at any step") {
    Graph g;
    LossParts parts = build_parts(g);
    Var total = total_loss(parts, {0, 0, 0, 0, 0}, 100000);
    CHECK(g.value(total).item() == g.value(parts.task).item());
  }
  SUBCASE("single active weight is additive") {
    Graph g;
    LossParts parts = build_parts(g);
    Var total = total_loss(parts, {1.0, 0.0, 0.0, 0.0, 10}, 10);
    CHECK(g.value(total).item() ==
          doctest::Approx(g.value(parts.task).item() + g.value(parts.recon).item()).epsilon(1e-15));
  }
}

TEST_CASE("one adversarial step increases the domain loss through the reversal") {
  // Linearly separable toy: source points near (+1,0), target near (-1,0); a
  // fixed 1-layer domain classifier separates them well, so a gradient step
  // on the total loss must move theta_c to make the frozen classifier worse.
  SplitMix64 rng(123);
  int n = 8;
  Tensor xs({n, 2}), xt({n, 2});
  for (int i = 0; i < n; ++i) {
    xs.at(i, 0) = 1.0 + 0.1 * rng.normal();
    xs.at(i, 1) = 0.1 * rng.normal();
    xt.at(i, 0) = -1.0 + 0.1 * rng.normal();
    xt.at(i, 1) = 0.1 * rng.normal();
  }
  Tensor labels({2 * n}, 0.0);
  for (int i = n; i < 2 * n; ++i) labels[i] = 1.0;
  Tensor wc = Tensor::of({2, 2}, {1, 0, 0, 1});
  Tensor wz = Tensor::of({2, 1}, {-2.5, 0.0});
  const double gamma = 0.25;

  auto domain_loss = [&](const Tensor& wc_val, Graph& g, GradientMap* grads, Var* wc_leaf) {
    Var wcv = g.leaf(wc_val, "theta_c", true);
    if (wc_leaf) *wc_leaf = wcv;
    Var h = matmul(concat(g.constant(xs), g.constant(xt), 0), wcv);
    Var dhat = sigmoid(matmul(gradient_reversal(h), g.constant(wz)));
    Var loss = dann_domain_loss(dhat, labels);
    if (grads) *grads = g.backward(mul_scalar(loss, gamma));
    return g.value(loss).item();
  };

  Graph g0;
  GradientMap gm;
  Var wc_leaf;
  double before = domain_loss(wc, g0, &gm, &wc_leaf);

  Tensor wc_after = wc;
  const double lr = 0.05;
  for (int64_t i = 0; i < wc.size(); ++i) wc_after[i] -= lr * gm.at(wc_leaf)[i];

  Graph g1;
  double after = domain_loss(wc_after, g1, nullptr, nullptr);
  CHECK(after > before);
}

TEST_CASE("every loss passes finite differences on random inputs") {
  GradcheckReport rep = run_gradcheck_suite(4);
  for (const auto& line : rep.lines) {
    INFO(line.name, " max rel err ", line.max_rel_err);
    CHECK(line.pass);
  }
  CHECK(rep.all_pass);
}

TEST_CASE("the checker flags a corrupted backward") {
  GradcheckReport rep = run_gradcheck_suite(2, 1.01);
  CHECK_FALSE(rep.all_pass);
  bool si_fail = false, others_pass = true;
  for (const auto& line : rep.lines) {
    if (line.name == "si_mse")
      si_fail = !line.pass;
    else
      others_pass = others_pass && line.pass;
  }
  CHECK(si_fail);
  CHECK(others_pass);
}
