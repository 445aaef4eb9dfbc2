#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hvacf/errors.hpp"
#include "hvacf/hypgeo.hpp"
#include "hvacf/hypgeo_graph.hpp"
#include "hvacf/tape.hpp"

using namespace hvacf;
using grad::NodeId;
using grad::OpKind;
using grad::Tape;

namespace {

Tensor random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t(r, c);
  for (auto& x : t.data) x = u(rng);
  return t;
}

}  // namespace

TEST(Record, ForwardExamples) {
  Tape t({});
  EXPECT_EQ(t.value(t.square(t.scalar(3.0))).item(), 9.0);
  EXPECT_EQ(t.value(t.tanh(t.scalar(0.0))).item(), 0.0);
  // mpmath: atanh(0.3)
  EXPECT_NEAR(t.value(t.atanh(t.scalar(0.3))).item(), 0.3095196042031117155, 1e-15);
}

TEST(Record, NonFiniteNamesOp) {
  Tape t({});
  try {
    t.log(t.scalar(-1.0));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos);
  }
  EXPECT_THROW(t.atanh(t.scalar(1.0)), NumericError);
}

TEST(Record, Broadcasting) {
  Tape t({});
  Tensor m(2, 3);
  for (std::size_t i = 0; i < 6; ++i) m.data[i] = double(i);
  const auto a = t.constant(m);
  const auto r = t.add(a, t.constant(Tensor::row_vector(std::vector<double>{10, 20, 30})));
  EXPECT_EQ(t.value(r)(1, 2), 35.0);
  const auto s = t.mul(a, t.constant(Tensor::column_vector(std::vector<double>{1, -1})));
  EXPECT_EQ(t.value(s)(1, 0), -3.0);
  EXPECT_EQ(t.value(t.row_sum(a))(1, 0), 12.0);
}

TEST(Backward, SquareAtThree) {
  std::vector<Tensor> p{Tensor::scalar(3.0)};
  Tape t(p);
  const auto g = t.backward(t.square(t.param(0)));
  EXPECT_EQ(g[0].item(), 6.0);
}

TEST(Backward, UnusedParamIsZeroAndShaped) {
  std::vector<Tensor> p{Tensor::scalar(2.0), Tensor(3, 4, 1.0)};
  Tape t(p);
  const auto g = t.backward(t.mul(t.param(0), t.param(0)));
  ASSERT_EQ(g.size(), 2u);
  EXPECT_TRUE(g[1].same_shape(p[1]));
  for (double v : g[1].data) EXPECT_EQ(v, 0.0);
}

TEST(Backward, NonScalarRootIsContractViolation) {
  std::vector<Tensor> p{Tensor(2, 2, 1.0)};
  Tape t(p);
  EXPECT_THROW(t.backward(t.param(0)), std::logic_error);
}

TEST(FiniteDiff, LinearAndQuadratic) {
  std::mt19937_64 rng(1);
  std::vector<Tensor> p{random_tensor(rng, 3, 4, 1.0)};
  const Tensor w = random_tensor(rng, 3, 4, 1.0);
  const auto lin = grad::finite_diff_check(
      [&](Tape& t) { return t.sum_all(t.mul(t.param(0), t.constant(w))); }, p, 1e-5);
  EXPECT_LT(lin.max_rel_error, 1e-9);
  const auto quad = grad::finite_diff_check(
      [&](Tape& t) { return t.sum_all(t.square(t.param(0))); }, p, 1e-5);
  EXPECT_LT(quad.max_rel_error, 1e-8);
}

TEST(FiniteDiff, EveryOpKind) {
  std::mt19937_64 rng(2);
  std::vector<Tensor> p{random_tensor(rng, 4, 3, 0.5), random_tensor(rng, 4, 3, 0.5),
                        random_tensor(rng, 2, 3, 0.5)};
  for (auto& x : p[1].data) x += 2.0;  // positive, away from zero
  const auto build = [](Tape& t) {
    const auto a = t.param(0), b = t.param(1), w = t.param(2);
    NodeId acc = t.sum_all(t.add(a, b));
    acc = t.add(acc, t.sum_all(t.sub(a, b)));
    acc = t.add(acc, t.sum_all(t.mul(a, b)));
    acc = t.add(acc, t.sum_all(t.div(a, b)));
    acc = t.add(acc, t.sum_all(t.safe_div(a, b)));
    acc = t.add(acc, t.sum_all(t.neg(t.scale(a, 1.5))));
    acc = t.add(acc, t.sum_all(t.add_scalar(a, 2.0)));
    acc = t.add(acc, t.sum_all(t.sqrt(b)));
    acc = t.add(acc, t.sum_all(t.exp(a)));
    acc = t.add(acc, t.sum_all(t.log(b)));
    acc = t.add(acc, t.sum_all(t.tanh(a)));
    acc = t.add(acc, t.sum_all(t.atanh(a)));
    acc = t.add(acc, t.sum_all(t.mul(t.relu(a), b)));
    acc = t.add(acc, t.sum_all(t.mul(t.abs(a), b)));
    acc = t.add(acc, t.sum_all(t.mul(t.max_const(a, 0.1), b)));
    acc = t.add(acc, t.sum_all(t.mul(t.clip(a, -0.2, 0.2), b)));
    acc = t.add(acc, t.sum_all(t.square(t.row_sum(a))));
    acc = t.add(acc, t.sum_all(t.row_dot(a, b)));
    acc = t.add(acc, t.sum_all(t.row_norm(b)));
    acc = t.add(acc, t.sum_all(t.square(t.matmul_nt(a, w))));
    const auto g = t.gather_rows(a, {3, 0, 3, 1});
    acc = t.add(acc, t.sum_all(t.mul(g, b)));
    const auto sm = t.segment_softmax(t.row_sum(t.mul(a, b)), {0, 1, 1, 4});
    acc = t.add(acc, t.sum_all(t.mul(sm, t.row_norm(b))));
    const auto ss = t.segment_sum(t.mul(a, b), {0, 2, 2, 4});
    acc = t.add(acc, t.sum_all(t.square(ss)));
    acc = t.add(acc, t.sum_all(t.mul(t.ball_project(b, 3.0), a)));
    return acc;
  };
  const auto rep = grad::finite_diff_check(build, p, 1e-6);
  EXPECT_LT(rep.max_rel_error, 1e-5);
}

TEST(FiniteDiff, HypDistanceWrtX) {
  std::mt19937_64 rng(3);
  const hypgeo::Curvature c(1.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Tensor> p{random_tensor(rng, 1, 6, 0.35), random_tensor(rng, 1, 6, 0.35)};
    const auto r = grad::finite_diff_check(
        [&](Tape& t) { return hypgeo::graph::distance(t, t.param(0), t.param(1), c); }, p, 1e-5);
    EXPECT_LT(r.per_param[0], 1e-4);
  }
}

TEST(GraphKernels, MatchScalarKernels) {
  std::mt19937_64 rng(4);
  const hypgeo::Curvature c(0.7);
  const Tensor x = random_tensor(rng, 5, 4, 0.5);
  const Tensor y = random_tensor(rng, 5, 4, 0.5);
  Tensor z = random_tensor(rng, 5, 4, 1.0);
  for (std::size_t k = 0; k < 4; ++k) z(2, k) = 0.0;
  Tape t({});
  const auto nx = t.constant(x), ny = t.constant(y), nz = t.constant(z);
  const Tensor madd = t.value(hypgeo::graph::mobius_add(t, nx, ny, c));
  const Tensor dist = t.value(hypgeo::graph::distance(t, nx, ny, c));
  const Tensor eu = t.value(hypgeo::graph::euclid_distance(t, nx, ny));
  const Tensor ex = t.value(hypgeo::graph::exp_map(t, nx, nz, c));
  for (std::size_t r = 0; r < 5; ++r) {
    const auto m = hypgeo::mobius_add(x.row(r), y.row(r), c);
    const auto e = hypgeo::exp_map(x.row(r), z.row(r), c);
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_NEAR(madd(r, k), m[k], 1e-12);
      EXPECT_NEAR(ex(r, k), e[k], 1e-12);
    }
    EXPECT_NEAR(dist(r, 0), hypgeo::hyp_distance(x.row(r), y.row(r), c), 1e-12);
    EXPECT_NEAR(eu(r, 0), hypgeo::euclid_distance(x.row(r), y.row(r)), 1e-12);
  }
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(ex(2, k), x(2, k));
}

TEST(GraphKernels, ExpMapGradientAtZeroTangentIsFinite) {
  std::vector<Tensor> p{Tensor(1, 3, 0.1), Tensor(1, 3, 0.0)};
  Tape t(p);
  const hypgeo::Curvature c(1.0);
  const auto e = hypgeo::graph::exp_map(t, t.param(0), t.param(1), c);
  const auto g = t.backward(t.sum_all(e));
  EXPECT_TRUE(g[0].all_finite());
  EXPECT_TRUE(g[1].all_finite());
}

TEST(OpName, Distinct) {
  EXPECT_EQ(grad::op_name(OpKind::atanh), "atanh");
  EXPECT_NE(grad::op_name(OpKind::add), grad::op_name(OpKind::sub));
}
