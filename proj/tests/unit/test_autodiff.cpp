#include "doctest.h"

#include <cmath>

#include "helpers.hpp"

using namespace ganmem;
namespace ad = ganmem::ad;
using testutil::FdProblem;

namespace {

Tensor randt(std::vector<int> shape, uint64_t seed, double s = 1.0) {
  Rng rng(seed);
  return rng.normal_tensor(std::move(shape), s);
}

}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
  FdProblem p;
  p.params = {randt({3, 4}, 1), randt({3, 4}, 2)};
  p.make = [](const std::vector<ad::Var>& v) {
    ad::Var x = ad::mul(ad::add(v[0], ad::scale(v[1], 0.7)), v[1]);
    x = ad::add(ad::tanh_v(x), ad::leaky_relu(x, 0.2));
    x = ad::add(x, ad::softplus(ad::neg(v[0])));
    x = ad::add(x, ad::sigmoid_v(v[1]));
    return ad::mean(x);
  };
  CHECK(testutil::fd_max_rel_err(p) < 1e-6);
}

TEST_CASE("div, exp, log, abs gradients") {
  FdProblem p;
  Tensor a = randt({5}, 3);
  Tensor b = randt({5}, 4);
  for (int64_t i = 0; i < 5; ++i) {
    a[i] = 0.5 + std::fabs(a[i]);  // keep log/abs away from kinks
    b[i] = 1.0 + std::fabs(b[i]);
  }
  p.params = {a, b};
  p.make = [](const std::vector<ad::Var>& v) {
    ad::Var x = ad::div(v[0], v[1]);
    x = ad::add(x, ad::log_v(v[0]));
    x = ad::add(x, ad::exp_v(ad::scale(v[1], -0.5)));
    x = ad::add(x, ad::abs_v(v[0]));
    return ad::sum(x);
  };
  CHECK(testutil::fd_max_rel_err(p) < 1e-6);
}

TEST_CASE("softsign value and gradient") {
  Tensor a = randt({7}, 12, 3.0);
  a[0] = 50.0;  // deep tail must stay differentiable
  ad::Var v = ad::leaf(a);
  ad::Var s = ad::softsign(v);
  for (int64_t i = 0; i < a.size(); ++i)
    CHECK(s.val()[i] == doctest::Approx(a[i] / (1.0 + std::fabs(a[i]))));
  FdProblem p;
  p.params = {a};
  p.make = [](const std::vector<ad::Var>& v) {
    return ad::sum(ad::softsign(v[0]));
  };
  CHECK(testutil::fd_max_rel_err(p) < 1e-5);
}

TEST_CASE("leaky_clamp value and gradient") {
  Tensor a({5}, {-3.0, -0.5, 0.0, 0.9, 4.0});
  ad::Var s = ad::leaky_clamp(ad::leaf(a), 0.05);
  CHECK(s.val()[0] == doctest::Approx(-1.0 - 0.05 * 2.0));
  CHECK(s.val()[1] == doctest::Approx(-0.5));
  CHECK(s.val()[2] == doctest::Approx(0.0));
  CHECK(s.val()[3] == doctest::Approx(0.9));
  CHECK(s.val()[4] == doctest::Approx(1.0 + 0.05 * 3.0));
  FdProblem p;
  p.params = {a};
  p.make = [](const std::vector<ad::Var>& v) {
    return ad::sum(ad::leaky_clamp(v[0], 0.05));
  };
  CHECK(testutil::fd_max_rel_err(p) < 1e-6);
}

TEST_CASE("matmul and reductions") {
  FdProblem p;
  p.params = {randt({3, 4}, 5), randt({4, 2}, 6)};
  p.make = [](const std::vector<ad::Var>& v) {
    ad::Var y = ad::matmul(v[0], v[1]);
    ad::Var r = ad::sum(ad::rowsum(y));
    ad::Var c = ad::sum(ad::colsum(ad::transpose(y)));
    return ad::add(ad::mean(ad::mul(y, y)), ad::add(r, c));
  };
  CHECK(testutil::fd_max_rel_err(p) < 1e-6);
}

TEST_CASE("broadcasts, tiling, gather") {
  FdProblem p;
  p.params = {randt({3}, 7), randt({4, 3}, 8)};
  p.make = [](const std::vector<ad::Var>& v) {
    ad::Var t = ad::tile_rows(v[0], 4);          // [4,3]
    ad::Var g = ad::gather_rows(v[1], {2, 0, 0, 1});
    ad::Var b = ad::broadcast_row(ad::rowsum(v[1]), 3);
    return ad::mean(ad::mul(ad::add(t, g), b));
  };
  CHECK(testutil::fd_max_rel_err(p) < 1e-6);
}

TEST_CASE("conv plumbing gradients") {
  FdProblem p;
  p.params = {randt({2, 3, 6, 6}, 9, 0.5), randt({4, 3, 3, 3}, 10, 0.3),
              randt({4}, 11)};
  p.make = [](const std::vector<ad::Var>& v) {
    ad::Var y = ad::conv2d(v[0], v[1], 1);
    y = ad::add(y, ad::broadcast_chan(v[2], 2, 6, 6));
    y = ad::leaky_relu(y, 0.2);
    y = ad::avgpool2x(y);
    return ad::mean(ad::mul(y, y));
  };
  CHECK(testutil::fd_max_rel_err(p, 1e-5, 40) < 1e-5);
}

TEST_CASE("upsample and pooling gradients") {
  FdProblem p;
  p.params = {randt({2, 2, 4, 4}, 12)};
  p.make = [](const std::vector<ad::Var>& v) {
    ad::Var u = ad::upsample2x(v[0]);
    ad::Var d = ad::avgpool2x(u);
    return ad::add(ad::mean(ad::mul(u, u)), ad::sum(ad::sum_nhw(d)));
  };
  CHECK(testutil::fd_max_rel_err(p) < 1e-6);
}

TEST_CASE("unfold and fold are mutual adjoints") {
  // <unfold(x), y> == <x, fold(y)> for a linear map and its transpose
  Tensor x = randt({2, 3, 5, 5}, 13);
  ad::Var ux = ad::unfold(ad::constant(x), 3, 1);
  Tensor y = randt(ux.val().shape(), 14);
  ad::Var fy = ad::fold(ad::constant(y), {2, 3, 5, 5}, 3, 1);
  double lhs = 0, rhs = 0;
  for (int64_t i = 0; i < ux.val().size(); ++i) lhs += ux.val()[i] * y[i];
  for (int64_t i = 0; i < x.size(); ++i) rhs += x[i] * fy.val()[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("kernel broadcast gradients") {
  FdProblem p;
  p.params = {randt({3, 2}, 15), randt({3, 2, 3, 3}, 16)};
  p.make = [](const std::vector<ad::Var>& v) {
    ad::Var k = ad::mul(ad::broadcast_kernel(v[0], 3, 3), v[1]);
    return ad::sum(ad::kernel_sum(k));
  };
  CHECK(testutil::fd_max_rel_err(p) < 1e-6);
}

TEST_CASE("detach blocks gradient flow") {
  Tensor a = randt({3}, 17);
  ad::Var v = ad::leaf(a);
  ad::Var out = ad::sum(ad::mul(ad::detach(v), v));
  auto g = ad::grad(out, {v});
  for (int64_t i = 0; i < 3; ++i) CHECK(g[0].val()[i] == doctest::Approx(a[i]));
}

TEST_CASE("second derivatives via differentiable gradients") {
  // f(x) = sum(x^3); df/dx = 3x^2; d/dx sum(df/dx) = 6x
  Tensor a = randt({4}, 18);
  ad::Var x = ad::leaf(a);
  ad::Var f = ad::sum(ad::mul(ad::mul(x, x), x));
  auto g1 = ad::grad(f, {x});
  ad::Var gsum = ad::sum(g1[0]);
  auto g2 = ad::grad(gsum, {x});
  for (int64_t i = 0; i < 4; ++i) {
    CHECK(g1[0].val()[i] == doctest::Approx(3 * a[i] * a[i]).epsilon(1e-12));
    CHECK(g2[0].val()[i] == doctest::Approx(6 * a[i]).epsilon(1e-12));
  }
}

TEST_CASE("unreachable targets get zero gradients") {
  ad::Var x = ad::leaf(randt({2}, 19));
  ad::Var y = ad::leaf(randt({2}, 20));
  auto g = ad::grad(ad::sum(x), {x, y});
  CHECK(g[1].val()[0] == 0.0);
  CHECK(g[1].val()[1] == 0.0);
}

TEST_CASE("scale_cols matches explicit diagonal product") {
  Tensor m = randt({3, 2}, 21);
  Tensor d = randt({2}, 22);
  ad::Var out = ad::scale_cols(ad::constant(m), ad::constant(d));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(out.val().at(i, j) == doctest::Approx(m.at(i, j) * d[j]));
  FdProblem p;
  p.params = {m, d};
  p.make = [](const std::vector<ad::Var>& v) {
    return ad::sum(ad::mul(ad::scale_cols(v[0], v[1]), ad::scale_cols(v[0], v[1])));
  };
  CHECK(testutil::fd_max_rel_err(p) < 1e-6);
}
