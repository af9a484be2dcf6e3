#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "rdm/finite_diff.hpp"
#include "rdm/rng.hpp"
#include "rdm/tape.hpp"

using namespace rdm;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Central finite differences for d(root)/d(leaf) on a 1-arg graph builder.
double fd_scalar(const std::function<double(const Tensor&)>& f, Tensor x, std::size_t i, double eps = 1e-6) {
  double orig = x[i];
  x[i] = orig + eps;
  double up = f(x);
  x[i] = orig - eps;
  double down = f(x);
  return (up - down) / (2.0 * eps);
}

}  // namespace

TEST_CASE("forward op examples") {
  ad::Tape tape;
  ad::Var x = tape.leaf(Tensor::vector({-1.0, 0.0, 2.0}));
  const Tensor& r = ad::relu(x).value();
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 2.0);

  ad::Var a = tape.leaf(Tensor::matrix(1, 1, {3.0}));
  ad::Var b = tape.leaf(Tensor::matrix(1, 1, {4.0}));
  CHECK(ad::matmul(a, b).value()[0] == doctest::Approx(12.0).epsilon(1e-15));

  ad::Var z = tape.leaf(Tensor::vector({0.0, 0.0}));
  CHECK(ad::sum(ad::exp(z)).value().value() == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("shape mismatch errors name the op and shapes") {
  ad::Tape tape;
  ad::Var a = tape.leaf(Tensor::vector({1.0, 2.0}));
  ad::Var b = tape.leaf(Tensor::vector({1.0, 2.0, 3.0}));
  CHECK_THROWS_WITH_AS(ad::add(a, b), doctest::Contains("add"), std::invalid_argument);

  ad::Var m = tape.leaf(Tensor::matrix(2, 3, std::vector<double>(6, 0.0)));
  ad::Var n = tape.leaf(Tensor::matrix(2, 3, std::vector<double>(6, 0.0)));
  CHECK_THROWS_WITH_AS(ad::matmul(m, n), doctest::Contains("matmul"), std::invalid_argument);
  CHECK_THROWS_AS(ad::softmax_xent(m, {0, 5}), std::invalid_argument);
}

TEST_CASE("backward basics") {
  SUBCASE("d(x^2)/dx = 2x at x=3") {
    ad::Tape tape;
    ad::Var x = tape.leaf(Tensor::scalar(3.0), true);
    ad::Var y = ad::square(x);
    auto grads = tape.backward(y);
    CHECK(grads[static_cast<std::size_t>(x.id)].value() == doctest::Approx(6.0).epsilon(1e-15));
  }
  SUBCASE("sum(W v) with W = I2 gives grad(v) = [1,1]") {
    ad::Tape tape;
    ad::Var w = tape.leaf(Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0}));
    ad::Var v = tape.leaf(Tensor::matrix(2, 1, {1.0, 2.0}), true);
    ad::Var y = ad::sum(ad::matmul(w, v));
    auto grads = tape.backward(y);
    const Tensor& gv = grads[static_cast<std::size_t>(v.id)];
    CHECK(gv[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(gv[1] == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("sigmoid'(0) = 0.25") {
    ad::Tape tape;
    ad::Var x = tape.leaf(Tensor::scalar(0.0), true);
    ad::Var y = ad::sum(ad::sigmoid(x));
    auto grads = tape.backward(y);
    CHECK(grads[static_cast<std::size_t>(x.id)].value() == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("non-scalar root is rejected") {
    ad::Tape tape;
    ad::Var x = tape.leaf(Tensor::vector({1.0, 2.0}), true);
    CHECK_THROWS_AS(tape.backward(ad::relu(x)), std::invalid_argument);
  }
  SUBCASE("untouched grad-tracked leaves get zero gradients") {
    ad::Tape tape;
    ad::Var x = tape.leaf(Tensor::scalar(1.0), true);
    ad::Var unused = tape.leaf(Tensor::vector({1.0, 2.0, 3.0}), true);
    auto grads = tape.backward(ad::square(x));
    const Tensor& gu = grads[static_cast<std::size_t>(unused.id)];
    REQUIRE(gu.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(gu[i] == 0.0);
  }
}

TEST_CASE("every primitive matches central finite differences at random points") {
  Rng rng(2024);
  const double tol = 1e-6;

  auto check_unary = [&](const char* name, auto op, double lo, double hi) {
    CAPTURE(name);
    Tensor x0 = random_tensor({5}, rng, lo, hi);
    ad::Tape tape;
    ad::Var x = tape.leaf(x0, true);
    ad::Var y = ad::sum(op(x));
    auto grads = tape.backward(y);
    const Tensor& g = grads[static_cast<std::size_t>(x.id)];
    for (std::size_t i = 0; i < x0.size(); ++i) {
      double num = fd_scalar(
          [&](const Tensor& t) {
            ad::Tape probe;
            return ad::sum(op(probe.leaf(t))).value().value();
          },
          x0, i);
      double rel = std::abs(g[i] - num) / (std::abs(g[i]) + std::abs(num) + 1e-12);
      CHECK(rel < tol);
    }
  };

  check_unary("relu", [](ad::Var v) { return ad::relu(v); }, 0.2, 1.5);
  check_unary("sigmoid", [](ad::Var v) { return ad::sigmoid(v); }, -2.0, 2.0);
  check_unary("exp", [](ad::Var v) { return ad::exp(v); }, -1.0, 1.0);
  check_unary("log", [](ad::Var v) { return ad::log(v); }, 0.5, 3.0);
  check_unary("square", [](ad::Var v) { return ad::square(v); }, -2.0, 2.0);
  check_unary("mean", [](ad::Var v) { return ad::mean(v); }, -2.0, 2.0);
  check_unary("scale", [](ad::Var v) { return ad::scale(v, -1.7); }, -2.0, 2.0);
  check_unary("dropout-fixed-seed", [](ad::Var v) { return ad::dropout(v, 0.4, 99); }, -2.0, 2.0);
  check_unary("variance", [](ad::Var v) { return ad::variance(v); }, -2.0, 2.0);

  SUBCASE("binary and fused ops") {
    Tensor a0 = random_tensor({3, 4}, rng);
    Tensor b0 = random_tensor({4, 2}, rng);
    Tensor r0 = random_tensor({2}, rng);
    std::vector<int> labels = {1, 0, 1};

    auto loss_of = [&](const Tensor& a, const Tensor& b, const Tensor& r) {
      ad::Tape t;
      ad::Var logits = ad::add_row(ad::matmul(t.leaf(a), t.leaf(b)), t.leaf(r));
      return ad::mean(ad::softmax_xent(logits, labels)).value().value();
    };

    ad::Tape tape;
    ad::Var a = tape.leaf(a0, true);
    ad::Var b = tape.leaf(b0, true);
    ad::Var r = tape.leaf(r0, true);
    ad::Var loss = ad::mean(ad::softmax_xent(ad::add_row(ad::matmul(a, b), r), labels));
    auto grads = tape.backward(loss);

    auto check_grad = [&](ad::Var v, Tensor base, auto rebuild) {
      const Tensor& g = grads[static_cast<std::size_t>(v.id)];
      for (std::size_t i = 0; i < base.size(); ++i) {
        double num = fd_scalar(rebuild, base, i);
        double rel = std::abs(g[i] - num) / (std::abs(g[i]) + std::abs(num) + 1e-12);
        CHECK(rel < tol);
      }
    };
    check_grad(a, a0, [&](const Tensor& t) { return loss_of(t, b0, r0); });
    check_grad(b, b0, [&](const Tensor& t) { return loss_of(a0, t, r0); });
    check_grad(r, r0, [&](const Tensor& t) { return loss_of(a0, b0, t); });
  }

  SUBCASE("irm_scale_grad gradient") {
    Tensor z0 = random_tensor({4, 3}, rng);
    std::vector<int> labels = {0, 2, 1, 1};
    ad::Tape tape;
    ad::Var z = tape.leaf(z0, true);
    ad::Var pen = ad::square(ad::irm_scale_grad(z, labels));
    auto grads = tape.backward(pen);
    const Tensor& g = grads[static_cast<std::size_t>(z.id)];
    for (std::size_t i = 0; i < z0.size(); ++i) {
      double num = fd_scalar(
          [&](const Tensor& t) {
            ad::Tape probe;
            return ad::square(ad::irm_scale_grad(probe.leaf(t), labels)).value().value();
          },
          z0, i);
      double rel = std::abs(g[i] - num) / (std::abs(g[i]) + std::abs(num) + 1e-12);
      CHECK(rel < tol);
    }
  }

  SUBCASE("concat and sub_scalar route gradients to the right blocks") {
    Tensor a0 = random_tensor({3}, rng);
    Tensor b0 = random_tensor({2}, rng);
    auto loss_of = [&](const Tensor& a, const Tensor& b) {
      ad::Tape t;
      ad::Var parts[] = {t.leaf(a), t.leaf(b)};
      ad::Var v = ad::concat(parts);
      return ad::sum(ad::square(ad::sub_scalar(v, ad::mean(v)))).value().value();
    };
    ad::Tape tape;
    ad::Var a = tape.leaf(a0, true);
    ad::Var b = tape.leaf(b0, true);
    ad::Var parts[] = {a, b};
    ad::Var v = ad::concat(parts);
    ad::Var loss = ad::sum(ad::square(ad::sub_scalar(v, ad::mean(v))));
    auto grads = tape.backward(loss);
    for (std::size_t i = 0; i < a0.size(); ++i) {
      double num = fd_scalar([&](const Tensor& t) { return loss_of(t, b0); }, a0, i);
      double got = grads[static_cast<std::size_t>(a.id)][i];
      CHECK(std::abs(got - num) / (std::abs(got) + std::abs(num) + 1e-12) < tol);
    }
    for (std::size_t i = 0; i < b0.size(); ++i) {
      double num = fd_scalar([&](const Tensor& t) { return loss_of(a0, t); }, b0, i);
      double got = grads[static_cast<std::size_t>(b.id)][i];
      CHECK(std::abs(got - num) / (std::abs(got) + std::abs(num) + 1e-12) < tol);
    }
  }
}

TEST_CASE("backward is linear in the root") {
  Rng rng(7);
  Tensor x0 = random_tensor({6}, rng);
  double a = 1.7, b = -0.4;

  auto grad_of = [&](auto make_root) {
    ad::Tape tape;
    ad::Var x = tape.leaf(x0, true);
    auto grads = tape.backward(make_root(x));
    return grads[static_cast<std::size_t>(x.id)];
  };

  Tensor gf = grad_of([](ad::Var x) { return ad::mean(ad::square(x)); });
  Tensor gg = grad_of([](ad::Var x) { return ad::sum(ad::sigmoid(x)); });
  Tensor gc = grad_of([&](ad::Var x) {
    return ad::add(ad::scale(ad::mean(ad::square(x)), a), ad::scale(ad::sum(ad::sigmoid(x)), b));
  });
  for (std::size_t i = 0; i < x0.size(); ++i) {
    CHECK(gc[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-12));
  }
}

TEST_CASE("two backward passes over the same tape are bit-identical") {
  Rng rng(11);
  Tensor x0 = random_tensor({4, 3}, rng);
  Tensor w0 = random_tensor({3, 2}, rng);
  ad::Tape tape;
  ad::Var x = tape.leaf(x0, true);
  ad::Var w = tape.leaf(w0, true);
  ad::Var loss = ad::mean(ad::softmax_xent(ad::matmul(x, w), {0, 1, 1, 0}));
  auto g1 = tape.backward(loss);
  auto g2 = tape.backward(loss);
  for (ad::Var v : {x, w}) {
    const Tensor& a = g1[static_cast<std::size_t>(v.id)];
    const Tensor& b = g2[static_cast<std::size_t>(v.id)];
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("finite_diff_check") {
  SUBCASE("quadratic loss is exact to O(eps^2)") {
    std::vector<Tensor> params = {Tensor::vector({1.0, 2.0, 3.0})};
    auto fn = [](ad::Tape&, const std::vector<ad::Var>& p) { return ad::sum(ad::square(p[0])); };
    auto report = ad::finite_diff_check(fn, params, 1e-5, 1e-6);
    CHECK(report.max_rel_error < 1e-6);
    CHECK(report.passed);
  }
  SUBCASE("constant loss has zero error") {
    std::vector<Tensor> params = {Tensor::vector({1.0, -1.0})};
    auto fn = [](ad::Tape& tape, const std::vector<ad::Var>&) { return tape.leaf(Tensor::scalar(5.0), true); };
    auto report = ad::finite_diff_check(fn, params, 1e-5, 1e-9);
    CHECK(report.max_rel_error == 0.0);
  }
  SUBCASE("eps must be positive") {
    std::vector<Tensor> params = {Tensor::scalar(1.0)};
    auto fn = [](ad::Tape&, const std::vector<ad::Var>& p) { return ad::square(p[0]); };
    CHECK_THROWS_AS(ad::finite_diff_check(fn, params, 0.0, 1e-6), std::invalid_argument);
  }
  SUBCASE("non-finite loss at a probe point is an error") {
    std::vector<Tensor> params = {Tensor::scalar(1e-7)};
    auto fn = [](ad::Tape&, const std::vector<ad::Var>& p) { return ad::log(p[0]); };
    CHECK_THROWS_AS(ad::finite_diff_check(fn, params, 1e-5, 1e-6), std::runtime_error);
  }
}

TEST_CASE("dropout with the same seed reproduces the same mask") {
  Tensor x0 = Tensor::vector(std::vector<double>(64, 1.0));
  ad::Tape t1, t2;
  const Tensor& a = ad::dropout(t1.leaf(x0), 0.3, 1234).value();
  const Tensor& b = ad::dropout(t2.leaf(x0), 0.3, 1234).value();
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);

  const Tensor& c = ad::dropout(t2.leaf(x0), 0.3, 1235).value();
  CHECK(std::memcmp(a.data(), c.data(), a.size() * sizeof(double)) != 0);
}
