#include <doctest.h>

#include <cmath>
#include <set>

#include "nfp/kernels.hpp"
#include "nfp/rng.hpp"
#include "nfp/tensor.hpp"
#include "testing.hpp"

using namespace nfp;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Tensor t = Tensor::zeros({r, c});
  for (double& v : t.data) v = scale * (2.0 * rng.next_double() - 1.0);
  return t;
}

double weighted_sum(const Tensor& y, const Tensor& dy) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * dy.data[i];
  return s;
}

constexpr double kFdStep = 1e-5;
constexpr double kFdTol = 1e-6;

}  // namespace

TEST_CASE("rng: determinism and independent sub-streams") {
  Rng a(1234, "init");
  Rng b(1234, "init");
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(1234, "shuffle");
  Rng d(1234, "init");
  bool all_equal = true;
  for (int i = 0; i < 16; ++i) all_equal = all_equal && (c.next_u64() == d.next_u64());
  CHECK_FALSE(all_equal);

  Rng e(1234, "x");
  for (int i = 0; i < 1000; ++i) {
    const double u = e.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(e.next_below(7) < 7);
  }
  CHECK_THROWS(e.next_below(0));
}

TEST_CASE("rng: truncated normal stays inside two sigma") {
  Rng rng(99, "init");
  for (int i = 0; i < 20000; ++i) {
    CHECK(std::fabs(rng.next_truncated_normal(0.02)) <= 0.04);
  }
}

TEST_CASE("matmul: identity, hand value, zero") {
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor ai = matmul(a, eye);
  CHECK(ai.data == a.data);

  const Tensor ones = Tensor::from({2, 1}, {1, 1});
  const Tensor prod = matmul(a, ones);
  CHECK(prod.at(0, 0) == 3.0);
  CHECK(prod.at(1, 0) == 7.0);

  const Tensor zero = Tensor::zeros({2, 2});
  const Tensor z = matmul(zero, a);
  for (double v : z.data) CHECK(v == 0.0);

  CHECK_THROWS(matmul(a, Tensor::zeros({3, 2})));
}

TEST_CASE("softmax: symmetry, hand values, shift invariance, row sums") {
  const Tensor two = softmax_rows(Tensor::from({1, 2}, {0, 0}));
  CHECK(two.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(two.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));

  const Tensor three = softmax_rows(Tensor::from({1, 3}, {1, 2, 3}));
  CHECK(three.at(0, 0) == doctest::Approx(0.09003057).epsilon(1e-5));
  CHECK(three.at(0, 1) == doctest::Approx(0.24472847).epsilon(1e-5));
  CHECK(three.at(0, 2) == doctest::Approx(0.66524096).epsilon(1e-5));

  Rng rng(7, "softmax");
  for (int rep = 0; rep < 50; ++rep) {
    const Tensor x = random_tensor(rng, 3, 5, 4.0);
    Tensor shifted = x;
    const double c = 10.0 * rng.next_double() - 5.0;
    for (std::size_t j = 0; j < 5; ++j) shifted.at(1, j) += c;
    const Tensor y = softmax_rows(x), ys = softmax_rows(shifted);
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(std::fabs(y.at(1, j) - ys.at(1, j)) <= 1e-12);
    }
    for (std::size_t i = 0; i < 3; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 5; ++j) sum += y.at(i, j);
      CHECK(std::fabs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("layer_norm: constant row, standardization, gamma zero") {
  const Tensor gamma = Tensor::full({4}, 1.0);
  const Tensor beta = Tensor::zeros({4});

  const Tensor constant = layer_norm(Tensor::full({1, 4}, 3.7), gamma, beta);
  for (double v : constant.data) CHECK(std::fabs(v) <= 1e-9);

  Rng rng(11, "ln");
  const Tensor x = random_tensor(rng, 5, 4, 3.0);
  const Tensor y = layer_norm(x, gamma, beta);
  for (std::size_t i = 0; i < 5; ++i) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 4; ++j) mean += y.at(i, j);
    mean /= 4.0;
    for (std::size_t j = 0; j < 4; ++j) {
      var += (y.at(i, j) - mean) * (y.at(i, j) - mean);
    }
    var /= 4.0;
    CHECK(std::fabs(mean) <= 1e-6);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }

  const Tensor beta2 = Tensor::from({4}, {1, 2, 3, 4});
  const Tensor only_beta = layer_norm(x, Tensor::zeros({4}), beta2);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(only_beta.at(i, j) == beta2[j]);
  }
}

TEST_CASE("gelu: fixed points and asymptote") {
  CHECK(gelu_scalar(0.0) == 0.0);
  CHECK(gelu_scalar(1.0) == doctest::Approx(0.84119).epsilon(1e-5));
  CHECK(std::fabs(gelu_scalar(10.0) - 10.0) <= 1e-6);
  CHECK(gelu_grad_scalar(0.0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("dropout: identity cases and Monte-Carlo mean") {
  Rng rng(5, "dropout");
  const Tensor x = random_tensor(rng, 4, 4);

  const Tensor p0 = dropout(x, 0.0, rng, true);
  CHECK(p0.data == x.data);
  const Tensor inference = dropout(x, 0.9, rng, false);
  CHECK(inference.data == x.data);
  CHECK_THROWS(dropout(x, 1.0, rng, true));

  Rng mc(17, "dropout");
  const Tensor ones = Tensor::full({1000, 1000}, 1.0);
  const Tensor dropped = dropout(ones, 0.5, mc, true);
  double mean = 0.0;
  for (double v : dropped.data) mean += v;
  mean /= static_cast<double>(dropped.numel());
  CHECK(mean >= 0.99);
  CHECK(mean <= 1.01);
}

TEST_CASE("matmul_grad matches finite differences") {
  Rng rng(21, "fd");
  for (int rep = 0; rep < 100; ++rep) {
    const Tensor a = random_tensor(rng, 4, 4);
    const Tensor b = random_tensor(rng, 4, 4);
    const Tensor dc = random_tensor(rng, 4, 4);
    Tensor da, db;
    matmul_grad(a, b, dc, da, db);

    for (std::size_t i = 0; i < a.data.size(); ++i) {
      Tensor ap = a, am = a;
      ap.data[i] += kFdStep;
      am.data[i] -= kFdStep;
      const double num =
          (weighted_sum(matmul(ap, b), dc) - weighted_sum(matmul(am, b), dc)) /
          (2 * kFdStep);
      CHECK(nfp::testing::close_mixed(da.data[i], num, kFdTol));
    }
    for (std::size_t i = 0; i < b.data.size(); ++i) {
      Tensor bp = b, bm = b;
      bp.data[i] += kFdStep;
      bm.data[i] -= kFdStep;
      const double num =
          (weighted_sum(matmul(a, bp), dc) - weighted_sum(matmul(a, bm), dc)) /
          (2 * kFdStep);
      CHECK(nfp::testing::close_mixed(db.data[i], num, kFdTol));
    }
  }
}

TEST_CASE("softmax_grad matches finite differences") {
  Rng rng(22, "fd");
  for (int rep = 0; rep < 100; ++rep) {
    const Tensor x = random_tensor(rng, 4, 4, 2.0);
    const Tensor dy = random_tensor(rng, 4, 4);
    const Tensor dx = softmax_grad(softmax_rows(x), dy);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      Tensor xp = x, xm = x;
      xp.data[i] += kFdStep;
      xm.data[i] -= kFdStep;
      const double num =
          (weighted_sum(softmax_rows(xp), dy) - weighted_sum(softmax_rows(xm), dy)) /
          (2 * kFdStep);
      CHECK(nfp::testing::close_mixed(dx.data[i], num, kFdTol));
    }
  }
}

TEST_CASE("softmax_grad of a constant row against uniform upstream is zero") {
  const Tensor y = softmax_rows(Tensor::full({1, 6}, 0.25));
  const Tensor dy = Tensor::full({1, 6}, 3.0);
  const Tensor dx = softmax_grad(y, dy);
  for (double v : dx.data) CHECK(std::fabs(v) <= 1e-15);
}

TEST_CASE("layer_norm_grad matches finite differences") {
  Rng rng(23, "fd");
  for (int rep = 0; rep < 100; ++rep) {
    const Tensor x = random_tensor(rng, 4, 4, 2.0);
    Tensor gamma = Tensor::zeros({4}), beta = Tensor::zeros({4});
    for (std::size_t j = 0; j < 4; ++j) {
      gamma[j] = 0.5 + rng.next_double();
      beta[j] = rng.next_double() - 0.5;
    }
    const Tensor dy = random_tensor(rng, 4, 4);
    Tensor dx, dgamma, dbeta;
    layer_norm_grad(x, gamma, 1e-5, dy, dx, dgamma, dbeta);

    for (std::size_t i = 0; i < x.data.size(); ++i) {
      Tensor xp = x, xm = x;
      xp.data[i] += kFdStep;
      xm.data[i] -= kFdStep;
      const double num = (weighted_sum(layer_norm(xp, gamma, beta), dy) -
                          weighted_sum(layer_norm(xm, gamma, beta), dy)) /
                         (2 * kFdStep);
      CHECK(nfp::testing::close_mixed(dx.data[i], num, kFdTol));
    }
    for (std::size_t j = 0; j < 4; ++j) {
      Tensor gp = gamma, gm = gamma;
      gp[j] += kFdStep;
      gm[j] -= kFdStep;
      const double num = (weighted_sum(layer_norm(x, gp, beta), dy) -
                          weighted_sum(layer_norm(x, gm, beta), dy)) /
                         (2 * kFdStep);
      CHECK(nfp::testing::close_mixed(dgamma[j], num, kFdTol));

      Tensor bp = beta, bm = beta;
      bp[j] += kFdStep;
      bm[j] -= kFdStep;
      const double numb = (weighted_sum(layer_norm(x, gamma, bp), dy) -
                           weighted_sum(layer_norm(x, gamma, bm), dy)) /
                          (2 * kFdStep);
      CHECK(nfp::testing::close_mixed(dbeta[j], numb, kFdTol));
    }
  }
}

TEST_CASE("gelu_grad matches finite differences") {
  Rng rng(24, "fd");
  for (int rep = 0; rep < 100; ++rep) {
    const Tensor x = random_tensor(rng, 4, 4, 3.0);
    const Tensor dy = random_tensor(rng, 4, 4);
    const Tensor dx = gelu_grad(x, dy);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      Tensor xp = x, xm = x;
      xp.data[i] += kFdStep;
      xm.data[i] -= kFdStep;
      const double num = (weighted_sum(gelu(xp), dy) - weighted_sum(gelu(xm), dy)) /
                         (2 * kFdStep);
      CHECK(nfp::testing::close_mixed(dx.data[i], num, kFdTol));
    }
  }
}

TEST_CASE("dropout_grad matches finite differences through a fixed mask") {
  Rng rng(25, "fd");
  const double p = 0.3;
  for (int rep = 0; rep < 100; ++rep) {
    const Tensor x = random_tensor(rng, 4, 4);
    const std::uint64_t seed = rng.next_u64();
    const auto apply = [&](const Tensor& in) {
      Rng r(seed, "mask");
      return dropout(in, p, r, true);
    };
    Tensor mask;
    {
      Rng r(seed, "mask");
      dropout(x, p, r, true, &mask);
    }
    const Tensor dy = random_tensor(rng, 4, 4);
    const Tensor dx = dropout_grad(dy, mask, p);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      Tensor xp = x, xm = x;
      xp.data[i] += kFdStep;
      xm.data[i] -= kFdStep;
      const double num =
          (weighted_sum(apply(xp), dy) - weighted_sum(apply(xm), dy)) / (2 * kFdStep);
      CHECK(nfp::testing::close_mixed(dx.data[i], num, kFdTol));
    }
  }
}

TEST_CASE("kernels surface NaN/Inf instead of propagating") {
  Tensor bad = Tensor::from({2, 2}, {1, 2, 3, 4});
  bad.data[2] = std::numeric_limits<double>::infinity();
  CHECK_THROWS(softmax_rows(bad));
  CHECK_THROWS(gelu(bad));
  const Tensor big = Tensor::full({2, 2}, 1e308);
  CHECK_THROWS(matmul(big, big));

  Tensor nan_t = Tensor::from({2, 2}, {1, 2, 3, 4});
  nan_t.data[0] = std::nan("");
  const Tensor gamma = Tensor::full({2}, 1.0), beta = Tensor::zeros({2});
  CHECK_THROWS(layer_norm(nan_t, gamma, beta));
}
