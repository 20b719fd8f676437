#include "nfp/kernels.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nfp {

namespace {

void require_2d(const Tensor& t, const char* name) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(name) + " must be 2-D, got " +
                                t.shape_string());
  }
}

constexpr double kGeluC = 0.044715;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul: a");
  require_2d(b, "matmul: b");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                a.shape_string() + " vs " + b.shape_string());
  }
  Tensor c = Tensor::zeros({m, n});
  // i-k-j order: for every output entry the sum over k runs in ascending
  // order, which keeps results bit-reproducible.
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data.data() + i * k;
    double* crow = c.data.data() + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b.data.data() + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  check_finite(c, "matmul output");
  return c;
}

Tensor softmax_rows(const Tensor& x) {
  require_2d(x, "softmax: x");
  check_finite(x, "softmax input");
  const std::size_t r = x.rows(), c = x.cols();
  if (c == 0) throw std::invalid_argument("softmax: empty rows");
  Tensor y = Tensor::zeros({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(x.at(i, j) - mx);
      y.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < c; ++j) y.at(i, j) /= sum;
  }
  check_finite(y, "softmax output");
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  require_2d(x, "layer_norm: x");
  const std::size_t r = x.rows(), h = x.cols();
  if (gamma.numel() != h || beta.numel() != h) {
    throw std::invalid_argument("layer_norm: gamma/beta length must equal cols");
  }
  Tensor y = Tensor::zeros({r, h});
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < h; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      const double d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(h);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < h; ++j) {
      y.at(i, j) = gamma[j] * (x.at(i, j) - mean) * inv + beta[j];
    }
  }
  check_finite(y, "layer_norm output");
  return y;
}

double gelu_scalar(double x) {
  const double u = std::numbers::sqrt2 / std::sqrt(std::numbers::pi) *
                   (x + kGeluC * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad_scalar(double x) {
  const double a = std::numbers::sqrt2 / std::sqrt(std::numbers::pi);
  const double u = a * (x + kGeluC * x * x * x);
  const double t = std::tanh(u);
  const double sech2 = 1.0 - t * t;
  return 0.5 * (1.0 + t) + 0.5 * x * sech2 * a * (1.0 + 3.0 * kGeluC * x * x);
}

Tensor gelu(const Tensor& x) {
  check_finite(x, "gelu input");
  Tensor y = x;
  for (double& v : y.data) v = gelu_scalar(v);
  check_finite(y, "gelu output");
  return y;
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training,
               Tensor* mask_out) {
  if (p < 0.0 || p >= 1.0) {
    throw std::invalid_argument("dropout: p must be in [0, 1)");
  }
  if (!training || p == 0.0) {
    if (mask_out) *mask_out = Tensor::full(x.shape, 1.0);
    return x;
  }
  Tensor y = x;
  Tensor mask = Tensor::full(x.shape, 1.0);
  const double scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    if (rng.next_double() < p) {
      mask.data[i] = 0.0;
      y.data[i] = 0.0;
    } else {
      y.data[i] *= scale;
    }
  }
  check_finite(y, "dropout output");
  if (mask_out) *mask_out = std::move(mask);
  return y;
}

void matmul_grad(const Tensor& a, const Tensor& b, const Tensor& dc,
                 Tensor& da, Tensor& db) {
  require_2d(a, "matmul_grad: a");
  require_2d(b, "matmul_grad: b");
  require_2d(dc, "matmul_grad: dc");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k || dc.rows() != m || dc.cols() != n) {
    throw std::invalid_argument("matmul_grad: context shapes disagree");
  }
  // dA = dC * B^T
  da = Tensor::zeros({m, k});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double g = dc.at(i, j);
      for (std::size_t kk = 0; kk < k; ++kk) da.at(i, kk) += g * b.at(kk, j);
    }
  }
  // dB = A^T * dC
  db = Tensor::zeros({k, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = a.at(i, kk);
      for (std::size_t j = 0; j < n; ++j) db.at(kk, j) += av * dc.at(i, j);
    }
  }
}

Tensor softmax_grad(const Tensor& y, const Tensor& dy) {
  require_2d(y, "softmax_grad: y");
  if (!y.same_shape(dy)) {
    throw std::invalid_argument("softmax_grad: context shapes disagree");
  }
  const std::size_t r = y.rows(), c = y.cols();
  Tensor dx = Tensor::zeros({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < c; ++j) dot += dy.at(i, j) * y.at(i, j);
    for (std::size_t j = 0; j < c; ++j) {
      dx.at(i, j) = y.at(i, j) * (dy.at(i, j) - dot);
    }
  }
  return dx;
}

void layer_norm_grad(const Tensor& x, const Tensor& gamma, double eps,
                     const Tensor& dy, Tensor& dx, Tensor& dgamma,
                     Tensor& dbeta) {
  require_2d(x, "layer_norm_grad: x");
  if (!x.same_shape(dy) || gamma.numel() != x.cols()) {
    throw std::invalid_argument("layer_norm_grad: context shapes disagree");
  }
  const std::size_t r = x.rows(), h = x.cols();
  const double hn = static_cast<double>(h);
  dx = Tensor::zeros({r, h});
  dgamma = Tensor::zeros({h});
  dbeta = Tensor::zeros({h});
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < h; ++j) mean += x.at(i, j);
    mean /= hn;
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      const double d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= hn;
    const double inv = 1.0 / std::sqrt(var + eps);

    // dyg = dy * gamma; two row reductions feed the standard LN backward.
    double sum_dyg = 0.0, sum_dyg_xhat = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      const double xhat = (x.at(i, j) - mean) * inv;
      const double dyg = dy.at(i, j) * gamma[j];
      sum_dyg += dyg;
      sum_dyg_xhat += dyg * xhat;
      dgamma[j] += dy.at(i, j) * xhat;
      dbeta[j] += dy.at(i, j);
    }
    for (std::size_t j = 0; j < h; ++j) {
      const double xhat = (x.at(i, j) - mean) * inv;
      const double dyg = dy.at(i, j) * gamma[j];
      dx.at(i, j) = inv * (dyg - sum_dyg / hn - xhat * sum_dyg_xhat / hn);
    }
  }
}

Tensor gelu_grad(const Tensor& x, const Tensor& dy) {
  if (!x.same_shape(dy)) {
    throw std::invalid_argument("gelu_grad: context shapes disagree");
  }
  Tensor dx = x;
  for (std::size_t i = 0; i < dx.data.size(); ++i) {
    dx.data[i] = gelu_grad_scalar(x.data[i]) * dy.data[i];
  }
  return dx;
}

Tensor dropout_grad(const Tensor& dy, const Tensor& mask, double p) {
  if (p < 0.0 || p >= 1.0) {
    throw std::invalid_argument("dropout_grad: p must be in [0, 1)");
  }
  if (!dy.same_shape(mask)) {
    throw std::invalid_argument("dropout_grad: context shapes disagree");
  }
  Tensor dx = dy;
  const double scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < dx.data.size(); ++i) {
    dx.data[i] = dy.data[i] * mask.data[i] * scale;
  }
  return dx;
}

}  // namespace nfp
