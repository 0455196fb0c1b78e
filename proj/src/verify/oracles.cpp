#include "htcan/verify/oracles.hpp"

#include <cmath>
#include <limits>

namespace htcan::verify {

namespace {

double at(const Tensor<double>& t, std::int64_t n, std::int64_t c, std::int64_t h,
          std::int64_t w) {
  return t(n, c, h, w);
}

// Token-wise affine map y = W x + b with W stored (out, in, 1, 1).
std::vector<double> affine(const std::vector<double>& x, const Tensor<double>& w,
                           const Tensor<double>& b) {
  const std::int64_t out = w.shape().n();
  std::vector<double> y(static_cast<std::size_t>(out));
  for (std::int64_t o = 0; o < out; ++o) {
    double acc = b.values()[static_cast<std::size_t>(o)];
    for (std::size_t k = 0; k < x.size(); ++k) acc += at(w, o, static_cast<std::int64_t>(k), 0, 0) * x[k];
    y[static_cast<std::size_t>(o)] = acc;
  }
  return y;
}

std::vector<double> softmax(std::vector<double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  double total = 0.0;
  for (double& x : v) {
    x = std::exp(x - m);
    total += x;
  }
  for (double& x : v) x /= total;
  return v;
}

// Channel vector at (n, :, h, w), layer-normalized and affinely mapped.
std::vector<double> normed(const Tensor<double>& x, std::int64_t n, std::int64_t h, std::int64_t w,
                           const Tensor<double>& g, const Tensor<double>& b, double eps) {
  const std::int64_t C = x.shape().c();
  double mean = 0.0;
  for (std::int64_t c = 0; c < C; ++c) mean += x(n, c, h, w);
  mean /= static_cast<double>(C);
  double var = 0.0;
  for (std::int64_t c = 0; c < C; ++c) var += (x(n, c, h, w) - mean) * (x(n, c, h, w) - mean);
  var /= static_cast<double>(C);
  std::vector<double> y(static_cast<std::size_t>(C));
  for (std::int64_t c = 0; c < C; ++c) {
    y[static_cast<std::size_t>(c)] =
        (x(n, c, h, w) - mean) / std::sqrt(var + eps) * g.values()[static_cast<std::size_t>(c)] +
        b.values()[static_cast<std::size_t>(c)];
  }
  return y;
}

std::vector<double> channels_at(const Tensor<double>& x, std::int64_t n, std::int64_t h,
                                std::int64_t w) {
  std::vector<double> v(static_cast<std::size_t>(x.shape().c()));
  for (std::int64_t c = 0; c < x.shape().c(); ++c) v[static_cast<std::size_t>(c)] = x(n, c, h, w);
  return v;
}

std::int64_t mirror(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

Tensor<double> conv2d_oracle(const Tensor<double>& input, const Tensor<double>& weight,
                             const Tensor<double>& bias, int stride, int padding, int groups) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  const std::int64_t oh = (is.h() + 2 * padding - ws.h()) / stride + 1;
  const std::int64_t ow = (is.w() + 2 * padding - ws.w()) / stride + 1;
  const std::int64_t out_per_group = ws.n() / groups;
  Tensor<double> out(Shape{is.n(), ws.n(), oh, ow});
  for (std::int64_t n = 0; n < is.n(); ++n) {
    for (std::int64_t oc = 0; oc < ws.n(); ++oc) {
      const std::int64_t g = oc / out_per_group;
      for (std::int64_t y = 0; y < oh; ++y) {
        for (std::int64_t x = 0; x < ow; ++x) {
          double acc = bias.defined() ? bias.values()[static_cast<std::size_t>(oc)] : 0.0;
          for (std::int64_t ic = 0; ic < ws.c(); ++ic) {
            for (std::int64_t ky = 0; ky < ws.h(); ++ky) {
              for (std::int64_t kx = 0; kx < ws.w(); ++kx) {
                const std::int64_t sy = y * stride - padding + ky;
                const std::int64_t sx = x * stride - padding + kx;
                if (sy < 0 || sy >= is.h() || sx < 0 || sx >= is.w()) continue;
                acc += weight(oc, ic, ky, kx) * input(n, g * ws.c() + ic, sy, sx);
              }
            }
          }
          out(n, oc, y, x) = acc;
        }
      }
    }
  }
  return out;
}

Tensor<double> matmul_oracle(const Tensor<double>& a, const Tensor<double>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  Tensor<double> out(Shape{as.n(), as.c(), as.h(), bs.w()});
  for (std::int64_t n = 0; n < as.n(); ++n) {
    for (std::int64_t c = 0; c < as.c(); ++c) {
      for (std::int64_t i = 0; i < as.h(); ++i) {
        for (std::int64_t j = 0; j < bs.w(); ++j) {
          double acc = 0.0;
          for (std::int64_t k = 0; k < as.w(); ++k) acc += a(n, c, i, k) * b(n, c, k, j);
          out(n, c, i, j) = acc;
        }
      }
    }
  }
  return out;
}

Tensor<double> attention_oracle(const Tensor<double>& tokens, const AttentionWeights<double>& w,
                                int heads, const Tensor<double>& bias) {
  const Shape& s = tokens.shape();
  const std::int64_t T = s.h();
  const std::int64_t C = s.w();
  const std::int64_t d = C / heads;
  Tensor<double> out(s);
  for (std::int64_t b = 0; b < s.n(); ++b) {
    std::vector<std::vector<double>> q, k, v;
    for (std::int64_t t = 0; t < T; ++t) {
      std::vector<double> x(static_cast<std::size_t>(C));
      for (std::int64_t c = 0; c < C; ++c) x[static_cast<std::size_t>(c)] = tokens(b, 0, t, c);
      q.push_back(affine(x, w.q_w, w.q_b));
      k.push_back(affine(x, w.k_w, w.k_b));
      v.push_back(affine(x, w.v_w, w.v_b));
    }
    for (std::int64_t t = 0; t < T; ++t) {
      std::vector<double> mixed(static_cast<std::size_t>(C), 0.0);
      for (std::int64_t hd = 0; hd < heads; ++hd) {
        std::vector<double> logits(static_cast<std::size_t>(T));
        for (std::int64_t u = 0; u < T; ++u) {
          double dot = 0.0;
          for (std::int64_t j = 0; j < d; ++j) {
            dot += q[t][static_cast<std::size_t>(hd * d + j)] * k[u][static_cast<std::size_t>(hd * d + j)];
          }
          logits[static_cast<std::size_t>(u)] =
              dot / std::sqrt(static_cast<double>(d)) + (bias.defined() ? bias(0, hd, t, u) : 0.0);
        }
        const std::vector<double> p = softmax(logits);
        for (std::int64_t j = 0; j < d; ++j) {
          double acc = 0.0;
          for (std::int64_t u = 0; u < T; ++u) acc += p[static_cast<std::size_t>(u)] * v[u][static_cast<std::size_t>(hd * d + j)];
          mixed[static_cast<std::size_t>(hd * d + j)] = acc;
        }
      }
      const std::vector<double> y = affine(mixed, w.proj_w, w.proj_b);
      for (std::int64_t c = 0; c < C; ++c) out(b, 0, t, c) = y[static_cast<std::size_t>(c)];
    }
  }
  return out;
}

StereoPair<double> scam_oracle(const Tensor<double>& fl, const Tensor<double>& fr,
                               const ScamWeights<double>& w, double eps) {
  const Shape& s = fl.shape();
  const std::int64_t C = s.c();
  const std::int64_t W = s.w();
  StereoPair<double> out{fl.clone(), fr.clone()};
  for (std::int64_t n = 0; n < s.n(); ++n) {
    for (std::int64_t h = 0; h < s.h(); ++h) {
      std::vector<std::vector<double>> q, k, vl, vr;
      for (std::int64_t x = 0; x < W; ++x) {
        q.push_back(affine(normed(fl, n, h, x, w.norm_l_w, w.norm_l_b, eps), w.l_proj1_w, w.l_proj1_b));
        k.push_back(affine(normed(fr, n, h, x, w.norm_r_w, w.norm_r_b, eps), w.r_proj1_w, w.r_proj1_b));
        vl.push_back(affine(channels_at(fl, n, h, x), w.l_proj2_w, w.l_proj2_b));
        vr.push_back(affine(channels_at(fr, n, h, x), w.r_proj2_w, w.r_proj2_b));
      }
      std::vector<std::vector<double>> score(static_cast<std::size_t>(W),
                                             std::vector<double>(static_cast<std::size_t>(W)));
      for (std::int64_t i = 0; i < W; ++i) {
        for (std::int64_t j = 0; j < W; ++j) {
          double dot = 0.0;
          for (std::int64_t c = 0; c < C; ++c) dot += q[i][static_cast<std::size_t>(c)] * k[j][static_cast<std::size_t>(c)];
          score[i][j] = dot / std::sqrt(static_cast<double>(C));
        }
      }
      for (std::int64_t i = 0; i < W; ++i) {
        const std::vector<double> to_left = softmax(score[i]);
        std::vector<double> column(static_cast<std::size_t>(W));
        for (std::int64_t j = 0; j < W; ++j) column[static_cast<std::size_t>(j)] = score[j][i];
        const std::vector<double> to_right = softmax(column);
        for (std::int64_t c = 0; c < C; ++c) {
          double ul = 0.0, ur = 0.0;
          for (std::int64_t j = 0; j < W; ++j) {
            ul += to_left[static_cast<std::size_t>(j)] * vr[j][static_cast<std::size_t>(c)];
            ur += to_right[static_cast<std::size_t>(j)] * vl[j][static_cast<std::size_t>(c)];
          }
          out.left(n, c, h, i) += w.beta.values()[static_cast<std::size_t>(c)] * ul;
          out.right(n, c, h, i) += w.gamma.values()[static_cast<std::size_t>(c)] * ur;
        }
      }
    }
  }
  return out;
}

double ssim_oracle(const Tensor<double>& a, const Tensor<double>& b) {
  auto gray = [](const Tensor<double>& t, std::int64_t y, std::int64_t x) {
    if (t.shape().c() == 1) return t(0, 0, y, x);
    return 0.299 * t(0, 0, y, x) + 0.587 * t(0, 1, y, x) + 0.114 * t(0, 2, y, x);
  };
  double kernel[11][11];
  double total = 0.0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      kernel[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2.0 * 1.5 * 1.5));
      total += kernel[i][j];
    }
  }
  for (auto& row : kernel) {
    for (double& v : row) v /= total;
  }
  const double c1 = 1e-4;
  const double c2 = 9e-4;
  const std::int64_t H = a.shape().h();
  const std::int64_t W = a.shape().w();
  double sum = 0.0;
  std::int64_t count = 0;
  for (std::int64_t y = 0; y + 11 <= H; ++y) {
    for (std::int64_t x = 0; x + 11 <= W; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          ma += kernel[i][j] * gray(a, y + i, x + j);
          mb += kernel[i][j] * gray(b, y + i, x + j);
        }
      }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < 11; ++i) {
        for (int j = 0; j < 11; ++j) {
          const double da = gray(a, y + i, x + j) - ma;
          const double db = gray(b, y + i, x + j) - mb;
          va += kernel[i][j] * da * da;
          vb += kernel[i][j] * db * db;
          cov += kernel[i][j] * da * db;
        }
      }
      sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

std::vector<double> adam_oracle(std::vector<double> p, const std::vector<std::vector<double>>& grads,
                                const OptimConfig& cfg, double lr) {
  std::vector<double> m(p.size(), 0.0), v(p.size(), 0.0);
  double b1t = 1.0, b2t = 1.0;
  for (const auto& g0 : grads) {
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double g = g0[i];
      if (cfg.kind == OptimKind::adamw) {
        p[i] *= 1.0 - lr * cfg.weight_decay;
      } else {
        g += cfg.weight_decay * p[i];
      }
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g * g;
      p[i] -= lr * (m[i] / (1 - b1t)) / (std::sqrt(v[i] / (1 - b2t)) + cfg.eps);
    }
  }
  return p;
}

Tensor<double> reflect_pad_oracle(const Tensor<double>& x, int left, int right, int top,
                                  int bottom) {
  const Shape& s = x.shape();
  Tensor<double> out(Shape{s.n(), s.c(), s.h() + top + bottom, s.w() + left + right});
  for (std::int64_t n = 0; n < s.n(); ++n) {
    for (std::int64_t c = 0; c < s.c(); ++c) {
      for (std::int64_t y = 0; y < out.shape().h(); ++y) {
        for (std::int64_t xx = 0; xx < out.shape().w(); ++xx) {
          out(n, c, y, xx) = x(n, c, mirror(y - top, s.h()), mirror(xx - left, s.w()));
        }
      }
    }
  }
  return out;
}

Tensor<double> multi_patch_oracle(const Tensor<double>& image, std::int64_t y, std::int64_t x,
                                  int p) {
  const Tensor<double> padded = reflect_pad_oracle(image, p, p, p, p);
  const Shape& s = image.shape();
  Tensor<double> out(Shape{s.n(), 9 * s.c(), p, p});
  for (std::int64_t n = 0; n < s.n(); ++n) {
    for (int bi = 0; bi < 3; ++bi) {
      for (int bj = 0; bj < 3; ++bj) {
        for (std::int64_t c = 0; c < s.c(); ++c) {
          for (std::int64_t i = 0; i < p; ++i) {
            for (std::int64_t j = 0; j < p; ++j) {
              // Region origin in padded coordinates is (y, x): the center
              // patch starts at (y + p, x + p).
              out(n, (bi * 3 + bj) * s.c() + c, i, j) = padded(n, c, y + bi * p + i, x + bj * p + j);
            }
          }
        }
      }
    }
  }
  return out;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  }
  return m;
}

}  // namespace htcan::verify
