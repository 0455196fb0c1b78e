#include "htcan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "htcan/ops.hpp"

namespace htcan {

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

// Positive half-offsets in units of half an input sample, with the center
// tap (offset 0) first when the factor is odd.
struct HalfTaps {
  std::vector<std::int64_t> offset2;
  std::vector<double> weight;
  bool has_center = false;
};

HalfTaps half_taps(int s) {
  HalfTaps t;
  if (s % 2 == 1) {
    t.has_center = true;
    t.offset2.push_back(0);
    for (std::int64_t d2 = 2; d2 < 4 * s; d2 += 2) t.offset2.push_back(d2);
  } else {
    for (std::int64_t d2 = 1; d2 < 4 * s; d2 += 2) t.offset2.push_back(d2);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < t.offset2.size(); ++k) {
    const double w = cubic_kernel(static_cast<double>(t.offset2[k]) / (2.0 * s)) / s;
    t.weight.push_back(w);
    total += (t.has_center && k == 0) ? w : 2.0 * w;
  }
  for (double& w : t.weight) w /= total;
  return t;
}

// Downsamples one line of n samples, read through get(), into m outputs.
template <typename Get>
void resample_line(const HalfTaps& taps, int s, std::int64_t n, std::int64_t m, Get get,
                   double* out) {
  for (std::int64_t i = 0; i < m; ++i) {
    const std::int64_t u2 = (2 * i + 1) * s - 1;
    double acc = 0.0;
    for (std::size_t k = 0; k < taps.offset2.size(); ++k) {
      const std::int64_t d2 = taps.offset2[k];
      if (taps.has_center && k == 0) {
        acc += taps.weight[k] * get(std::clamp<std::int64_t>(u2 / 2, 0, n - 1));
      } else {
        const double lo = get(std::clamp<std::int64_t>((u2 - d2) / 2, 0, n - 1));
        const double hi = get(std::clamp<std::int64_t>((u2 + d2) / 2, 0, n - 1));
        acc += taps.weight[k] * (lo + hi);
      }
    }
    out[i] = acc;
  }
}

std::vector<double> gaussian_window() {
  std::vector<double> g(kSsimWindow);
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    g[i] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Mean SSIM of one plane pair, valid region only.
double ssim_plane(const double* a, const double* b, std::int64_t h, std::int64_t w) {
  static const std::vector<double> g = gaussian_window();
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const std::int64_t oh = h - kSsimWindow + 1;
  const std::int64_t ow = w - kSsimWindow + 1;
  double total = 0.0;
  for (std::int64_t y = 0; y < oh; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < kSsimWindow; ++i) {
        for (int j = 0; j < kSsimWindow; ++j) {
          const double wt = g[i] * g[j];
          const double va = a[(y + i) * w + x + j];
          const double vb = b[(y + i) * w + x + j];
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      }
      saa -= ma * ma;
      sbb -= mb * mb;
      sab -= ma * mb;
      total += ((2 * ma * mb + c1) * (2 * sab + c2)) / ((ma * ma + mb * mb + c1) * (saa + sbb + c2));
    }
  }
  return total / static_cast<double>(oh * ow);
}

template <typename T>
std::vector<double> as_double(const Tensor<T>& t) {
  return std::vector<double>(t.values().begin(), t.values().end());
}

std::string fmt(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fmt(const std::optional<double>& v, int digits) {
  return v ? fmt(*v, digits) : "NA";
}

std::optional<double> mean_of(const std::vector<EvalRow>& rows,
                              std::optional<double> EvalRow::*field) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.*field) {
      total += *(r.*field);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return total / static_cast<double>(n);
}

}  // namespace

double cubic_kernel(double x, double a) {
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
  return 0.0;
}

BicubicTaps bicubic_taps(int factor) {
  if (factor < 1) throw UsageError("bicubic: factor must be >= 1");
  const HalfTaps h = half_taps(factor);
  BicubicTaps out;
  for (std::size_t k = h.offset2.size(); k-- > 0;) {
    if (h.has_center && k == 0) continue;
    out.offsets.push_back(-static_cast<double>(h.offset2[k]) / 2.0);
    out.weights.push_back(h.weight[k]);
  }
  for (std::size_t k = 0; k < h.offset2.size(); ++k) {
    out.offsets.push_back(static_cast<double>(h.offset2[k]) / 2.0);
    out.weights.push_back(h.weight[k]);
  }
  return out;
}

template <typename T>
Tensor<T> bicubic_downsample(const Tensor<T>& image, int factor) {
  const Shape& s = image.shape();
  if (factor < 1) throw UsageError("bicubic_downsample: factor must be >= 1");
  if (s.h() % factor != 0 || s.w() % factor != 0) {
    throw ShapeError("bicubic_downsample: " + s.str() + " not divisible by factor " +
                     std::to_string(factor));
  }
  if (factor == 1) return image.clone();
  const HalfTaps taps = half_taps(factor);
  const std::int64_t oh = s.h() / factor;
  const std::int64_t ow = s.w() / factor;
  const std::int64_t planes = s.n() * s.c();
  Tensor<T> out(Shape{s.n(), s.c(), oh, ow});
  auto src = image.values();
  auto dst = out.values();
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    std::vector<double> rows(static_cast<std::size_t>(s.h() * ow));
    const T* in = src.data() + p * s.h() * s.w();
    for (std::int64_t y = 0; y < s.h(); ++y) {
      resample_line(
          taps, factor, s.w(), ow, [&](std::int64_t x) { return static_cast<double>(in[y * s.w() + x]); },
          rows.data() + y * ow);
    }
    std::vector<double> col(static_cast<std::size_t>(oh));
    for (std::int64_t x = 0; x < ow; ++x) {
      resample_line(
          taps, factor, s.h(), oh, [&](std::int64_t y) { return rows[y * ow + x]; }, col.data());
      for (std::int64_t y = 0; y < oh; ++y) {
        dst[static_cast<std::size_t>((p * oh + y) * ow + x)] = static_cast<T>(col[y]);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> modcrop(const Tensor<T>& image, int factor) {
  if (factor < 1) throw UsageError("modcrop: factor must be >= 1");
  const Shape& s = image.shape();
  const std::int64_t h = s.h() - s.h() % factor;
  const std::int64_t w = s.w() - s.w() % factor;
  if (h == 0 || w == 0) throw ShapeError("modcrop: " + s.str() + " smaller than the factor");
  if (h == s.h() && w == s.w()) return image;
  NoTapeScope<T> no_tape;
  return crop(image, 0, 0, h, w);
}

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, PsnrMode mode) {
  require_same_shape(a, b, "psnr");
  const Shape& s = a.shape();
  if (s.numel() == 0) throw ShapeError("psnr: empty images");
  auto av = a.values();
  auto bv = b.values();
  auto from_mse = [](double mse) {
    return mse == 0.0 ? std::numeric_limits<double>::infinity() : -10.0 * std::log10(mse);
  };
  if (mode == PsnrMode::joint) {
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
      acc += d * d;
    }
    return from_mse(acc / static_cast<double>(av.size()));
  }
  const std::int64_t hw = s.h() * s.w();
  double total = 0.0;
  for (std::int64_t c = 0; c < s.c(); ++c) {
    double acc = 0.0;
    for (std::int64_t n = 0; n < s.n(); ++n) {
      for (std::int64_t i = 0; i < hw; ++i) {
        const std::size_t k = static_cast<std::size_t>((n * s.c() + c) * hw + i);
        const double d = static_cast<double>(av[k]) - static_cast<double>(bv[k]);
        acc += d * d;
      }
    }
    total += from_mse(acc / static_cast<double>(s.n() * hw));
  }
  return total / static_cast<double>(s.c());
}

template <typename T>
Tensor<double> to_luma(const Tensor<T>& rgb) {
  const Shape& s = rgb.shape();
  if (s.c() == 1) return rgb.template cast<double>();
  if (s.c() != 3) throw ShapeError("to_luma: expected 1 or 3 channels, got " + s.str());
  Tensor<double> y(Shape{s.n(), 1, s.h(), s.w()});
  for (std::int64_t n = 0; n < s.n(); ++n) {
    for (std::int64_t i = 0; i < s.h(); ++i) {
      for (std::int64_t j = 0; j < s.w(); ++j) {
        y(n, 0, i, j) = 0.299 * static_cast<double>(rgb(n, 0, i, j)) +
                        0.587 * static_cast<double>(rgb(n, 1, i, j)) +
                        0.114 * static_cast<double>(rgb(n, 2, i, j));
      }
    }
  }
  return y;
}

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, SsimMode mode) {
  require_same_shape(a, b, "ssim");
  const Shape& s = a.shape();
  if (s.h() < kSsimWindow || s.w() < kSsimWindow) {
    throw UsageError("ssim: image " + s.str() + " smaller than the 11x11 window");
  }
  const bool luma = mode == SsimMode::luma && s.c() == 3;
  const std::vector<double> av = luma ? as_double(to_luma(a)) : as_double(a);
  const std::vector<double> bv = luma ? as_double(to_luma(b)) : as_double(b);
  const std::int64_t planes = luma ? s.n() : s.n() * s.c();
  const std::int64_t hw = s.h() * s.w();
  double total = 0.0;
  for (std::int64_t p = 0; p < planes; ++p) {
    total += ssim_plane(av.data() + p * hw, bv.data() + p * hw, s.h(), s.w());
  }
  return total / static_cast<double>(planes);
}

template <typename T>
EvalReport evaluate_protocol(const std::vector<NamedPair<T>>& sr,
                             const std::vector<NamedPair<T>>& gt, const EvalOptions& opts) {
  std::map<std::string, const StereoPair<T>*> by_name;
  for (const auto& p : sr) {
    if (!by_name.emplace(p.name, &p.pair).second) {
      throw UsageError("evaluate: duplicate SR name '" + p.name + "'");
    }
  }
  if (sr.size() != gt.size()) {
    throw UsageError("evaluate: " + std::to_string(sr.size()) + " SR pairs but " +
                     std::to_string(gt.size()) + " ground-truth pairs");
  }
  std::vector<const NamedPair<T>*> ordered;
  for (const auto& p : gt) ordered.push_back(&p);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* x, const auto* y) { return x->name < y->name; });

  EvalReport report;
  for (const NamedPair<T>* g : ordered) {
    auto it = by_name.find(g->name);
    if (it == by_name.end()) throw UsageError("evaluate: no SR pair named '" + g->name + "'");
    const StereoPair<T>& s = *it->second;
    s.validate("evaluate");
    g->pair.validate("evaluate");
    if (s.shape() != g->pair.shape()) {
      throw ShapeError("evaluate: '" + g->name + "' SR " + s.shape().str() + " vs GT " +
                       g->pair.shape().str());
    }
    EvalRow row;
    row.name = g->name;
    row.pair_psnr = 0.5 * (psnr(s.left, g->pair.left, opts.psnr_mode) +
                           psnr(s.right, g->pair.right, opts.psnr_mode));
    row.pair_ssim = 0.5 * (ssim(s.left, g->pair.left, opts.ssim_mode) +
                           ssim(s.right, g->pair.right, opts.ssim_mode));
    const Shape& sh = s.shape();
    if (sh.w() > opts.crop_left) {
      NoTapeScope<T> no_tape;
      const std::int64_t w = sh.w() - opts.crop_left;
      const Tensor<T> sl = crop(s.left, 0, opts.crop_left, sh.h(), w);
      const Tensor<T> gl = crop(g->pair.left, 0, opts.crop_left, sh.h(), w);
      row.left_psnr = psnr(sl, gl, opts.psnr_mode);
      if (w >= kSsimWindow) row.left_ssim = ssim(sl, gl, opts.ssim_mode);
    }
    report.rows.push_back(row);
  }
  if (report.rows.empty()) throw UsageError("evaluate: no image pairs");
  report.mean_left_psnr = mean_of(report.rows, &EvalRow::left_psnr);
  report.mean_left_ssim = mean_of(report.rows, &EvalRow::left_ssim);
  for (const auto& r : report.rows) {
    report.mean_pair_psnr += r.pair_psnr;
    report.mean_pair_ssim += r.pair_ssim;
  }
  report.mean_pair_psnr /= static_cast<double>(report.rows.size());
  report.mean_pair_ssim /= static_cast<double>(report.rows.size());
  return report;
}

std::string EvalReport::csv() const {
  std::ostringstream os;
  os << "name,left_psnr,left_ssim,pair_psnr,pair_ssim\n";
  for (const auto& r : rows) {
    os << r.name << ',' << fmt(r.left_psnr, 6) << ',' << fmt(r.left_ssim, 8) << ','
       << fmt(r.pair_psnr, 6) << ',' << fmt(r.pair_ssim, 8) << '\n';
  }
  os << "mean," << fmt(mean_left_psnr, 6) << ',' << fmt(mean_left_ssim, 8) << ','
     << fmt(mean_pair_psnr, 6) << ',' << fmt(mean_pair_ssim, 8) << '\n';
  return os.str();
}

std::string EvalReport::table() const {
  std::size_t name_w = 8;
  for (const auto& r : rows) name_w = std::max(name_w, r.name.size());
  char buf[256];
  std::ostringstream os;
  std::snprintf(buf, sizeof buf, "%-*s | %-19s | %-19s\n", static_cast<int>(name_w), "",
                "Left", "(Left+Right)/2");
  os << buf;
  std::snprintf(buf, sizeof buf, "%-*s | %8s %10s | %8s %10s\n", static_cast<int>(name_w), "name",
                "PSNR", "SSIM", "PSNR", "SSIM");
  os << buf << std::string(name_w, '-') << "-+-" << std::string(19, '-') << "-+-"
     << std::string(19, '-') << '\n';
  auto line = [&](const std::string& name, const std::optional<double>& lp,
                  const std::optional<double>& ls, double pp, double ps) {
    std::snprintf(buf, sizeof buf, "%-*s | %8s %10s | %8s %10s\n", static_cast<int>(name_w),
                  name.c_str(), fmt(lp, 2).c_str(), fmt(ls, 4).c_str(), fmt(pp, 2).c_str(),
                  fmt(ps, 4).c_str());
    os << buf;
  };
  for (const auto& r : rows) line(r.name, r.left_psnr, r.left_ssim, r.pair_psnr, r.pair_ssim);
  line("mean", mean_left_psnr, mean_left_ssim, mean_pair_psnr, mean_pair_ssim);
  return os.str();
}

#define HTCAN_INSTANTIATE(T)                                                                  \
  template Tensor<T> bicubic_downsample(const Tensor<T>&, int);                               \
  template Tensor<T> modcrop(const Tensor<T>&, int);                                          \
  template double psnr(const Tensor<T>&, const Tensor<T>&, PsnrMode);                         \
  template double ssim(const Tensor<T>&, const Tensor<T>&, SsimMode);                         \
  template Tensor<double> to_luma(const Tensor<T>&);                                          \
  template EvalReport evaluate_protocol(const std::vector<NamedPair<T>>&,                     \
                                        const std::vector<NamedPair<T>>&, const EvalOptions&);

HTCAN_INSTANTIATE(float)
HTCAN_INSTANTIATE(double)

#undef HTCAN_INSTANTIATE

}  // namespace htcan
