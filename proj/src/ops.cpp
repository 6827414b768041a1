#include "probsal/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "probsal/error.hpp"

namespace probsal::ag {

namespace {

void check_same(const Var& a, const Var& b, const char* op) {
  require(a && b, std::string(op) + ": null operand");
  require(a->shape() == b->shape(), std::string(op) + ": shape mismatch " + a->shape().str() + " vs " +
                                        b->shape().str());
}

template <class F>
Var unary(const Var& a, F f, std::function<double(double x, double y)> dydx) {
  const Tensor& x = a->value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = f(x[i]);
  return make_node(std::move(y), {a}, [a, dydx](const Tensor& out, const Tensor& g) {
    if (!a->requires_grad()) return;
    const Tensor& x = a->value();
    double* ga = a->grad_data();
    for (std::size_t i = 0; i < x.numel(); ++i) ga[i] += g[i] * dydx(x[i], out[i]);
  });
}

double softplus(double t) {
  if (std::isinf(t)) return t > 0 ? t : 0.0;
  return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

double sigmoid_scalar(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// Caffe-style column buffer: rows (c, ky, kx), columns output pixels.
void im2col(const double* in, int channels, int h, int w, int k, const ConvParams& p, int oh, int ow,
            double* col) {
  const std::size_t ncols = std::size_t(oh) * ow;
  for (int c = 0; c < channels; ++c) {
    const double* plane = in + std::size_t(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + (std::size_t(c) * k * k + ky * k + kx) * ncols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * p.stride - p.pad + ky * p.dilation;
          double* dst = row + std::size_t(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, 0.0);
            continue;
          }
          const double* src = plane + std::size_t(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * p.stride - p.pad + kx * p.dilation;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* col, int channels, int h, int w, int k, const ConvParams& p, int oh, int ow,
            double* out) {
  const std::size_t ncols = std::size_t(oh) * ow;
  for (int c = 0; c < channels; ++c) {
    double* plane = out + std::size_t(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + (std::size_t(c) * k * k + ky * k + kx) * ncols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * p.stride - p.pad + ky * p.dilation;
          if (iy < 0 || iy >= h) continue;
          const double* src = row + std::size_t(oy) * ow;
          double* dst = plane + std::size_t(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * p.stride - p.pad + kx * p.dilation;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

struct BilinearTap {
  int i0, i1;
  double t;
};

std::vector<BilinearTap> bilinear_taps(int in, int out) {
  std::vector<BilinearTap> taps(out);
  const double scale = out > 1 ? double(in - 1) / double(out - 1) : 0.0;
  for (int o = 0; o < out; ++o) {
    const double s = o * scale;
    int i0 = std::min(int(std::floor(s)), in - 1);
    int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, s - i0};
  }
  return taps;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same(a, b, "add");
  Tensor y = a->value();
  y += b->value();
  return make_node(std::move(y), {a, b}, [a, b](const Tensor&, const Tensor& g) {
    if (a->requires_grad()) a->accumulate_grad(g);
    if (b->requires_grad()) b->accumulate_grad(g);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same(a, b, "sub");
  Tensor y = a->value();
  const Tensor& bv = b->value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] -= bv[i];
  return make_node(std::move(y), {a, b}, [a, b](const Tensor&, const Tensor& g) {
    if (a->requires_grad()) a->accumulate_grad(g);
    if (b->requires_grad()) {
      double* gb = b->grad_data();
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same(a, b, "mul");
  const Tensor& av = a->value();
  const Tensor& bv = b->value();
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = av[i] * bv[i];
  return make_node(std::move(y), {a, b}, [a, b](const Tensor&, const Tensor& g) {
    const Tensor& av = a->value();
    const Tensor& bv = b->value();
    if (a->requires_grad()) {
      double* ga = a->grad_data();
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
    }
    if (b->requires_grad()) {
      double* gb = b->grad_data();
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var div(const Var& a, const Var& b) {
  check_same(a, b, "div");
  const Tensor& av = a->value();
  const Tensor& bv = b->value();
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = av[i] / bv[i];
  return make_node(std::move(y), {a, b}, [a, b](const Tensor& out, const Tensor& g) {
    const Tensor& bv = b->value();
    if (a->requires_grad()) {
      double* ga = a->grad_data();
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] / bv[i];
    }
    if (b->requires_grad()) {
      double* gb = b->grad_data();
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i] * out[i] / bv[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var sigmoid(const Var& a) {
  return unary(a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var sqrt(const Var& a) {
  return unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var sum(const Var& a) {
  return make_node(Tensor::scalar(a->value().sum()), {a}, [a](const Tensor&, const Tensor& g) {
    if (!a->requires_grad()) return;
    double* ga = a->grad_data();
    const double gv = g[0];
    for (std::size_t i = 0; i < a->value().numel(); ++i) ga[i] += gv;
  });
}

Var mean(const Var& a) {
  const double n = double(a->value().numel());
  require(n > 0, "mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights) {
  require(terms.size() == weights.size() && !terms.empty(), "weighted_sum: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require(terms[i]->value().numel() == 1, "weighted_sum expects scalars");
    total += weights[i] * terms[i]->value()[0];
  }
  return make_node(Tensor::scalar(total), terms, [terms, weights](const Tensor&, const Tensor& g) {
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (terms[i]->requires_grad()) terms[i]->grad_data()[0] += g[0] * weights[i];
    }
  });
}

Var min_of(const std::vector<Var>& terms, int* argmin) {
  require(!terms.empty(), "min_of: no terms");
  int best = 0;
  for (int i = 1; i < int(terms.size()); ++i) {
    if (terms[i]->value().item() < terms[best]->value().item()) best = i;
  }
  if (argmin) *argmin = best;
  Var winner = terms[best];
  return make_node(Tensor::scalar(winner->value().item()), {winner}, [winner](const Tensor&, const Tensor& g) {
    if (winner->requires_grad()) winner->grad_data()[0] += g[0];
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_channels: nothing to concatenate");
  const Shape s0 = parts[0]->shape();
  int total_c = 0;
  for (const auto& p : parts) {
    const Shape& s = p->shape();
    require(s.n == s0.n && s.h == s0.h && s.w == s0.w, "concat_channels: spatial/batch mismatch");
    total_c += s.c;
  }
  Tensor y(Shape{s0.n, total_c, s0.h, s0.w});
  const std::size_t plane = s0.plane();
  for (int n = 0; n < s0.n; ++n) {
    double* dst = y.data() + std::size_t(n) * total_c * plane;
    for (const auto& p : parts) {
      const std::size_t chunk = std::size_t(p->shape().c) * plane;
      const double* src = p->value().data() + std::size_t(n) * chunk;
      std::copy_n(src, chunk, dst);
      dst += chunk;
    }
  }
  return make_node(std::move(y), parts, [parts, total_c, plane](const Tensor&, const Tensor& g) {
    const int batch = parts[0]->shape().n;
    for (int n = 0; n < batch; ++n) {
      const double* src = g.data() + std::size_t(n) * total_c * plane;
      for (const auto& p : parts) {
        const std::size_t chunk = std::size_t(p->shape().c) * plane;
        if (p->requires_grad()) {
          double* dst = p->grad_data() + std::size_t(n) * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
        src += chunk;
      }
    }
  });
}

Var slice_channels(const Var& a, int c0, int count) {
  const Shape s = a->shape();
  require(c0 >= 0 && count > 0 && c0 + count <= s.c, "slice_channels out of range");
  std::vector<int> idx(count);
  for (int i = 0; i < count; ++i) idx[i] = c0 + i;
  return permute_channels(a, idx);
}

Var permute_channels(const Var& a, const std::vector<int>& perm) {
  const Shape s = a->shape();
  for (int p : perm) require(p >= 0 && p < s.c, "permute_channels: index out of range");
  const int out_c = int(perm.size());
  const std::size_t plane = s.plane();
  Tensor y(Shape{s.n, out_c, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < out_c; ++c) {
      const double* src = a->value().data() + (std::size_t(n) * s.c + perm[c]) * plane;
      std::copy_n(src, plane, y.data() + (std::size_t(n) * out_c + c) * plane);
    }
  }
  return make_node(std::move(y), {a}, [a, perm, plane](const Tensor&, const Tensor& g) {
    if (!a->requires_grad()) return;
    const Shape s = a->shape();
    const int out_c = int(perm.size());
    double* ga = a->grad_data();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < out_c; ++c) {
        const double* src = g.data() + (std::size_t(n) * out_c + c) * plane;
        double* dst = ga + (std::size_t(n) * s.c + perm[c]) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
    }
  });
}

Var select_batch(const Var& a, int n) {
  const Shape s = a->shape();
  require(n >= 0 && n < s.n, "select_batch out of range");
  Tensor y = a->value().batch_item(n);
  const std::size_t chunk = y.numel();
  return make_node(std::move(y), {a}, [a, n, chunk](const Tensor&, const Tensor& g) {
    if (!a->requires_grad()) return;
    double* dst = a->grad_data() + std::size_t(n) * chunk;
    for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[i];
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvParams p) {
  const Shape xs = x->shape();
  const Shape ws = weight->shape();
  require(ws.c == xs.c, "conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                            std::to_string(ws.c));
  require(ws.h == ws.w, "conv2d: square kernels only");
  require(p.stride >= 1 && p.dilation >= 1 && p.pad >= 0, "conv2d: bad params");
  const int k = ws.h;
  const int co = ws.n;
  const int oh = (xs.h + 2 * p.pad - p.dilation * (k - 1) - 1) / p.stride + 1;
  const int ow = (xs.w + 2 * p.pad - p.dilation * (k - 1) - 1) / p.stride + 1;
  require(oh > 0 && ow > 0, "conv2d: input " + xs.str() + " too small for kernel");
  if (bias) require(bias->value().numel() == std::size_t(co), "conv2d: bias size mismatch");

  const int ckk = xs.c * k * k;
  const int npix = oh * ow;
  const bool direct = (k == 1 && p.stride == 1 && p.pad == 0);
  Tensor y(Shape{xs.n, co, oh, ow});
  std::vector<double> col(direct ? 0 : std::size_t(ckk) * npix);
  for (int n = 0; n < xs.n; ++n) {
    const double* in = x->value().data() + std::size_t(n) * xs.c * xs.plane();
    const double* cols = in;
    if (!direct) {
      im2col(in, xs.c, xs.h, xs.w, k, p, oh, ow, col.data());
      cols = col.data();
    }
    double* out = y.data() + std::size_t(n) * co * npix;
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, co, npix, ckk, 1.0, weight->value().data(), ckk,
                cols, npix, 0.0, out, npix);
    if (bias) {
      for (int c = 0; c < co; ++c) {
        const double b = bias->value()[c];
        double* row = out + std::size_t(c) * npix;
        for (int i = 0; i < npix; ++i) row[i] += b;
      }
    }
  }

  return make_node(std::move(y), {x, weight, bias}, [=](const Tensor&, const Tensor& g) {
    std::vector<double> col(direct ? 0 : std::size_t(ckk) * npix);
    std::vector<double> dcol(std::size_t(ckk) * npix);
    for (int n = 0; n < xs.n; ++n) {
      const double* gout = g.data() + std::size_t(n) * co * npix;
      const double* in = x->value().data() + std::size_t(n) * xs.c * xs.plane();
      const double* cols = in;
      if (!direct) {
        im2col(in, xs.c, xs.h, xs.w, k, p, oh, ow, col.data());
        cols = col.data();
      }
      if (weight->requires_grad()) {
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, co, ckk, npix, 1.0, gout, npix, cols, npix, 1.0,
                    weight->grad_data(), ckk);
      }
      if (bias && bias->requires_grad()) {
        double* gb = bias->grad_data();
        for (int c = 0; c < co; ++c) {
          const double* row = gout + std::size_t(c) * npix;
          double s = 0.0;
          for (int i = 0; i < npix; ++i) s += row[i];
          gb[c] += s;
        }
      }
      if (x->requires_grad()) {
        double* gx = x->grad_data() + std::size_t(n) * xs.c * xs.plane();
        if (direct) {
          cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, ckk, npix, co, 1.0, weight->value().data(), ckk,
                      gout, npix, 1.0, gx, npix);
        } else {
          cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, ckk, npix, co, 1.0, weight->value().data(), ckk,
                      gout, npix, 0.0, dcol.data(), npix);
          col2im(dcol.data(), xs.c, xs.h, xs.w, k, p, oh, ow, gx);
        }
      }
    }
  });
}

Var max_pool2(const Var& x) {
  const Shape s = x->shape();
  require(s.h >= 2 && s.w >= 2, "max_pool2: input " + s.str() + " too small");
  const int oh = s.h / 2;
  const int ow = s.w / 2;
  Tensor y(Shape{s.n, s.c, oh, ow});
  std::vector<std::size_t> arg(y.numel());
  const Tensor& xv = x->value();
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = (std::size_t(n) * s.c + c) * s.plane();
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          std::size_t best = base + std::size_t(2 * oy) * s.w + 2 * ox;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t i = base + std::size_t(2 * oy + dy) * s.w + 2 * ox + dx;
              if (xv[i] > xv[best]) best = i;
            }
          }
          y[o] = xv[best];
          arg[o] = best;
        }
      }
    }
  }
  return make_node(std::move(y), {x}, [x, arg = std::move(arg)](const Tensor&, const Tensor& g) {
    if (!x->requires_grad()) return;
    double* gx = x->grad_data();
    for (std::size_t i = 0; i < arg.size(); ++i) gx[arg[i]] += g[i];
  });
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
  const Shape s = x->shape();
  require(out_h > 0 && out_w > 0, "resize_bilinear: bad output size");
  if (s.h == out_h && s.w == out_w) return x;
  const auto ty = bilinear_taps(s.h, out_h);
  const auto tx = bilinear_taps(s.w, out_w);
  Tensor y(Shape{s.n, s.c, out_h, out_w});
  const Tensor& xv = x->value();
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const double* src = xv.data() + std::size_t(nc) * s.plane();
    double* dst = y.data() + std::size_t(nc) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[oy];
      const double* r0 = src + std::size_t(a.i0) * s.w;
      const double* r1 = src + std::size_t(a.i1) * s.w;
      for (int ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[ox];
        const double top = r0[b.i0] * (1 - b.t) + r0[b.i1] * b.t;
        const double bot = r1[b.i0] * (1 - b.t) + r1[b.i1] * b.t;
        dst[std::size_t(oy) * out_w + ox] = top * (1 - a.t) + bot * a.t;
      }
    }
  }
  return make_node(std::move(y), {x}, [x, ty, tx, out_h, out_w](const Tensor&, const Tensor& g) {
    if (!x->requires_grad()) return;
    const Shape s = x->shape();
    double* gx = x->grad_data();
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      const double* src = g.data() + std::size_t(nc) * out_h * out_w;
      double* dst = gx + std::size_t(nc) * s.plane();
      for (int oy = 0; oy < out_h; ++oy) {
        const auto& a = ty[oy];
        double* r0 = dst + std::size_t(a.i0) * s.w;
        double* r1 = dst + std::size_t(a.i1) * s.w;
        for (int ox = 0; ox < out_w; ++ox) {
          const auto& b = tx[ox];
          const double v = src[std::size_t(oy) * out_w + ox];
          r0[b.i0] += v * (1 - a.t) * (1 - b.t);
          r0[b.i1] += v * (1 - a.t) * b.t;
          r1[b.i0] += v * a.t * (1 - b.t);
          r1[b.i1] += v * a.t * b.t;
        }
      }
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Shape s = x->shape();
  const std::size_t plane = s.plane();
  Tensor y(Shape{s.n, s.c, 1, 1});
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const double* src = x->value().data() + std::size_t(nc) * plane;
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += src[i];
    y[nc] = acc / double(plane);
  }
  return make_node(std::move(y), {x}, [x, plane](const Tensor&, const Tensor& g) {
    if (!x->requires_grad()) return;
    double* gx = x->grad_data();
    for (std::size_t nc = 0; nc < g.numel(); ++nc) {
      const double v = g[nc] / double(plane);
      double* dst = gx + nc * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += v;
    }
  });
}

Var dropout(const Var& x, double rate, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0, 1)");
  if (rate == 0.0) return x;
  const double keep = 1.0 - rate;
  Tensor mask(x->shape());
  for (std::size_t i = 0; i < mask.numel(); ++i) mask[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  return mul(x, constant(std::move(mask)));
}

Var diff_x(const Var& a) {
  const Shape s = a->shape();
  require(s.w >= 2, "diff_x needs width >= 2");
  Tensor y(Shape{s.n, s.c, s.h, s.w - 1});
  const Tensor& v = a->value();
  std::size_t o = 0;
  for (int p = 0; p < s.n * s.c * s.h; ++p) {
    const double* row = v.data() + std::size_t(p) * s.w;
    for (int x = 0; x + 1 < s.w; ++x) y[o++] = row[x + 1] - row[x];
  }
  return make_node(std::move(y), {a}, [a](const Tensor&, const Tensor& g) {
    if (!a->requires_grad()) return;
    const Shape s = a->shape();
    double* ga = a->grad_data();
    std::size_t o = 0;
    for (int p = 0; p < s.n * s.c * s.h; ++p) {
      double* row = ga + std::size_t(p) * s.w;
      for (int x = 0; x + 1 < s.w; ++x, ++o) {
        row[x + 1] += g[o];
        row[x] -= g[o];
      }
    }
  });
}

Var diff_y(const Var& a) {
  const Shape s = a->shape();
  require(s.h >= 2, "diff_y needs height >= 2");
  Tensor y(Shape{s.n, s.c, s.h - 1, s.w});
  const Tensor& v = a->value();
  std::size_t o = 0;
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const double* plane = v.data() + std::size_t(nc) * s.plane();
    for (int r = 0; r + 1 < s.h; ++r) {
      for (int x = 0; x < s.w; ++x) y[o++] = plane[std::size_t(r + 1) * s.w + x] - plane[std::size_t(r) * s.w + x];
    }
  }
  return make_node(std::move(y), {a}, [a](const Tensor&, const Tensor& g) {
    if (!a->requires_grad()) return;
    const Shape s = a->shape();
    double* ga = a->grad_data();
    std::size_t o = 0;
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      double* plane = ga + std::size_t(nc) * s.plane();
      for (int r = 0; r + 1 < s.h; ++r) {
        for (int x = 0; x < s.w; ++x, ++o) {
          plane[std::size_t(r + 1) * s.w + x] += g[o];
          plane[std::size_t(r) * s.w + x] -= g[o];
        }
      }
    }
  });
}

Var grad_magnitude(const Var& a) {
  const Shape s = a->shape();
  const Tensor& v = a->value();
  Tensor y(s);
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const double* p = v.data() + std::size_t(nc) * s.plane();
    double* out = y.data() + std::size_t(nc) * s.plane();
    for (int r = 0; r < s.h; ++r) {
      for (int x = 0; x < s.w; ++x) {
        const std::size_t i = std::size_t(r) * s.w + x;
        const double dx = x + 1 < s.w ? p[i + 1] - p[i] : 0.0;
        const double dy = r + 1 < s.h ? p[i + s.w] - p[i] : 0.0;
        out[i] = std::sqrt(dx * dx + dy * dy);
      }
    }
  }
  return make_node(std::move(y), {a}, [a](const Tensor& out, const Tensor& g) {
    if (!a->requires_grad()) return;
    const Shape s = a->shape();
    const Tensor& v = a->value();
    double* ga = a->grad_data();
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      const std::size_t base = std::size_t(nc) * s.plane();
      const double* p = v.data() + base;
      double* gp = ga + base;
      for (int r = 0; r < s.h; ++r) {
        for (int x = 0; x < s.w; ++x) {
          const std::size_t i = std::size_t(r) * s.w + x;
          const double m = out[base + i];
          if (m <= 0.0) continue;
          const double gi = g[base + i] / m;
          if (x + 1 < s.w) {
            const double dx = p[i + 1] - p[i];
            gp[i + 1] += gi * dx;
            gp[i] -= gi * dx;
          }
          if (r + 1 < s.h) {
            const double dy = p[i + s.w] - p[i];
            gp[i + s.w] += gi * dy;
            gp[i] -= gi * dy;
          }
        }
      }
    }
  });
}

Var max_normalize(const Var& a, double eps) {
  const Tensor& v = a->value();
  require(v.numel() > 0, "max_normalize of empty tensor");
  const std::size_t arg = std::size_t(std::max_element(v.vec().begin(), v.vec().end()) - v.vec().begin());
  const double m = v[arg];
  const bool guarded = !(m > eps);
  const double denom = guarded ? eps : m;
  Tensor y(v.shape());
  for (std::size_t i = 0; i < v.numel(); ++i) y[i] = v[i] / denom;
  return make_node(std::move(y), {a}, [a, arg, denom, guarded](const Tensor& out, const Tensor& g) {
    if (!a->requires_grad()) return;
    double* ga = a->grad_data();
    double dot = 0.0;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga[i] += g[i] / denom;
      dot += g[i] * out[i];
    }
    if (!guarded) ga[arg] -= dot / denom;
  });
}

Var expand_latent(const Var& mu, const Var& logvar, const Tensor& noise) {
  check_same(mu, logvar, "expand_latent");
  const Shape ms = mu->shape();
  const Shape ns = noise.shape();
  require(ms.h == 1 && ms.w == 1, "expand_latent: mu must be (N,K,1,1)");
  require(ns.n == ms.n && ns.c == ms.c, "expand_latent: noise shape " + ns.str() + " vs latent " + ms.str());
  const std::size_t plane = ns.plane();
  Tensor y(ns);
  for (int nk = 0; nk < ms.n * ms.c; ++nk) {
    const double m = mu->value()[nk];
    const double sd = std::exp(0.5 * logvar->value()[nk]);
    const double* e = noise.data() + std::size_t(nk) * plane;
    double* out = y.data() + std::size_t(nk) * plane;
    for (std::size_t i = 0; i < plane; ++i) out[i] = m + sd * e[i];
  }
  return make_node(std::move(y), {mu, logvar}, [mu, logvar, noise, plane](const Tensor&, const Tensor& g) {
    const Shape ms = mu->shape();
    for (int nk = 0; nk < ms.n * ms.c; ++nk) {
      const double* gp = g.data() + std::size_t(nk) * plane;
      const double* e = noise.data() + std::size_t(nk) * plane;
      double gsum = 0.0;
      double gnoise = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        gsum += gp[i];
        gnoise += gp[i] * e[i];
      }
      if (mu->requires_grad()) mu->grad_data()[nk] += gsum;
      if (logvar->requires_grad()) logvar->grad_data()[nk] += 0.5 * std::exp(0.5 * logvar->value()[nk]) * gnoise;
    }
  });
}

Var bce_with_logits(const Var& logits, const Var& target) {
  check_same(logits, target, "bce_with_logits");
  const Tensor& l = logits->value();
  const Tensor& t = target->value();
  const double n = double(l.numel());
  double total = 0.0;
  for (std::size_t i = 0; i < l.numel(); ++i) {
    if (std::isnan(l[i])) throw NumericError("bce_with_logits: NaN logit at index " + std::to_string(i));
    const double y = t[i];
    if (y > 0.0) total += y * softplus(-l[i]);
    if (y < 1.0) total += (1.0 - y) * softplus(l[i]);
  }
  return make_node(Tensor::scalar(total / n), {logits, target}, [logits, target, n](const Tensor&, const Tensor& g) {
    const Tensor& l = logits->value();
    const Tensor& t = target->value();
    const double s = g[0] / n;
    if (logits->requires_grad()) {
      double* gl = logits->grad_data();
      for (std::size_t i = 0; i < l.numel(); ++i) gl[i] += s * (sigmoid_scalar(l[i]) - t[i]);
    }
    if (target->requires_grad()) {
      double* gt = target->grad_data();
      for (std::size_t i = 0; i < l.numel(); ++i) gt[i] -= s * l[i];
    }
  });
}

Var smooth_l1(const Var& a, const Var& b, double beta) {
  check_same(a, b, "smooth_l1");
  require(beta > 0.0, "smooth_l1: beta must be positive");
  const Tensor& av = a->value();
  const Tensor& bv = b->value();
  const double n = double(av.numel());
  double total = 0.0;
  for (std::size_t i = 0; i < av.numel(); ++i) {
    const double d = std::abs(av[i] - bv[i]);
    total += d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
  }
  return make_node(Tensor::scalar(total / n), {a, b}, [a, b, beta, n](const Tensor&, const Tensor& g) {
    const Tensor& av = a->value();
    const Tensor& bv = b->value();
    const double s = g[0] / n;
    for (std::size_t i = 0; i < av.numel(); ++i) {
      const double d = av[i] - bv[i];
      const double dd = std::abs(d) < beta ? d / beta : (d > 0 ? 1.0 : -1.0);
      if (a->requires_grad()) a->grad_data()[i] += s * dd;
      if (b->requires_grad()) b->grad_data()[i] -= s * dd;
    }
  });
}

Var kl_diag_gaussian(const Var& mu_q, const Var& logvar_q, const Var& mu_p, const Var& logvar_p) {
  check_same(mu_q, logvar_q, "kl_diag_gaussian");
  check_same(mu_q, mu_p, "kl_diag_gaussian");
  check_same(mu_q, logvar_p, "kl_diag_gaussian");
  const Shape s = mu_q->shape();
  const double batch = double(s.n);
  double total = 0.0;
  for (std::size_t i = 0; i < s.numel(); ++i) {
    const double lq = logvar_q->value()[i];
    const double lp = logvar_p->value()[i];
    const double d = mu_q->value()[i] - mu_p->value()[i];
    total += 0.5 * (lp - lq + (std::exp(lq) + d * d) / std::exp(lp) - 1.0);
  }
  return make_node(Tensor::scalar(total / batch), {mu_q, logvar_q, mu_p, logvar_p},
                   [=](const Tensor&, const Tensor& g) {
                     const double sc = g[0] / batch;
                     for (std::size_t i = 0; i < s.numel(); ++i) {
                       const double lq = logvar_q->value()[i];
                       const double lp = logvar_p->value()[i];
                       const double vq = std::exp(lq);
                       const double vp = std::exp(lp);
                       const double d = mu_q->value()[i] - mu_p->value()[i];
                       if (mu_q->requires_grad()) mu_q->grad_data()[i] += sc * d / vp;
                       if (mu_p->requires_grad()) mu_p->grad_data()[i] -= sc * d / vp;
                       if (logvar_q->requires_grad()) logvar_q->grad_data()[i] += sc * 0.5 * (vq / vp - 1.0);
                       if (logvar_p->requires_grad()) logvar_p->grad_data()[i] += sc * 0.5 * (1.0 - (vq + d * d) / vp);
                     }
                   });
}

}  // namespace probsal::ag
