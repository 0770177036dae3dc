#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lcadapt/tensor.hpp"

namespace lcadapt {

namespace detail {

inline int64_t ceil_div(int64_t a, int64_t b) {
  // b > 0, a may be negative
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

inline double* grad_ptr(const std::shared_ptr<TensorImpl>& impl) {
  if (impl->grad.empty())
    impl->grad.assign(impl->data.size(), 0.0);
  return impl->grad.data();
}

}  // namespace detail

// Cross-correlation of input (n, ci, h, w) with kernels (oc, ci, kh, kw).
// Gradients for both input and kernels are exact; see the finite-difference
// checks in the test suite.
inline Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride,
                     int padding, Tape* tape = nullptr) {
  const Shape4 is = input.shape();
  const Shape4 ks = kernels.shape();
  if (ks.c != is.c) {
    throw ConfigError(strf(
        "conv2d: kernel channels do not match input channels (input %s, kernels %s)",
        is.str().c_str(), ks.str().c_str()));
  }
  if (stride < 1 || padding < 0)
    throw ConfigError(strf("conv2d: invalid stride %d / padding %d", stride, padding));
  const int64_t oh = (is.h + 2 * padding - ks.h) / stride + 1;
  const int64_t ow = (is.w + 2 * padding - ks.w) / stride + 1;
  if (oh < 1 || ow < 1 || is.h + 2 * padding < ks.h || is.w + 2 * padding < ks.w) {
    throw ConfigError(strf("conv2d: empty output for input %s, kernels %s, stride %d, padding %d",
                           is.str().c_str(), ks.str().c_str(), stride, padding));
  }

  Tensor out = Tensor::zeros({is.n, ks.n, oh, ow});
  const double* in = input.data().data();
  const double* kw = kernels.data().data();
  double* op = out.data().data();
  const int64_t s = stride, p = padding;

#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < is.n; ++n) {
    for (int64_t oc = 0; oc < ks.n; ++oc) {
      double* oplane = op + ((n * ks.n + oc) * oh) * ow;
      for (int64_t ic = 0; ic < is.c; ++ic) {
        const double* iplane = in + ((n * is.c + ic) * is.h) * is.w;
        const double* kplane = kw + ((oc * ks.c + ic) * ks.h) * ks.w;
        for (int64_t ky = 0; ky < ks.h; ++ky) {
          for (int64_t kx = 0; kx < ks.w; ++kx) {
            const double wv = kplane[ky * ks.w + kx];
            if (wv == 0.0) continue;
            const int64_t ox_lo = std::max<int64_t>(0, detail::ceil_div(p - kx, s));
            const int64_t ox_hi = std::min(ow - 1, (is.w - 1 - kx + p) / s);
            for (int64_t oy = 0; oy < oh; ++oy) {
              const int64_t iy = oy * s + ky - p;
              if (iy < 0 || iy >= is.h) continue;
              const double* irow = iplane + iy * is.w + kx - p;
              double* orow = oplane + oy * ow;
              for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                orow[ox] += wv * irow[ox * s];
            }
          }
        }
      }
    }
  }
  check_finite(out.data(), "conv2d forward");

  if (tape) {
    auto ii = input.impl();
    auto ki = kernels.impl();
    auto oi = out.impl();
    tape->record([ii, ki, oi, s, p]() {
      const Shape4 is = ii->shape, ks = ki->shape, os = oi->shape;
      const double* go = oi->grad.empty() ? nullptr : oi->grad.data();
      if (!go) return;
      double* gi = detail::grad_ptr(ii);
      double* gk = detail::grad_ptr(ki);
      const double* in = ii->data.data();
      const double* kw = ki->data.data();
      const int64_t oh = os.h, ow = os.w;
      // input gradient: independent per (n, ic) plane
#pragma omp parallel for collapse(2) schedule(static)
      for (int64_t n = 0; n < is.n; ++n) {
        for (int64_t ic = 0; ic < is.c; ++ic) {
          double* gplane = gi + ((n * is.c + ic) * is.h) * is.w;
          for (int64_t oc = 0; oc < ks.n; ++oc) {
            const double* goplane = go + ((n * ks.n + oc) * oh) * ow;
            const double* kplane = kw + ((oc * ks.c + ic) * ks.h) * ks.w;
            for (int64_t ky = 0; ky < ks.h; ++ky) {
              for (int64_t kx = 0; kx < ks.w; ++kx) {
                const double wv = kplane[ky * ks.w + kx];
                if (wv == 0.0) continue;
                const int64_t ox_lo = std::max<int64_t>(0, detail::ceil_div(p - kx, s));
                const int64_t ox_hi = std::min(ow - 1, (is.w - 1 - kx + p) / s);
                for (int64_t oy = 0; oy < oh; ++oy) {
                  const int64_t iy = oy * s + ky - p;
                  if (iy < 0 || iy >= is.h) continue;
                  double* grow = gplane + iy * is.w + kx - p;
                  const double* gorow = goplane + oy * ow;
                  for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                    grow[ox * s] += wv * gorow[ox];
                }
              }
            }
          }
        }
      }
      // kernel gradient: independent per (oc, ic) pair
#pragma omp parallel for collapse(2) schedule(static)
      for (int64_t oc = 0; oc < ks.n; ++oc) {
        for (int64_t ic = 0; ic < ks.c; ++ic) {
          double* gkplane = gk + ((oc * ks.c + ic) * ks.h) * ks.w;
          for (int64_t ky = 0; ky < ks.h; ++ky) {
            for (int64_t kx = 0; kx < ks.w; ++kx) {
              const int64_t ox_lo = std::max<int64_t>(0, detail::ceil_div(p - kx, s));
              const int64_t ox_hi = std::min(ow - 1, (is.w - 1 - kx + p) / s);
              double acc = 0.0;
              for (int64_t n = 0; n < is.n; ++n) {
                const double* iplane = in + ((n * is.c + ic) * is.h) * is.w;
                const double* goplane = go + ((n * ks.n + oc) * oh) * ow;
                for (int64_t oy = 0; oy < oh; ++oy) {
                  const int64_t iy = oy * s + ky - p;
                  if (iy < 0 || iy >= is.h) continue;
                  const double* irow = iplane + iy * is.w + kx - p;
                  const double* gorow = goplane + oy * ow;
                  for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                    acc += irow[ox * s] * gorow[ox];
                }
              }
              gkplane[ky * ks.w + kx] += acc;
            }
          }
        }
      }
    });
  }
  return out;
}

// Adds a per-channel bias (1, c, 1, 1) to every pixel.
inline Tensor bias_add(const Tensor& input, const Tensor& bias,
                       Tape* tape = nullptr) {
  const Shape4 is = input.shape();
  const Shape4 bs = bias.shape();
  if (bs.n != 1 || bs.h != 1 || bs.w != 1 || bs.c != is.c) {
    throw ConfigError(strf("bias_add: bias %s does not broadcast over input %s",
                           bs.str().c_str(), is.str().c_str()));
  }
  Tensor out = Tensor::zeros(is);
  const double* in = input.data().data();
  const double* b = bias.data().data();
  double* op = out.data().data();
  const int64_t plane = is.h * is.w;
  for (int64_t n = 0; n < is.n; ++n) {
    for (int64_t c = 0; c < is.c; ++c) {
      const double bv = b[c];
      const double* ip = in + (n * is.c + c) * plane;
      double* o = op + (n * is.c + c) * plane;
      for (int64_t i = 0; i < plane; ++i) o[i] = ip[i] + bv;
    }
  }
  check_finite(out.data(), "bias_add forward");

  if (tape) {
    auto ii = input.impl();
    auto bi = bias.impl();
    auto oi = out.impl();
    tape->record([ii, bi, oi]() {
      if (oi->grad.empty()) return;
      const Shape4 is = ii->shape;
      const double* go = oi->grad.data();
      double* gi = detail::grad_ptr(ii);
      double* gb = detail::grad_ptr(bi);
      const int64_t plane = is.h * is.w;
      for (int64_t n = 0; n < is.n; ++n) {
        for (int64_t c = 0; c < is.c; ++c) {
          const double* g = go + (n * is.c + c) * plane;
          double* gip = gi + (n * is.c + c) * plane;
          double acc = 0.0;
          for (int64_t i = 0; i < plane; ++i) {
            gip[i] += g[i];
            acc += g[i];
          }
          gb[c] += acc;
        }
      }
    });
  }
  return out;
}

inline Tensor relu(const Tensor& input, Tape* tape = nullptr) {
  Tensor out = Tensor::zeros(input.shape());
  const double* in = input.data().data();
  double* op = out.data().data();
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i) op[i] = in[i] > 0.0 ? in[i] : 0.0;
  check_finite(out.data(), "relu forward");

  if (tape) {
    auto ii = input.impl();
    auto oi = out.impl();
    tape->record([ii, oi]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      const double* in = ii->data.data();
      double* gi = detail::grad_ptr(ii);
      const int64_t n = static_cast<int64_t>(ii->data.size());
      for (int64_t i = 0; i < n; ++i)
        if (in[i] > 0.0) gi[i] += go[i];
    });
  }
  return out;
}

// Per-pixel softmax over the channel axis, max-subtracted for stability.
inline Tensor softmax_channels(const Tensor& input, Tape* tape = nullptr) {
  const Shape4 is = input.shape();
  if (is.c < 2)
    throw ConfigError(strf("softmax_channels: need at least 2 channels, got %s",
                           is.str().c_str()));
  Tensor out = Tensor::zeros(is);
  const double* in = input.data().data();
  double* op = out.data().data();
  const int64_t plane = is.h * is.w;
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < is.n; ++n) {
    for (int64_t px = 0; px < plane; ++px) {
      const int64_t base = n * is.c * plane + px;
      double mx = in[base];
      for (int64_t c = 1; c < is.c; ++c)
        mx = std::max(mx, in[base + c * plane]);
      double sum = 0.0;
      for (int64_t c = 0; c < is.c; ++c) {
        const double e = std::exp(in[base + c * plane] - mx);
        op[base + c * plane] = e;
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (int64_t c = 0; c < is.c; ++c) op[base + c * plane] *= inv;
    }
  }
  check_finite(out.data(), "softmax_channels forward");

  if (tape) {
    auto ii = input.impl();
    auto oi = out.impl();
    tape->record([ii, oi]() {
      if (oi->grad.empty()) return;
      const Shape4 is = ii->shape;
      const double* go = oi->grad.data();
      const double* p = oi->data.data();
      double* gi = detail::grad_ptr(ii);
      const int64_t plane = is.h * is.w;
#pragma omp parallel for schedule(static)
      for (int64_t n = 0; n < is.n; ++n) {
        for (int64_t px = 0; px < plane; ++px) {
          const int64_t base = n * is.c * plane + px;
          double dot = 0.0;
          for (int64_t c = 0; c < is.c; ++c)
            dot += go[base + c * plane] * p[base + c * plane];
          for (int64_t c = 0; c < is.c; ++c) {
            const int64_t i = base + c * plane;
            gi[i] += p[i] * (go[i] - dot);
          }
        }
      }
    });
  }
  return out;
}

// 2x2 non-overlapping max; ties route the gradient to the first element in
// row-major window order.
inline Tensor max_pool2(const Tensor& input, Tape* tape = nullptr) {
  const Shape4 is = input.shape();
  if (is.h % 2 != 0 || is.w % 2 != 0) {
    throw ConfigError(strf("max_pool2: spatial extents must be even, got %s",
                           is.str().c_str()));
  }
  const int64_t oh = is.h / 2, ow = is.w / 2;
  Tensor out = Tensor::zeros({is.n, is.c, oh, ow});
  auto argmax = std::make_shared<std::vector<int32_t>>(
      static_cast<size_t>(out.numel()));
  const double* in = input.data().data();
  double* op = out.data().data();
  int32_t* am = argmax->data();
  for (int64_t nc = 0; nc < is.n * is.c; ++nc) {
    const double* iplane = in + nc * is.h * is.w;
    double* oplane = op + nc * oh * ow;
    int32_t* aplane = am + nc * oh * ow;
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        const int64_t iy = oy * 2, ix = ox * 2;
        double best = iplane[iy * is.w + ix];
        int32_t bi = 0;
        const double cand[3] = {iplane[iy * is.w + ix + 1],
                                iplane[(iy + 1) * is.w + ix],
                                iplane[(iy + 1) * is.w + ix + 1]};
        for (int k = 0; k < 3; ++k) {
          if (cand[k] > best) {
            best = cand[k];
            bi = k + 1;
          }
        }
        oplane[oy * ow + ox] = best;
        aplane[oy * ow + ox] = bi;
      }
    }
  }
  check_finite(out.data(), "max_pool2 forward");

  if (tape) {
    auto ii = input.impl();
    auto oi = out.impl();
    tape->record([ii, oi, argmax]() {
      if (oi->grad.empty()) return;
      const Shape4 is = ii->shape;
      const Shape4 os = oi->shape;
      const double* go = oi->grad.data();
      double* gi = detail::grad_ptr(ii);
      const int32_t* am = argmax->data();
      for (int64_t nc = 0; nc < is.n * is.c; ++nc) {
        double* gplane = gi + nc * is.h * is.w;
        const double* goplane = go + nc * os.h * os.w;
        const int32_t* aplane = am + nc * os.h * os.w;
        for (int64_t oy = 0; oy < os.h; ++oy) {
          for (int64_t ox = 0; ox < os.w; ++ox) {
            const int32_t k = aplane[oy * os.w + ox];
            const int64_t iy = oy * 2 + k / 2, ix = ox * 2 + k % 2;
            gplane[iy * is.w + ix] += goplane[oy * os.w + ox];
          }
        }
      }
    });
  }
  return out;
}

// Nearest-neighbor 2x spatial enlargement; backward sums the four child
// gradients into each parent.
inline Tensor upsample2(const Tensor& input, Tape* tape = nullptr) {
  const Shape4 is = input.shape();
  const int64_t oh = is.h * 2, ow = is.w * 2;
  Tensor out = Tensor::zeros({is.n, is.c, oh, ow});
  const double* in = input.data().data();
  double* op = out.data().data();
  for (int64_t nc = 0; nc < is.n * is.c; ++nc) {
    const double* iplane = in + nc * is.h * is.w;
    double* oplane = op + nc * oh * ow;
    for (int64_t iy = 0; iy < is.h; ++iy) {
      for (int64_t ix = 0; ix < is.w; ++ix) {
        const double v = iplane[iy * is.w + ix];
        double* o = oplane + (iy * 2) * ow + ix * 2;
        o[0] = v;
        o[1] = v;
        o[ow] = v;
        o[ow + 1] = v;
      }
    }
  }
  check_finite(out.data(), "upsample2 forward");

  if (tape) {
    auto ii = input.impl();
    auto oi = out.impl();
    tape->record([ii, oi]() {
      if (oi->grad.empty()) return;
      const Shape4 is = ii->shape;
      const double* go = oi->grad.data();
      double* gi = detail::grad_ptr(ii);
      const int64_t oh = is.h * 2, ow = is.w * 2;
      for (int64_t nc = 0; nc < is.n * is.c; ++nc) {
        double* gplane = gi + nc * is.h * is.w;
        const double* goplane = go + nc * oh * ow;
        for (int64_t iy = 0; iy < is.h; ++iy) {
          for (int64_t ix = 0; ix < is.w; ++ix) {
            const double* g = goplane + (iy * 2) * ow + ix * 2;
            gplane[iy * is.w + ix] += g[0] + g[1] + g[ow] + g[ow + 1];
          }
        }
      }
    });
  }
  return out;
}

// Channel concatenation; backward splits the gradient back to both inputs.
inline Tensor concat_channels(const Tensor& a, const Tensor& b,
                              Tape* tape = nullptr) {
  const Shape4 as = a.shape(), bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
    throw ConfigError(strf("concat_channels: batch/spatial mismatch (%s vs %s)",
                           as.str().c_str(), bs.str().c_str()));
  }
  Tensor out = Tensor::zeros({as.n, as.c + bs.c, as.h, as.w});
  const int64_t plane = as.h * as.w;
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  double* op = out.data().data();
  for (int64_t n = 0; n < as.n; ++n) {
    std::copy(ap + n * as.c * plane, ap + (n + 1) * as.c * plane,
              op + n * (as.c + bs.c) * plane);
    std::copy(bp + n * bs.c * plane, bp + (n + 1) * bs.c * plane,
              op + (n * (as.c + bs.c) + as.c) * plane);
  }

  if (tape) {
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = out.impl();
    tape->record([ai, bi, oi]() {
      if (oi->grad.empty()) return;
      const Shape4 as = ai->shape, bs = bi->shape;
      const int64_t plane = as.h * as.w;
      const double* go = oi->grad.data();
      double* ga = detail::grad_ptr(ai);
      double* gb = detail::grad_ptr(bi);
      for (int64_t n = 0; n < as.n; ++n) {
        const double* g0 = go + n * (as.c + bs.c) * plane;
        for (int64_t i = 0; i < as.c * plane; ++i)
          ga[n * as.c * plane + i] += g0[i];
        const double* g1 = g0 + as.c * plane;
        for (int64_t i = 0; i < bs.c * plane; ++i)
          gb[n * bs.c * plane + i] += g1[i];
      }
    });
  }
  return out;
}

// Elementwise sum of two same-shape tensors.
inline Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
  if (!(a.shape() == b.shape())) {
    throw ConfigError(strf("add: shape mismatch (%s vs %s)",
                           a.shape().str().c_str(), b.shape().str().c_str()));
  }
  Tensor out = Tensor::zeros(a.shape());
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  double* op = out.data().data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) op[i] = ap[i] + bp[i];
  check_finite(out.data(), "add forward");

  if (tape) {
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = out.impl();
    tape->record([ai, bi, oi]() {
      if (oi->grad.empty()) return;
      const double* go = oi->grad.data();
      double* ga = detail::grad_ptr(ai);
      double* gb = detail::grad_ptr(bi);
      const int64_t n = static_cast<int64_t>(ai->data.size());
      for (int64_t i = 0; i < n; ++i) {
        ga[i] += go[i];
        gb[i] += go[i];
      }
    });
  }
  return out;
}

// Mean over all elements, as a 1x1x1x1 scalar.
inline Tensor reduce_mean(const Tensor& input, Tape* tape = nullptr) {
  const int64_t n = input.numel();
  if (n == 0) throw ConfigError("reduce_mean: empty tensor");
  double acc = 0.0;
  const double* in = input.data().data();
  for (int64_t i = 0; i < n; ++i) acc += in[i];
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));
  check_finite(out.data(), "reduce_mean forward");

  if (tape) {
    auto ii = input.impl();
    auto oi = out.impl();
    tape->record([ii, oi]() {
      if (oi->grad.empty()) return;
      const double g = oi->grad[0] / static_cast<double>(ii->data.size());
      double* gi = detail::grad_ptr(ii);
      const int64_t n = static_cast<int64_t>(ii->data.size());
      for (int64_t i = 0; i < n; ++i) gi[i] += g;
    });
  }
  return out;
}

}  // namespace lcadapt
