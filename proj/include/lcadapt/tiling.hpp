#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "lcadapt/ops.hpp"
#include "lcadapt/raster.hpp"
#include "lcadapt/unet.hpp"

namespace lcadapt {

// Box-filter resample of one plane to a smaller grid: each output pixel is
// the average of its (possibly fractional) input footprint.  Exact for
// integer factors; for factors like 2.5 the border rows/columns of the
// footprint contribute their covered fraction.
inline std::vector<double> area_resample(const std::vector<double>& src,
                                         int64_t sh, int64_t sw, int64_t dh,
                                         int64_t dw) {
  if (sh < 1 || sw < 1 || dh < 1 || dw < 1 || dh > sh || dw > sw)
    throw ConfigError(strf("area_resample: bad extents %lldx%lld -> %lldx%lld",
                           static_cast<long long>(sh), static_cast<long long>(sw),
                           static_cast<long long>(dh), static_cast<long long>(dw)));
  const double fy = static_cast<double>(sh) / static_cast<double>(dh);
  const double fx = static_cast<double>(sw) / static_cast<double>(dw);
  std::vector<double> dst(static_cast<size_t>(dh * dw), 0.0);
  for (int64_t oy = 0; oy < dh; ++oy) {
    const double y0 = oy * fy, y1 = (oy + 1) * fy;
    const int64_t iy0 = static_cast<int64_t>(std::floor(y0));
    const int64_t iy1 = std::min(sh, static_cast<int64_t>(std::ceil(y1)));
    for (int64_t ox = 0; ox < dw; ++ox) {
      const double x0 = ox * fx, x1 = (ox + 1) * fx;
      const int64_t ix0 = static_cast<int64_t>(std::floor(x0));
      const int64_t ix1 = std::min(sw, static_cast<int64_t>(std::ceil(x1)));
      double acc = 0.0;
      for (int64_t iy = iy0; iy < iy1; ++iy) {
        const double cy = std::min<double>(static_cast<double>(iy + 1), y1) -
                          std::max<double>(static_cast<double>(iy), y0);
        for (int64_t ix = ix0; ix < ix1; ++ix) {
          const double cx = std::min<double>(static_cast<double>(ix + 1), x1) -
                            std::max<double>(static_cast<double>(ix), x0);
          acc += cy * cx * src[static_cast<size_t>(iy * sw + ix)];
        }
      }
      dst[static_cast<size_t>(oy * dw + ox)] = acc / (fy * fx);
    }
  }
  return dst;
}

// Label resample by coverage-weighted majority vote over the footprint; ties
// break toward the lower id.  Labels are never interpolated, so every output
// value occurs somewhere in the footprint ("unlabeled" votes like a class).
inline LabelMap majority_resample(const LabelMap& src, int64_t dh, int64_t dw) {
  if (dh < 1 || dw < 1 || dh > src.h || dw > src.w)
    throw ConfigError(strf("majority_resample: bad extents %lldx%lld -> %lldx%lld",
                           static_cast<long long>(src.h),
                           static_cast<long long>(src.w),
                           static_cast<long long>(dh), static_cast<long long>(dw)));
  const double fy = static_cast<double>(src.h) / static_cast<double>(dh);
  const double fx = static_cast<double>(src.w) / static_cast<double>(dw);
  LabelMap dst(dh, dw);
  for (int64_t oy = 0; oy < dh; ++oy) {
    const double y0 = oy * fy, y1 = (oy + 1) * fy;
    const int64_t iy0 = static_cast<int64_t>(std::floor(y0));
    const int64_t iy1 = std::min(src.h, static_cast<int64_t>(std::ceil(y1)));
    for (int64_t ox = 0; ox < dw; ++ox) {
      const double x0 = ox * fx, x1 = (ox + 1) * fx;
      const int64_t ix0 = static_cast<int64_t>(std::floor(x0));
      const int64_t ix1 = std::min(src.w, static_cast<int64_t>(std::ceil(x1)));
      double weight[256] = {0.0};
      for (int64_t iy = iy0; iy < iy1; ++iy) {
        const double cy = std::min<double>(static_cast<double>(iy + 1), y1) -
                          std::max<double>(static_cast<double>(iy), y0);
        for (int64_t ix = ix0; ix < ix1; ++ix) {
          const double cx = std::min<double>(static_cast<double>(ix + 1), x1) -
                            std::max<double>(static_cast<double>(ix), x0);
          weight[src.at(iy, ix)] += cy * cx;
        }
      }
      int best = 0;
      for (int k = 1; k < 256; ++k)
        if (weight[k] > weight[best]) best = k;
      dst.at(oy, ox) = static_cast<uint8_t>(best);
    }
  }
  return dst;
}

// Crop-and-resample one training tile: a crop of `crop` pixels on a side,
// area-averaged (bands) and majority-voted (labels) down to `base`.
inline RasterScene crop_resample(const RasterScene& sc, int64_t y0, int64_t x0,
                                 int64_t crop, int64_t base, ResTag tag) {
  RasterScene out(base, base);
  out.tag = tag;
  out.geo_id = strf("%s@%lld,%lld/%lld", sc.geo_id.c_str(),
                    static_cast<long long>(y0), static_cast<long long>(x0),
                    static_cast<long long>(crop));
  std::vector<double> plane(static_cast<size_t>(crop * crop));
  for (int b = 0; b < RasterScene::kBands; ++b) {
    for (int64_t y = 0; y < crop; ++y)
      for (int64_t x = 0; x < crop; ++x)
        plane[static_cast<size_t>(y * crop + x)] = sc.band(b, y0 + y, x0 + x);
    const std::vector<double> small = area_resample(plane, crop, crop, base, base);
    std::copy(small.begin(), small.end(),
              out.bands.begin() + static_cast<int64_t>(b) * base * base);
  }
  if (sc.has_labels) {
    LabelMap lcrop(crop, crop);
    for (int64_t y = 0; y < crop; ++y)
      for (int64_t x = 0; x < crop; ++x)
        lcrop.at(y, x) = sc.labels.at(y0 + y, x0 + x);
    out.labels = majority_resample(lcrop, base, base);
    out.has_labels = true;
  }
  return out;
}

// Sample a multi-scale training set: crops at three window sizes in a fixed
// 2:1:1 count ratio, all resampled to `base` pixels.  A window size that does
// not fit inside the scenes is dropped with a warning and its share is
// redistributed over the remaining sizes.
inline DomainSet build_multiscale_source(const std::vector<RasterScene>& scenes,
                                         int count,
                                         std::array<int64_t, 3> sizes,
                                         int64_t base, uint64_t seed) {
  if (scenes.empty()) throw ConfigError("build_multiscale_source: no scenes");
  if (count < 1) throw ConfigError("build_multiscale_source: count < 1");
  for (int64_t s : sizes) {
    if (s < base)
      throw ConfigError(strf("build_multiscale_source: size %lld below base %lld",
                             static_cast<long long>(s),
                             static_cast<long long>(base)));
  }
  int64_t min_h = scenes[0].h, min_w = scenes[0].w;
  for (const auto& sc : scenes) {
    min_h = std::min(min_h, sc.h);
    min_w = std::min(min_w, sc.w);
  }
  const ResTag tags[3] = {ResTag::native, ResTag::x2, ResTag::x2_5};
  std::vector<int> usable;
  for (int i = 0; i < 3; ++i) {
    if (sizes[static_cast<size_t>(i)] <= min_h && sizes[static_cast<size_t>(i)] <= min_w) {
      usable.push_back(i);
    } else {
      warn(strf("multiscale: window %lld exceeds smallest scene %lldx%lld; skipping",
                static_cast<long long>(sizes[static_cast<size_t>(i)]),
                static_cast<long long>(min_h), static_cast<long long>(min_w)));
    }
  }
  if (usable.empty())
    throw ConfigError("build_multiscale_source: no window size fits the scenes");

  // 2:1:1 over the usable sizes, exact by largest remainder
  std::vector<double> share;
  for (int i : usable) share.push_back(i == 0 ? 2.0 : 1.0);
  std::vector<int64_t> per = [&] {
    double sum = 0.0;
    for (double s : share) sum += s;
    std::vector<int64_t> q(share.size());
    std::vector<std::pair<double, size_t>> rem;
    int64_t used = 0;
    for (size_t i = 0; i < share.size(); ++i) {
      const double exact = share[i] / sum * count;
      q[i] = static_cast<int64_t>(std::floor(exact));
      used += q[i];
      rem.push_back({exact - std::floor(exact), i});
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
      return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    for (int64_t i = 0; i < count - used; ++i) ++q[rem[static_cast<size_t>(i)].second];
    return q;
  }();

  Rng rng(mix_seed({seed, tag_hash("multiscale")}));
  DomainSet out;
  out.role = DomainRole::source;
  for (size_t ui = 0; ui < usable.size(); ++ui) {
    const int si = usable[ui];
    const int64_t crop = sizes[static_cast<size_t>(si)];
    for (int64_t j = 0; j < per[ui]; ++j) {
      const auto& sc = scenes[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(scenes.size()) - 1))];
      const int64_t y0 = rng.uniform_int(0, sc.h - crop);
      const int64_t x0 = rng.uniform_int(0, sc.w - crop);
      out.tiles.push_back(crop_resample(sc, y0, x0, crop, base, tags[si]));
    }
  }
  return out;
}

namespace detail {

// reflect-101 mirror: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
inline int64_t mirror(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

}  // namespace detail

// Sliding-window inference over a scene of any size: windows of `tile` pixels
// advance by tile*(1-overlap); borders are mirror-padded; every window's
// softmax is summed per pixel and the argmax of the sum is the prediction.
// With overlap 0 the windows partition the (padded) scene.
inline ClassMap stitch_inference(const UNet& model, const RasterScene& scene,
                                 int64_t tile, double overlap) {
  if (!(overlap >= 0.0) || overlap >= 1.0)
    throw ConfigError(strf("stitch_inference: overlap %g outside [0, 1)", overlap));
  const int64_t div = int64_t{1} << model.config().depth;
  if (tile < div || tile % div != 0)
    throw ConfigError(strf("stitch_inference: tile %lld not a positive multiple of %lld",
                           static_cast<long long>(tile), static_cast<long long>(div)));
  if (tile > scene.h || tile > scene.w)
    warn(strf("stitch_inference: tile %lld exceeds scene %lldx%lld; single padded window",
              static_cast<long long>(tile), static_cast<long long>(scene.h),
              static_cast<long long>(scene.w)));

  const int64_t step = std::max<int64_t>(
      1, static_cast<int64_t>(std::llround(static_cast<double>(tile) * (1.0 - overlap))));
  auto positions = [&](int64_t extent) {
    std::vector<int64_t> pos;
    int64_t p = 0;
    for (;;) {
      pos.push_back(p);
      if (p + tile >= extent) break;
      p += step;
    }
    return pos;
  };
  const std::vector<int64_t> ys = positions(scene.h);
  const std::vector<int64_t> xs = positions(scene.w);

  const int K = model.config().num_classes;
  std::vector<double> acc(static_cast<size_t>(K) *
                              static_cast<size_t>(scene.h * scene.w),
                          0.0);
  Tensor window = Tensor::zeros({1, RasterScene::kBands, tile, tile});
  for (int64_t y0 : ys) {
    for (int64_t x0 : xs) {
      double* wp = window.data().data();
      for (int b = 0; b < RasterScene::kBands; ++b) {
        for (int64_t y = 0; y < tile; ++y) {
          const int64_t my = detail::mirror(y0 + y, scene.h);
          for (int64_t x = 0; x < tile; ++x) {
            const int64_t mx = detail::mirror(x0 + x, scene.w);
            wp[(static_cast<int64_t>(b) * tile + y) * tile + x] =
                scene.band(b, my, mx);
          }
        }
      }
      const Tensor probs = softmax_channels(model.forward(window));
      const double* pp = probs.data().data();
      for (int k = 0; k < K; ++k) {
        for (int64_t y = 0; y < tile; ++y) {
          const int64_t sy = y0 + y;
          if (sy >= scene.h) break;
          for (int64_t x = 0; x < tile; ++x) {
            const int64_t sx = x0 + x;
            if (sx >= scene.w) break;
            acc[(static_cast<size_t>(k) * scene.h + sy) * scene.w + sx] +=
                pp[(static_cast<int64_t>(k) * tile + y) * tile + x];
          }
        }
      }
    }
  }

  ClassMap cm(scene.h, scene.w);
  const int64_t plane = scene.h * scene.w;
  for (int64_t px = 0; px < plane; ++px) {
    double best = acc[static_cast<size_t>(px)];
    int bc = 0;
    for (int k = 1; k < K; ++k) {
      const double v = acc[static_cast<size_t>(k) * plane + px];
      if (v > best) {
        best = v;
        bc = k;
      }
    }
    cm.v[static_cast<size_t>(px)] = static_cast<uint8_t>(bc);
  }
  return cm;
}

}  // namespace lcadapt
