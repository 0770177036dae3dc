#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lcadapt/labelmap.hpp"
#include "lcadapt/ops.hpp"
#include "lcadapt/optim.hpp"
#include "lcadapt/tensor.hpp"

namespace lcadapt {

struct UNetConfig {
  int in_channels = 4;
  int num_classes = 24;
  int depth = 3;       // pooling stages; spatial extents must divide 2^depth
  int base_width = 8;  // channel count at full resolution
  uint64_t init_seed = 1;

  void validate() const {
    if (in_channels < 1 || num_classes < 2 || depth < 1 || base_width < 1)
      throw ConfigError(strf(
          "UNetConfig: bad values (in=%d classes=%d depth=%d width=%d)",
          in_channels, num_classes, depth, base_width));
    if (num_classes > 254)
      throw ConfigError(strf("UNetConfig: num_classes %d exceeds 254", num_classes));
  }
};

// Encoder/decoder segmentation net with shared 3x3 conv blocks, 2x2 max-pool
// downsampling, nearest-neighbor upsampling and skip concatenation.  Weights
// are Glorot-uniform, drawn from a stream derived from (init_seed, layer
// name) so construction order never changes the values.
class UNet {
 public:
  explicit UNet(const UNetConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.depth;
    int prev = cfg_.in_channels;
    for (int lv = 0; lv < d; ++lv) {
      const int wdt = cfg_.base_width << lv;
      add_conv(strf("enc%d.conv1", lv), wdt, prev, 3);
      add_conv(strf("enc%d.conv2", lv), wdt, wdt, 3);
      prev = wdt;
    }
    const int bw = cfg_.base_width << d;
    add_conv("bottleneck.conv1", bw, prev, 3);
    add_conv("bottleneck.conv2", bw, bw, 3);
    prev = bw;
    for (int lv = d - 1; lv >= 0; --lv) {
      const int wdt = cfg_.base_width << lv;
      add_conv(strf("dec%d.conv1", lv), wdt, prev + wdt, 3);
      add_conv(strf("dec%d.conv2", lv), wdt, wdt, 3);
      prev = wdt;
    }
    add_conv("head", cfg_.num_classes, prev, 1);
  }

  const UNetConfig& config() const { return cfg_; }

  std::vector<NamedParam>& params() { return params_; }
  const std::vector<NamedParam>& params() const { return params_; }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  // Input (n, in_channels, h, w) -> logits (n, num_classes, h, w).
  Tensor forward(const Tensor& x, Tape* tape = nullptr) const {
    const Shape4 s = x.shape();
    if (s.c != cfg_.in_channels)
      throw ConfigError(strf("UNet::forward: expected %d input channels, got %s",
                             cfg_.in_channels, s.str().c_str()));
    const int64_t div = int64_t{1} << cfg_.depth;
    if (s.h % div != 0 || s.w % div != 0)
      throw ConfigError(strf(
          "UNet::forward: spatial extents of %s must be multiples of %lld",
          s.str().c_str(), static_cast<long long>(div)));

    size_t li = 0;  // walks params_ two entries (w, b) per conv
    auto block = [&](const Tensor& in) {
      const Tensor& w = params_[li].value;
      const Tensor& b = params_[li + 1].value;
      li += 2;
      const int pad = static_cast<int>(w.shape().h) / 2;
      return relu(bias_add(conv2d(in, w, 1, pad, tape), b, tape), tape);
    };

    std::vector<Tensor> skips;
    Tensor cur = x;
    for (int lv = 0; lv < cfg_.depth; ++lv) {
      cur = block(block(cur));
      skips.push_back(cur);
      cur = max_pool2(cur, tape);
    }
    cur = block(block(cur));
    for (int lv = cfg_.depth - 1; lv >= 0; --lv) {
      cur = concat_channels(upsample2(cur, tape), skips[static_cast<size_t>(lv)], tape);
      cur = block(block(cur));
    }
    const Tensor& hw = params_[li].value;
    const Tensor& hb = params_[li + 1].value;
    return bias_add(conv2d(cur, hw, 1, 0, tape), hb, tape);
  }

 private:
  void add_conv(const std::string& name, int out_c, int in_c, int k) {
    Tensor w = Tensor::zeros({out_c, in_c, k, k});
    const double fan_in = static_cast<double>(in_c) * k * k;
    const double fan_out = static_cast<double>(out_c) * k * k;
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    Rng rng(mix_seed({cfg_.init_seed, tag_hash(name)}));
    for (auto& v : w.data()) v = rng.uniform(-lim, lim);
    Tensor b = Tensor::zeros({1, out_c, 1, 1});
    params_.push_back({name + ".w", w});
    params_.push_back({name + ".b", b});
  }

  UNetConfig cfg_;
  std::vector<NamedParam> params_;
};

// Per-pixel argmax over channels for batch item n; equal scores pick the
// lowest class id, so an all-equal pixel maps to class 0.
inline ClassMap argmax_classes(const Tensor& logits, int64_t n = 0) {
  const Shape4 s = logits.shape();
  if (n < 0 || n >= s.n)
    throw ConfigError(strf("argmax_classes: batch index %lld out of %s",
                           static_cast<long long>(n), s.str().c_str()));
  ClassMap cm(s.h, s.w);
  const double* p = logits.data().data();
  const int64_t plane = s.h * s.w;
  for (int64_t px = 0; px < plane; ++px) {
    const int64_t base = n * s.c * plane + px;
    double best = p[base];
    int bc = 0;
    for (int64_t c = 1; c < s.c; ++c) {
      const double v = p[base + c * plane];
      if (v > best) {
        best = v;
        bc = static_cast<int>(c);
      }
    }
    cm.v[static_cast<size_t>(px)] = static_cast<uint8_t>(bc);
  }
  return cm;
}

}  // namespace lcadapt
