#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "lcadapt/config.hpp"
#include "lcadapt/raster.hpp"

namespace lcadapt {

// Parameters of the paired-domain generator.  Source and target share the
// same class layout family and per-class spectral signatures; the target
// additionally applies per-band gain/offset, extra noise and a frequency
// skew, standing in for a real acquisition shift.
struct SynthSpec {
  int num_classes = 24;
  int tile = 32;
  std::vector<double> freq;    // class frequency vector, sums to ~1
  double freq_jitter = 0.15;   // per-tile log-normal wobble of the quotas
  double shape_rect = 0.4;     // shape mix for painted regions
  double shape_blob = 0.4;
  double shape_strip = 0.2;
  std::vector<std::array<double, 4>> band_mean;  // per class, per band
  double spectral_noise = 0.03;
  std::array<double, 4> shift_gain{1.0, 1.0, 1.0, 1.0};
  std::array<double, 4> shift_offset{0.0, 0.0, 0.0, 0.0};
  double shift_noise = 0.0;
  double freq_skew = 1.0;  // target frequencies ~ freq^skew, renormalized
  uint64_t seed = 1;

  static SynthSpec from_config(const Config& cfg) {
    SynthSpec s;
    s.num_classes = static_cast<int>(cfg.get_int("classes", s.num_classes));
    s.tile = static_cast<int>(cfg.get_int("tile", s.tile));
    s.freq = cfg.get_doubles("freq", {});
    s.freq_jitter = cfg.get_double("freq_jitter", s.freq_jitter);
    s.shape_rect = cfg.get_double("shape_rect", s.shape_rect);
    s.shape_blob = cfg.get_double("shape_blob", s.shape_blob);
    s.shape_strip = cfg.get_double("shape_strip", s.shape_strip);
    s.spectral_noise = cfg.get_double("spectral_noise", s.spectral_noise);
    auto vec4 = [&cfg](const char* key, std::array<double, 4> dflt) {
      const std::vector<double> v =
          cfg.get_doubles(key, {dflt[0], dflt[1], dflt[2], dflt[3]});
      if (v.size() == 1) return std::array<double, 4>{v[0], v[0], v[0], v[0]};
      if (v.size() != 4)
        throw ConfigError(strf("config key \"%s\": need 1 or 4 values, got %zu",
                               key, v.size()));
      return std::array<double, 4>{v[0], v[1], v[2], v[3]};
    };
    s.shift_gain = vec4("shift_gain", s.shift_gain);
    s.shift_offset = vec4("shift_offset", s.shift_offset);
    s.shift_noise = cfg.get_double("shift_noise", s.shift_noise);
    s.freq_skew = cfg.get_double("freq_skew", s.freq_skew);
    s.seed = static_cast<uint64_t>(cfg.get_int("seed", 1));
    for (int k = 1; k <= s.num_classes; ++k) {
      const std::string key = strf("class%d_mean", k);
      if (cfg.has(key)) {
        const std::vector<double> v = cfg.get_doubles(key, {});
        if (v.size() != 4)
          throw ConfigError(strf("config key \"%s\": need 4 band means", key.c_str()));
        s.band_mean.resize(static_cast<size_t>(s.num_classes), {0, 0, 0, 0});
        s.band_mean[static_cast<size_t>(k - 1)] = {v[0], v[1], v[2], v[3]};
      }
    }
    s.finalize();
    return s;
  }

  // Fill derived fields and validate.  Band means not given explicitly are
  // drawn once from the seed so both domains see the same signatures.
  void finalize() {
    if (num_classes < 2 || num_classes > 24)
      throw ConfigError(strf("synth: classes %d outside [2, 24]", num_classes));
    if (tile < 8 || tile % 2 != 0)
      throw ConfigError(strf("synth: tile %d must be even and >= 8", tile));
    if (freq.empty())
      freq.assign(static_cast<size_t>(num_classes), 1.0 / num_classes);
    if (static_cast<int>(freq.size()) != num_classes)
      throw ConfigError(strf("synth: %zu frequencies for %d classes", freq.size(),
                             num_classes));
    double sum = 0.0;
    for (double f : freq) {
      if (f < 0.0) throw ConfigError("synth: negative class frequency");
      sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-3)
      throw ConfigError(strf("synth: class frequencies sum to %.6f, expected ~1", sum));
    for (double& f : freq) f /= sum;
    const double mix = shape_rect + shape_blob + shape_strip;
    if (mix <= 0.0) throw ConfigError("synth: shape mix sums to zero");
    shape_rect /= mix;
    shape_blob /= mix;
    shape_strip /= mix;
    if (band_mean.empty()) {
      Rng rng(mix_seed({seed, tag_hash("spectral-signatures")}));
      band_mean.resize(static_cast<size_t>(num_classes));
      for (auto& m : band_mean)
        for (double& v : m) v = rng.uniform(0.10, 0.90);
    }
    if (static_cast<int>(band_mean.size()) != num_classes)
      throw ConfigError("synth: band_mean size mismatch");
  }
};

namespace detail {

// Stamp one random shape of class `k` over background pixels, painting at
// most `want`; returns how many pixels were converted.
inline int64_t stamp_shape(std::vector<uint8_t>& lab, int64_t t, uint8_t bg,
                           uint8_t k, int64_t want, const SynthSpec& spec,
                           Rng& rng) {
  int64_t painted = 0;
  auto put = [&](int64_t y, int64_t x) {
    if (painted >= want || y < 0 || y >= t || x < 0 || x >= t) return;
    uint8_t& c = lab[static_cast<size_t>(y * t + x)];
    if (c == bg) {
      c = k;
      ++painted;
    }
  };
  const double u = rng.uniform();
  if (u < spec.shape_rect) {
    const int64_t cap = std::max<int64_t>(4, std::min<int64_t>(want, t * t / 8));
    const int64_t area = rng.uniform_int(4, cap);
    const int64_t side = std::max<int64_t>(
        1, static_cast<int64_t>(std::sqrt(static_cast<double>(area))));
    const int64_t rw = std::min<int64_t>(t, rng.uniform_int(1, 2 * side));
    const int64_t rh = std::min<int64_t>(t, std::max<int64_t>(1, area / rw));
    const int64_t y0 = rng.uniform_int(0, t - rh);
    const int64_t x0 = rng.uniform_int(0, t - rw);
    for (int64_t y = y0; y < y0 + rh; ++y)
      for (int64_t x = x0; x < x0 + rw; ++x) put(y, x);
  } else if (u < spec.shape_rect + spec.shape_blob) {
    const int64_t rmax = std::max<int64_t>(
        1, std::min<int64_t>(t / 4, static_cast<int64_t>(
                                        std::sqrt(static_cast<double>(want)))));
    const int64_t ry = rng.uniform_int(1, rmax);
    const int64_t rx = rng.uniform_int(1, rmax);
    const int64_t cy = rng.uniform_int(0, t - 1);
    const int64_t cx = rng.uniform_int(0, t - 1);
    for (int64_t y = cy - ry; y <= cy + ry; ++y) {
      for (int64_t x = cx - rx; x <= cx + rx; ++x) {
        const double dy = static_cast<double>(y - cy) / static_cast<double>(ry);
        const double dx = static_cast<double>(x - cx) / static_cast<double>(rx);
        if (dy * dy + dx * dx <= 1.0) put(y, x);
      }
    }
  } else {
    const int64_t thick = rng.uniform_int(1, 2);
    const int64_t pos = rng.uniform_int(0, t - thick);
    const int orient = static_cast<int>(rng.uniform_int(0, 2));
    if (orient == 0) {  // horizontal
      for (int64_t y = pos; y < pos + thick; ++y)
        for (int64_t x = 0; x < t; ++x) put(y, x);
    } else if (orient == 1) {  // vertical
      for (int64_t x = pos; x < pos + thick; ++x)
        for (int64_t y = 0; y < t; ++y) put(y, x);
    } else {  // diagonal
      for (int64_t d = 0; d < t; ++d)
        for (int64_t s = 0; s < thick; ++s) put(d, (pos + d + s) % t);
    }
  }
  return painted;
}

// Integer quotas by largest remainder, so they sum exactly to `total`.
inline std::vector<int64_t> apportion(const std::vector<double>& weights,
                                      int64_t total) {
  const size_t n = weights.size();
  double sum = 0.0;
  for (double w : weights) sum += w;
  std::vector<int64_t> q(n, 0);
  std::vector<std::pair<double, size_t>> rem;
  int64_t used = 0;
  for (size_t i = 0; i < n; ++i) {
    const double exact = weights[i] / sum * static_cast<double>(total);
    q[i] = static_cast<int64_t>(std::floor(exact));
    used += q[i];
    rem.push_back({exact - std::floor(exact), i});
  }
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  for (int64_t i = 0; i < total - used; ++i) ++q[rem[static_cast<size_t>(i)].second];
  return q;
}

}  // namespace detail

// Paint one tile's label layout: the most frequent class forms the
// background, the rest are stamped as random shapes until each class hits an
// exact per-tile pixel quota (with a row-major fallback when free space for
// shapes runs out).
inline LabelMap synth_layout(const SynthSpec& spec, Rng& rng) {
  const int64_t t = spec.tile;
  std::vector<double> w = spec.freq;
  if (spec.freq_jitter > 0.0) {
    for (double& f : w) f *= std::exp(spec.freq_jitter * rng.normal());
  }
  const std::vector<int64_t> quota = detail::apportion(w, t * t);
  const uint8_t bg = static_cast<uint8_t>(
      1 + (std::max_element(spec.freq.begin(), spec.freq.end()) - spec.freq.begin()));

  LabelMap lm(t, t);
  std::fill(lm.v.begin(), lm.v.end(), bg);

  // paint the biggest non-background classes first so they find room
  std::vector<int> order;
  for (int k = 1; k <= spec.num_classes; ++k)
    if (k != bg) order.push_back(k);
  std::sort(order.begin(), order.end(), [&quota](int a, int b) {
    const int64_t qa = quota[static_cast<size_t>(a - 1)];
    const int64_t qb = quota[static_cast<size_t>(b - 1)];
    return qa > qb || (qa == qb && a < b);
  });

  for (int k : order) {
    int64_t remaining = quota[static_cast<size_t>(k - 1)];
    int misses = 0;
    while (remaining > 0 && misses < 50) {
      const int64_t got = detail::stamp_shape(lm.v, t, bg, static_cast<uint8_t>(k),
                                              remaining, spec, rng);
      remaining -= got;
      misses = got == 0 ? misses + 1 : 0;
    }
    for (size_t i = 0; remaining > 0 && i < lm.v.size(); ++i) {
      if (lm.v[i] == bg) {
        lm.v[i] = static_cast<uint8_t>(k);
        --remaining;
      }
    }
  }
  return lm;
}

// Render a labeled layout to four spectral bands; the target role applies the
// configured acquisition shift on top of the shared class signatures.
inline RasterScene synth_render(const SynthSpec& spec, const LabelMap& lm,
                                DomainRole role, Rng& rng) {
  RasterScene sc(lm.h, lm.w);
  const bool shifted = role == DomainRole::target;
  for (int b = 0; b < RasterScene::kBands; ++b) {
    for (int64_t y = 0; y < lm.h; ++y) {
      for (int64_t x = 0; x < lm.w; ++x) {
        const uint8_t k = lm.at(y, x);
        double v = spec.band_mean[static_cast<size_t>(k - 1)][static_cast<size_t>(b)] +
                   spec.spectral_noise * rng.normal();
        if (shifted) {
          v = spec.shift_gain[static_cast<size_t>(b)] * v +
              spec.shift_offset[static_cast<size_t>(b)];
          if (spec.shift_noise > 0.0) v += spec.shift_noise * rng.normal();
        }
        sc.band(b, y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  sc.has_labels = true;
  sc.labels = lm;
  return sc;
}

// Generate `count` labeled tiles for one role, reproducibly per (seed, role,
// index).  Target tiles keep their truth attached here; the caller is the one
// that seals it away from training.
inline DomainSet generate_domain(const SynthSpec& spec, int count, DomainRole role) {
  if (count < 1) throw ConfigError(strf("generate_domain: count %d < 1", count));
  SynthSpec s = spec;  // the target role sees skewed class frequencies
  if (role == DomainRole::target && spec.freq_skew != 1.0) {
    double sum = 0.0;
    for (double& f : s.freq) {
      f = std::pow(f, spec.freq_skew);
      sum += f;
    }
    for (double& f : s.freq) f /= sum;
  }
  const char* role_tag = role == DomainRole::source ? "source" : "target";
  DomainSet ds;
  ds.role = role;
  for (int i = 0; i < count; ++i) {
    Rng rng(mix_seed({spec.seed, tag_hash(role_tag), static_cast<uint64_t>(i)}));
    const LabelMap lm = synth_layout(s, rng);
    RasterScene sc = synth_render(s, lm, role, rng);
    sc.geo_id = strf("%s_%05d", role_tag, i);
    ds.tiles.push_back(std::move(sc));
  }
  return ds;
}

// Strip labels for training use; truth stays only in the sealed copy.
inline DomainSet strip_labels(const DomainSet& ds) {
  DomainSet out;
  out.role = ds.role;
  out.tiles = ds.tiles;
  for (auto& t : out.tiles) {
    t.has_labels = false;
    t.labels = LabelMap();
  }
  return out;
}

}  // namespace lcadapt
