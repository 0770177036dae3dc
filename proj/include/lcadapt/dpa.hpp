#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "lcadapt/labelmap.hpp"
#include "lcadapt/tensor.hpp"

namespace lcadapt {

// Per-pixel normalized Shannon entropy: 0 = one-hot certainty, 1 = uniform.
struct EntropyMap {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<double> v;  // row-major, each in [0, 1]

  double at(int64_t y, int64_t x) const { return v[static_cast<size_t>(y * w + x)]; }
};

// Linear ramp of the pseudo-label budget over adaptation epochs: the selected
// fraction grows from lambda/total at epoch 1 to exactly lambda at the final
// epoch.  Epoch 0 is the pre-training sentinel (budget 0).
struct DpaSchedule {
  double lambda = 0.5;
  int total_epochs = 100;
  int current_epoch = 1;

  void validate() const {
    if (!(lambda >= 0.0) || lambda > 1.0)
      throw ConfigError(strf("DpaSchedule: lambda %g outside [0, 1]", lambda));
    if (total_epochs < 1)
      throw ConfigError(strf("DpaSchedule: total_epochs %d < 1", total_epochs));
    if (current_epoch < 0 || current_epoch > total_epochs)
      throw ConfigError(strf("DpaSchedule: epoch %d outside [0, %d]",
                             current_epoch, total_epochs));
  }
};

struct PseudoLabel {
  int32_t y = 0;
  int32_t x = 0;
  uint8_t label = 0;    // 1-based class id
  double entropy = 0.0;
};

struct PseudoLabelSet {
  std::string tile_id;
  std::vector<PseudoLabel> entries;  // ascending entropy, row-major on ties
};

// E(y,x) = -(1/ln K) * sum_k p_k ln p_k   with 0 ln 0 := 0.
inline EntropyMap entropy_map(const Tensor& probs, int64_t n = 0) {
  const Shape4 s = probs.shape();
  if (s.c < 2)
    throw ConfigError(strf("entropy_map: need at least 2 classes, got %s",
                           s.str().c_str()));
  if (n < 0 || n >= s.n)
    throw ConfigError(strf("entropy_map: batch index %lld out of %s",
                           static_cast<long long>(n), s.str().c_str()));
  EntropyMap em;
  em.h = s.h;
  em.w = s.w;
  em.v.resize(static_cast<size_t>(s.h * s.w));
  const double* p = probs.data().data();
  const int64_t plane = s.h * s.w;
  const double inv_lnk = 1.0 / std::log(static_cast<double>(s.c));
  for (int64_t px = 0; px < plane; ++px) {
    const int64_t base = n * s.c * plane + px;
    double acc = 0.0;
    for (int64_t c = 0; c < s.c; ++c) {
      const double pv = p[base + c * plane];
      if (pv > 0.0) acc -= pv * std::log(pv);
    }
    em.v[static_cast<size_t>(px)] = std::clamp(acc * inv_lnk, 0.0, 1.0);
  }
  return em;
}

// N = floor(lambda * H * W * n_e / N_e)
inline int64_t selection_budget(const DpaSchedule& sched, int64_t h, int64_t w) {
  sched.validate();
  if (h < 0 || w < 0) throw ConfigError("selection_budget: negative extent");
  const double n = sched.lambda * static_cast<double>(h) * static_cast<double>(w) *
                   static_cast<double>(sched.current_epoch) /
                   static_cast<double>(sched.total_epochs);
  return static_cast<int64_t>(std::floor(n));
}

// Select the N lowest-entropy pixels (ties resolved by row-major pixel order)
// and label each with the argmax of its probability vector (lowest class id
// on equal probabilities).  Uses a partial order; the test suite holds the
// full-sort reference.
inline PseudoLabelSet assign_pseudo_labels(const Tensor& probs,
                                           const EntropyMap& em, int64_t n_budget,
                                           int64_t n = 0,
                                           const std::string& tile_id = "") {
  const Shape4 s = probs.shape();
  if (em.h != s.h || em.w != s.w)
    throw ConfigError(strf("assign_pseudo_labels: entropy %lldx%lld vs probs %s",
                           static_cast<long long>(em.h),
                           static_cast<long long>(em.w), s.str().c_str()));
  const int64_t plane = s.h * s.w;
  if (n_budget < 0) throw ConfigError("assign_pseudo_labels: negative budget");
  if (n_budget > plane) {
    warn(strf("pseudo-label budget %lld exceeds %lld pixels; clamping",
              static_cast<long long>(n_budget), static_cast<long long>(plane)));
    n_budget = plane;
  }

  PseudoLabelSet out;
  out.tile_id = tile_id;
  if (n_budget == 0) return out;

  std::vector<int32_t> idx(static_cast<size_t>(plane));
  std::iota(idx.begin(), idx.end(), 0);
  auto lower = [&em](int32_t a, int32_t b) {
    const double ea = em.v[static_cast<size_t>(a)];
    const double eb = em.v[static_cast<size_t>(b)];
    return ea < eb || (ea == eb && a < b);
  };
  if (n_budget < plane)
    std::nth_element(idx.begin(), idx.begin() + n_budget, idx.end(), lower);
  std::sort(idx.begin(), idx.begin() + n_budget, lower);

  const double* p = probs.data().data();
  out.entries.reserve(static_cast<size_t>(n_budget));
  for (int64_t i = 0; i < n_budget; ++i) {
    const int32_t px = idx[static_cast<size_t>(i)];
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
    PseudoLabel pl;
    pl.y = px / static_cast<int32_t>(s.w);
    pl.x = px % static_cast<int32_t>(s.w);
    pl.label = static_cast<uint8_t>(bc + 1);
    pl.entropy = em.v[static_cast<size_t>(px)];
    out.entries.push_back(pl);
  }
  return out;
}

// Materialize a selection as a sparse label grid (0 away from selections).
inline LabelMap pseudo_label_map(const PseudoLabelSet& set, int64_t h, int64_t w) {
  LabelMap lm(h, w);
  for (const PseudoLabel& pl : set.entries) {
    if (pl.y < 0 || pl.y >= h || pl.x < 0 || pl.x >= w)
      throw DataError(strf("pseudo_label_map: entry (%d,%d) outside %lldx%lld",
                           pl.y, pl.x, static_cast<long long>(h),
                           static_cast<long long>(w)));
    lm.at(pl.y, pl.x) = pl.label;
  }
  return lm;
}

}  // namespace lcadapt
