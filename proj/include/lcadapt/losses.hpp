#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lcadapt/labelmap.hpp"
#include "lcadapt/ops.hpp"
#include "lcadapt/tensor.hpp"

namespace lcadapt {

// Per-class pixel tallies with display names; the on-disk form is one line
// per class: "<id> <name> <count>".
struct ClassStats {
  std::vector<std::string> names;  // index k = class id k+1
  std::vector<int64_t> counts;

  int num_classes() const { return static_cast<int>(counts.size()); }
  int64_t total() const {
    int64_t t = 0;
    for (int64_t c : counts) t += c;
    return t;
  }
};

inline ClassStats load_class_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(strf("cannot open class-statistics file %s", path.c_str()));
  ClassStats st;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int id = 0;
    std::string name;
    int64_t count = -1;
    if (!(ls >> id >> name >> count) || count < 0) {
      throw DataError(strf("%s:%d: expected \"id name count\", got \"%s\"",
                           path.c_str(), lineno, line.c_str()));
    }
    if (id != static_cast<int>(st.counts.size()) + 1) {
      throw DataError(strf("%s:%d: class ids must run 1..K in order, got %d",
                           path.c_str(), lineno, id));
    }
    st.names.push_back(name);
    st.counts.push_back(count);
  }
  if (st.counts.empty())
    throw DataError(strf("class-statistics file %s has no classes", path.c_str()));
  return st;
}

inline void save_class_stats(const ClassStats& st, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError(strf("cannot write class-statistics file %s", path.c_str()));
  out << "# id name pixel_count\n";
  for (size_t k = 0; k < st.counts.size(); ++k) {
    out << (k + 1) << ' ' << st.names[k] << ' ' << st.counts[k] << '\n';
  }
}

// Tally labeled pixels per class over a set of label maps.
inline ClassStats count_labels(const std::vector<const LabelMap*>& maps, int K,
                               const std::vector<std::string>* names = nullptr) {
  ClassStats st;
  st.counts.assign(static_cast<size_t>(K), 0);
  for (const LabelMap* lm : maps) {
    for (uint8_t c : lm->v) {
      if (c == 0) continue;
      if (c > K)
        throw DataError(strf("count_labels: label id %d exceeds class count %d",
                             static_cast<int>(c), K));
      ++st.counts[static_cast<size_t>(c - 1)];
    }
  }
  for (int k = 0; k < K; ++k)
    st.names.push_back(names ? (*names)[static_cast<size_t>(k)] : strf("class%02d", k + 1));
  return st;
}

// Inverse-log frequency weights: W_k = 1 / ln(1 + mu_k) with mu_k the class's
// share of all labeled pixels.  Rare classes get large weights; a class that
// never occurs is treated as if it had a single pixel so its weight stays
// finite (and a warning is raised, since its weight is then resolution-bound).
struct ClassWeights {
  std::vector<double> w;  // index k = class id k+1

  double for_id(int id) const { return w[static_cast<size_t>(id - 1)]; }
  int num_classes() const { return static_cast<int>(w.size()); }
};

inline ClassWeights compute_class_weights(const ClassStats& st) {
  const int64_t total = st.total();
  if (total <= 0)
    throw ConfigError("compute_class_weights: no labeled pixels in statistics");
  ClassWeights cw;
  cw.w.resize(st.counts.size());
  for (size_t k = 0; k < st.counts.size(); ++k) {
    double mu = static_cast<double>(st.counts[k]) / static_cast<double>(total);
    if (st.counts[k] == 0) {
      mu = 1.0 / static_cast<double>(total);
      warn(strf("class %zu (%s) has zero pixels; weighting it as one pixel in %lld",
                k + 1, st.names[k].c_str(), static_cast<long long>(total)));
    }
    cw.w[k] = 1.0 / std::log1p(mu);
  }
  return cw;
}

// Class-weighted cross-entropy summed over labeled pixels:
//   loss = sum over labeled (y, x) of  W_label * (-ln max(p_label, 1e-12))
// Unlabeled pixels contribute nothing to the value or the gradient.
inline Tensor weighted_ce_loss(const Tensor& probs,
                               const std::vector<const LabelMap*>& labels,
                               const ClassWeights& weights, Tape* tape = nullptr) {
  const Shape4 s = probs.shape();
  if (static_cast<int64_t>(labels.size()) != s.n) {
    throw ConfigError(strf("weighted_ce_loss: %zu label maps for batch %s",
                           labels.size(), s.str().c_str()));
  }
  if (weights.num_classes() != static_cast<int>(s.c)) {
    throw ConfigError(strf("weighted_ce_loss: %d weights for %lld channels",
                           weights.num_classes(), static_cast<long long>(s.c)));
  }
  constexpr double kClamp = 1e-12;
  const int64_t plane = s.h * s.w;
  const double* p = probs.data().data();
  double acc = 0.0;
  for (int64_t n = 0; n < s.n; ++n) {
    const LabelMap& lm = *labels[static_cast<size_t>(n)];
    if (lm.h != s.h || lm.w != s.w) {
      throw DataError(strf("weighted_ce_loss: label map %lldx%lld vs probs %s",
                           static_cast<long long>(lm.h), static_cast<long long>(lm.w),
                           s.str().c_str()));
    }
    for (int64_t px = 0; px < plane; ++px) {
      const uint8_t l = lm.v[static_cast<size_t>(px)];
      if (l == 0) continue;
      if (l > s.c) {
        throw DataError(strf(
            "weighted_ce_loss: label id %d at tile %lld pixel (%lld,%lld) exceeds %lld classes",
            static_cast<int>(l), static_cast<long long>(n),
            static_cast<long long>(px / s.w), static_cast<long long>(px % s.w),
            static_cast<long long>(s.c)));
      }
      const double pv = p[(n * s.c + (l - 1)) * plane + px];
      acc += weights.for_id(l) * (-std::log(std::max(pv, kClamp)));
    }
  }
  Tensor out = Tensor::scalar(acc);
  check_finite(out.data(), "weighted_ce_loss forward");

  if (tape) {
    auto pi = probs.impl();
    auto oi = out.impl();
    // copy the label bytes so the closure owns its inputs
    auto lab = std::make_shared<std::vector<std::vector<uint8_t>>>();
    for (const LabelMap* lm : labels) lab->push_back(lm->v);
    auto wcopy = std::make_shared<std::vector<double>>(weights.w);
    tape->record([pi, oi, lab, wcopy]() {
      if (oi->grad.empty()) return;
      const double g = oi->grad[0];
      const Shape4 s = pi->shape;
      const int64_t plane = s.h * s.w;
      const double* p = pi->data.data();
      double* gp = detail::grad_ptr(pi);
      for (int64_t n = 0; n < s.n; ++n) {
        const std::vector<uint8_t>& lv = (*lab)[static_cast<size_t>(n)];
        for (int64_t px = 0; px < plane; ++px) {
          const uint8_t l = lv[static_cast<size_t>(px)];
          if (l == 0) continue;
          const int64_t i = (n * s.c + (l - 1)) * plane + px;
          if (p[i] > kClamp)  // inside the clamp the log is constant
            gp[i] += g * (*wcopy)[static_cast<size_t>(l - 1)] * (-1.0 / p[i]);
        }
      }
    });
  }
  return out;
}

// The two-branch objective is the plain sum; gradients from both branches
// accumulate into the one shared parameter set.
inline Tensor joint_loss(const Tensor& loss_s, const Tensor& loss_t,
                         Tape* tape = nullptr) {
  return add(loss_s, loss_t, tape);
}

}  // namespace lcadapt
