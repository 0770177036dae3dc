#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lcadapt/labelmap.hpp"

namespace lcadapt {

// K x K tally: rows = truth class, columns = predicted class (both 0-based);
// pixels with unlabeled truth are never counted.
struct ConfusionMatrix {
  int K = 0;
  std::vector<int64_t> counts;  // row-major K*K

  explicit ConfusionMatrix(int k = 0) : K(k), counts(static_cast<size_t>(k) * k, 0) {
    if (k < 0) throw ConfigError("ConfusionMatrix: negative class count");
  }

  int64_t& at(int truth, int pred) { return counts[static_cast<size_t>(truth) * K + pred]; }
  int64_t at(int truth, int pred) const {
    return counts[static_cast<size_t>(truth) * K + pred];
  }

  int64_t total() const {
    int64_t t = 0;
    for (int64_t c : counts) t += c;
    return t;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    if (o.K != K) throw ConfigError("ConfusionMatrix: adding mismatched sizes");
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
    return *this;
  }
};

// Add one count per truth-labeled (and masked-in) pixel.
inline void accumulate(ConfusionMatrix& cm, const LabelMap& truth,
                       const ClassMap& pred,
                       const std::vector<uint8_t>* mask = nullptr) {
  if (truth.h != pred.h || truth.w != pred.w)
    throw DataError(strf("accumulate: truth %lldx%lld vs prediction %lldx%lld",
                         static_cast<long long>(truth.h),
                         static_cast<long long>(truth.w),
                         static_cast<long long>(pred.h),
                         static_cast<long long>(pred.w)));
  if (mask && mask->size() != truth.v.size())
    throw DataError("accumulate: mask size mismatch");
  for (size_t i = 0; i < truth.v.size(); ++i) {
    const uint8_t t = truth.v[i];
    if (t == 0) continue;
    if (mask && !(*mask)[i]) continue;
    if (t > cm.K)
      throw DataError(strf("accumulate: truth label %d exceeds %d classes",
                           static_cast<int>(t), cm.K));
    const uint8_t p = pred.v[i];
    if (p >= cm.K)
      throw DataError(strf("accumulate: predicted class %d exceeds %d classes",
                           static_cast<int>(p), cm.K));
    ++cm.at(t - 1, p);
  }
}

// All figures in percent.  Per-class columns are defined for every class so
// reports keep a stable shape; the means run over classes that actually occur
// in the truth.  A truth-present class that is never predicted keeps UA = 0
// and is flagged in `never_predicted`.
struct MetricsReport {
  double oa = 0.0;
  std::vector<double> ua;      // precision
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<double> iou;
  std::vector<bool> truth_present;
  std::vector<bool> never_predicted;
  double mf1 = 0.0;
  double miou = 0.0;
};

inline MetricsReport metrics(const ConfusionMatrix& cm) {
  const int64_t total = cm.total();
  if (cm.K < 1 || total == 0)
    throw DataError("metrics: empty confusion matrix");
  MetricsReport r;
  r.ua.assign(static_cast<size_t>(cm.K), 0.0);
  r.recall.assign(static_cast<size_t>(cm.K), 0.0);
  r.f1.assign(static_cast<size_t>(cm.K), 0.0);
  r.iou.assign(static_cast<size_t>(cm.K), 0.0);
  r.truth_present.assign(static_cast<size_t>(cm.K), false);
  r.never_predicted.assign(static_cast<size_t>(cm.K), false);

  int64_t diag_sum = 0;
  int present = 0;
  double f1_sum = 0.0, iou_sum = 0.0;
  for (int k = 0; k < cm.K; ++k) {
    int64_t row = 0, col = 0;
    for (int j = 0; j < cm.K; ++j) {
      row += cm.at(k, j);
      col += cm.at(j, k);
    }
    const int64_t d = cm.at(k, k);
    diag_sum += d;
    r.truth_present[static_cast<size_t>(k)] = row > 0;
    r.never_predicted[static_cast<size_t>(k)] = col == 0;
    const double ua = col > 0 ? static_cast<double>(d) / static_cast<double>(col) : 0.0;
    const double rc = row > 0 ? static_cast<double>(d) / static_cast<double>(row) : 0.0;
    const double f1 = ua + rc > 0.0 ? 2.0 * ua * rc / (ua + rc) : 0.0;
    const int64_t uni = row + col - d;
    const double iou = uni > 0 ? static_cast<double>(d) / static_cast<double>(uni) : 0.0;
    r.ua[static_cast<size_t>(k)] = 100.0 * ua;
    r.recall[static_cast<size_t>(k)] = 100.0 * rc;
    r.f1[static_cast<size_t>(k)] = 100.0 * f1;
    r.iou[static_cast<size_t>(k)] = 100.0 * iou;
    if (row > 0) {
      ++present;
      f1_sum += f1;
      iou_sum += iou;
    }
  }
  r.oa = 100.0 * static_cast<double>(diag_sum) / static_cast<double>(total);
  r.mf1 = 100.0 * f1_sum / present;
  r.miou = 100.0 * iou_sum / present;
  return r;
}

// Rectangular evaluation regions on named tiles.  "sparse" marks scatterings
// of small patches, "dense" full annotated rectangles; both reduce to pixel
// masks and are evaluated identically, reported separately.
struct EvalRegion {
  int tile_index = 0;
  int64_t y0 = 0, x0 = 0, h = 0, w = 0;
};

struct EvalRegionSet {
  enum class Mode { sparse, dense };
  Mode mode = Mode::dense;
  std::vector<EvalRegion> regions;  // empty set = everything, dense

  // Pixel mask for one tile; regions are clipped to the tile.
  std::vector<uint8_t> mask_for(int tile_index, int64_t h, int64_t w) const {
    std::vector<uint8_t> m(static_cast<size_t>(h * w), regions.empty() ? 1 : 0);
    for (const EvalRegion& rg : regions) {
      if (rg.tile_index != tile_index) continue;
      const int64_t y1 = std::min(h, rg.y0 + rg.h);
      const int64_t x1 = std::min(w, rg.x0 + rg.w);
      for (int64_t y = std::max<int64_t>(0, rg.y0); y < y1; ++y)
        for (int64_t x = std::max<int64_t>(0, rg.x0); x < x1; ++x)
          m[static_cast<size_t>(y * w + x)] = 1;
    }
    return m;
  }

  static EvalRegionSet load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(strf("cannot open regions file %s", path.c_str()));
    EvalRegionSet rs;
    std::string line;
    int lineno = 0;
    bool mode_seen = false;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string word;
      ls >> word;
      if (word == "mode") {
        std::string m;
        ls >> m;
        if (m == "sparse") rs.mode = Mode::sparse;
        else if (m == "dense") rs.mode = Mode::dense;
        else
          throw DataError(strf("%s:%d: mode must be sparse or dense, got \"%s\"",
                               path.c_str(), lineno, m.c_str()));
        mode_seen = true;
      } else if (word == "region") {
        EvalRegion rg;
        if (!(ls >> rg.tile_index >> rg.y0 >> rg.x0 >> rg.h >> rg.w) ||
            rg.tile_index < 0 || rg.h < 1 || rg.w < 1)
          throw DataError(strf("%s:%d: expected \"region tile y0 x0 h w\"",
                               path.c_str(), lineno));
        rs.regions.push_back(rg);
      } else {
        throw DataError(strf("%s:%d: unknown directive \"%s\"", path.c_str(),
                             lineno, word.c_str()));
      }
    }
    if (!mode_seen)
      throw DataError(strf("%s: missing \"mode sparse|dense\" line", path.c_str()));
    return rs;
  }
};

inline const char* eval_mode_name(EvalRegionSet::Mode m) {
  return m == EvalRegionSet::Mode::sparse ? "sparse" : "dense";
}

// CSV rows: mode,class_id,class_name,UA,F1,IOU  — one row per class, then
// summary rows (class_id empty) carrying OA / mF1 / mIOU in the value
// columns.  Full precision; rounding is for the human-readable table only.
inline void write_report_csv(std::ostream& os, const std::string& mode,
                             const MetricsReport& r,
                             const std::vector<std::string>& class_names) {
  os << "mode,class_id,class_name,UA,F1,IOU\n";
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (size_t k = 0; k < r.ua.size(); ++k) {
    os << mode << ',' << (k + 1) << ',' << class_names[k] << ',' << num(r.ua[k])
       << ',' << num(r.f1[k]) << ',' << num(r.iou[k]) << '\n';
  }
  os << mode << ",,OA," << num(r.oa) << ',' << num(r.oa) << ',' << num(r.oa) << '\n';
  os << mode << ",,mF1," << num(r.mf1) << ',' << num(r.mf1) << ',' << num(r.mf1) << '\n';
  os << mode << ",,mIOU," << num(r.miou) << ',' << num(r.miou) << ',' << num(r.miou)
     << '\n';
}

// Fixed-width console table, two decimals.
inline void print_report(std::ostream& os, const std::string& mode,
                         const MetricsReport& r,
                         const std::vector<std::string>& class_names) {
  os << strf("[%s] OA %.2f  mF1 %.2f  mIOU %.2f  (means over %d truth-present classes)\n",
             mode.c_str(), r.oa, r.mf1, r.miou,
             static_cast<int>(std::count(r.truth_present.begin(),
                                         r.truth_present.end(), true)));
  os << strf("  %-3s %-20s %8s %8s %8s\n", "id", "class", "UA", "F1", "IOU");
  for (size_t k = 0; k < r.ua.size(); ++k) {
    if (!r.truth_present[k]) continue;
    os << strf("  %-3zu %-20s %8.2f %8.2f %8.2f%s\n", k + 1, class_names[k].c_str(),
               r.ua[k], r.f1[k], r.iou[k],
               r.never_predicted[k] ? "  (never predicted)" : "");
  }
}

}  // namespace lcadapt
