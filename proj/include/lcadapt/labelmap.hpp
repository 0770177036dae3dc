#pragma once

#include <cstdint>
#include <vector>

#include "lcadapt/common.hpp"

namespace lcadapt {

// Ground-truth / pseudo-label grid.  Value 0 means "no label here"; real
// classes are 1..num_classes.
struct LabelMap {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<uint8_t> v;  // row-major, 0 = unlabeled

  LabelMap() = default;
  LabelMap(int64_t h_, int64_t w_) : h(h_), w(w_), v(static_cast<size_t>(h_ * w_), 0) {
    if (h_ < 0 || w_ < 0) throw ConfigError("LabelMap: negative extent");
  }

  uint8_t at(int64_t y, int64_t x) const { return v[static_cast<size_t>(y * w + x)]; }
  uint8_t& at(int64_t y, int64_t x) { return v[static_cast<size_t>(y * w + x)]; }
  int64_t numel() const { return h * w; }

  int64_t count_labeled() const {
    int64_t n = 0;
    for (uint8_t c : v) n += (c != 0);
    return n;
  }
};

// Dense prediction grid: every pixel holds a 0-based class id.
struct ClassMap {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<uint8_t> v;  // row-major, 0-based

  ClassMap() = default;
  ClassMap(int64_t h_, int64_t w_) : h(h_), w(w_), v(static_cast<size_t>(h_ * w_), 0) {
    if (h_ < 0 || w_ < 0) throw ConfigError("ClassMap: negative extent");
  }

  uint8_t at(int64_t y, int64_t x) const { return v[static_cast<size_t>(y * w + x)]; }
  uint8_t& at(int64_t y, int64_t x) { return v[static_cast<size_t>(y * w + x)]; }
  int64_t numel() const { return h * w; }
};

// Reinterpret a dense prediction as a fully-labeled truth grid (shifts ids up
// by one so 0 stays reserved for "unlabeled").
inline LabelMap to_label_map(const ClassMap& cm) {
  LabelMap lm(cm.h, cm.w);
  for (size_t i = 0; i < cm.v.size(); ++i) {
    if (cm.v[i] >= 255)
      throw DataError("to_label_map: class id 255 cannot be shifted");
    lm.v[i] = static_cast<uint8_t>(cm.v[i] + 1);
  }
  return lm;
}

}  // namespace lcadapt
