#pragma once

#include <zlib.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "lcadapt/dpa.hpp"
#include "lcadapt/labelmap.hpp"
#include "lcadapt/raster.hpp"

namespace lcadapt {

using Rgb = std::array<uint8_t, 3>;

namespace detail {

inline void png_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

inline void png_chunk(std::vector<uint8_t>& out, const char type[4],
                      const std::vector<uint8_t>& data) {
  png_be32(out, static_cast<uint32_t>(data.size()));
  const size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, out.data() + type_at, static_cast<uInt>(4 + data.size()));
  png_be32(out, static_cast<uint32_t>(crc));
}

// color_type: 0 gray, 2 rgb, 3 palette; bit depth always 8.
inline void write_png(const std::string& path, int64_t w, int64_t h,
                      int color_type, int channels,
                      const std::vector<uint8_t>& pixels,
                      const std::vector<Rgb>* palette) {
  if (w < 1 || h < 1 || w > 0x7fffffff || h > 0x7fffffff)
    throw ConfigError(strf("write_png: bad extents %lldx%lld",
                           static_cast<long long>(w), static_cast<long long>(h)));
  if (pixels.size() != static_cast<size_t>(w * h * channels))
    throw ConfigError("write_png: pixel buffer size mismatch");

  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(h * (w * channels + 1)));
  for (int64_t y = 0; y < h; ++y) {
    raw.push_back(0);  // per-scanline filter: none
    const uint8_t* row = pixels.data() + y * w * channels;
    raw.insert(raw.end(), row, row + w * channels);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> zbuf(zlen);
  if (compress2(zbuf.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw NumericError("write_png: deflate failed");
  zbuf.resize(zlen);

  std::vector<uint8_t> out;
  const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  out.insert(out.end(), sig, sig + 8);
  std::vector<uint8_t> ihdr;
  png_be32(ihdr, static_cast<uint32_t>(w));
  png_be32(ihdr, static_cast<uint32_t>(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(static_cast<uint8_t>(color_type));
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // interlace
  png_chunk(out, "IHDR", ihdr);
  if (palette) {
    std::vector<uint8_t> plte;
    for (const Rgb& c : *palette) plte.insert(plte.end(), c.begin(), c.end());
    png_chunk(out, "PLTE", plte);
  }
  png_chunk(out, "IDAT", zbuf);
  png_chunk(out, "IEND", {});

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(strf("cannot write %s", path.c_str()));
  os.write(reinterpret_cast<const char*>(out.data()),
           static_cast<std::streamsize>(out.size()));
  if (!os) throw DataError(strf("write failure on %s", path.c_str()));
}

}  // namespace detail

inline void write_png_gray8(const std::string& path, int64_t w, int64_t h,
                            const std::vector<uint8_t>& pixels) {
  detail::write_png(path, w, h, 0, 1, pixels, nullptr);
}

inline void write_png_rgb8(const std::string& path, int64_t w, int64_t h,
                           const std::vector<uint8_t>& pixels) {
  detail::write_png(path, w, h, 2, 3, pixels, nullptr);
}

inline void write_png_pal8(const std::string& path, int64_t w, int64_t h,
                           const std::vector<uint8_t>& indices,
                           const std::vector<Rgb>& palette) {
  if (palette.empty() || palette.size() > 256)
    throw ConfigError(strf("write_png_pal8: palette size %zu", palette.size()));
  for (uint8_t i : indices) {
    if (i >= palette.size())
      throw DataError(strf("write_png_pal8: index %d outside palette of %zu",
                           static_cast<int>(i), palette.size()));
  }
  detail::write_png(path, w, h, 3, 1, indices, &palette);
}

// Fixed map colors: entry 0 is black for unlabeled pixels, entries 1..24 are
// mutually distinct class colors.
inline const std::vector<Rgb>& label_palette() {
  static const std::vector<Rgb> pal = {{
      {0, 0, 0},        // 0 unlabeled
      {200, 0, 0},      // 1
      {227, 94, 94},    // 2
      {255, 170, 170},  // 3
      {165, 42, 42},    // 4
      {255, 128, 64},   // 5
      {255, 255, 255},  // 6
      {190, 190, 190},  // 7
      {128, 96, 64},    // 8
      {96, 64, 128},    // 9
      {0, 255, 255},    // 10
      {255, 255, 0},    // 11
      {222, 184, 135},  // 12
      {154, 205, 50},   // 13
      {0, 128, 0},      // 14
      {34, 180, 90},    // 15
      {0, 255, 0},      // 16
      {127, 255, 212},  // 17
      {190, 255, 130},  // 18
      {0, 0, 255},      // 19
      {30, 144, 255},   // 20
      {100, 180, 230},  // 21
      {0, 0, 139},      // 22
      {245, 245, 255},  // 23
      {139, 90, 43},    // 24
  }};
  return pal;
}

inline void save_label_png(const LabelMap& lm, const std::vector<Rgb>& palette,
                           const std::string& path) {
  write_png_pal8(path, lm.w, lm.h, lm.v, palette);
}

inline void save_label_png(const LabelMap& lm, const std::string& path) {
  save_label_png(lm, label_palette(), path);
}

inline void save_classmap_png(const ClassMap& cm, const std::string& path) {
  save_label_png(to_label_map(cm), label_palette(), path);
}

inline void save_entropy_png(const EntropyMap& em, const std::string& path) {
  std::vector<uint8_t> px(em.v.size());
  for (size_t i = 0; i < em.v.size(); ++i)
    px[i] = static_cast<uint8_t>(std::lround(std::clamp(em.v[i], 0.0, 1.0) * 255.0));
  write_png_gray8(path, em.w, em.h, px);
}

// True-color composite from the red/green/blue bands.
inline void save_scene_png(const RasterScene& sc, const std::string& path) {
  std::vector<uint8_t> px(static_cast<size_t>(sc.h * sc.w * 3));
  const int rgb_bands[3] = {2, 1, 0};  // band order is blue, green, red, nir
  for (int64_t y = 0; y < sc.h; ++y) {
    for (int64_t x = 0; x < sc.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = sc.band(rgb_bands[c], y, x);
        px[static_cast<size_t>((y * sc.w + x) * 3 + c)] =
            static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
  }
  write_png_rgb8(path, sc.w, sc.h, px);
}

}  // namespace lcadapt
