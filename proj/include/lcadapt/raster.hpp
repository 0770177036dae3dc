#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lcadapt/labelmap.hpp"
#include "lcadapt/tensor.hpp"

namespace lcadapt {

namespace io {

// Little-endian primitives with explicit byte packing so files are portable
// across hosts.  The reader tracks its offset for error messages.
inline void put_u8(std::ostream& os, uint8_t v) {
  os.put(static_cast<char>(v));
}
inline void put_u32(std::ostream& os, uint32_t v) {
  char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
               static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
  os.write(b, 4);
}
inline void put_u64(std::ostream& os, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
  os.write(b, 8);
}
inline void put_f64(std::ostream& os, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(os, u);
}
inline void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

  uint64_t offset() const { return off_; }
  const std::string& path() const { return path_; }

  void bytes(void* dst, size_t n) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is_.gcount()) != n) {
      throw DataError(strf("%s: truncated at offset %llu (wanted %zu bytes)",
                           path_.c_str(), static_cast<unsigned long long>(off_), n));
    }
    off_ += n;
  }
  uint8_t u8() {
    uint8_t b;
    bytes(&b, 1);
    return b;
  }
  uint32_t u32() {
    uint8_t b[4];
    bytes(b, 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }
  uint64_t u64() {
    uint8_t b[8];
    bytes(b, 8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  double f64() {
    const uint64_t u = u64();
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
  std::string str(uint32_t max_len = 1u << 20) {
    const uint32_t n = u32();
    if (n > max_len)
      throw DataError(strf("%s: string length %u at offset %llu is implausible",
                           path_.c_str(), n,
                           static_cast<unsigned long long>(off_ - 4)));
    std::string s(n, '\0');
    if (n) bytes(s.data(), n);
    return s;
  }
  [[noreturn]] void fail(const std::string& what) {
    throw DataError(strf("%s: %s at offset %llu", path_.c_str(), what.c_str(),
                         static_cast<unsigned long long>(off_)));
  }

 private:
  std::istream& is_;
  std::string path_;
  uint64_t off_ = 0;
};

}  // namespace io

enum class ResTag : uint8_t { native = 0, x2 = 1, x2_5 = 2 };

inline const char* res_tag_name(ResTag t) {
  switch (t) {
    case ResTag::native: return "native";
    case ResTag::x2: return "x2";
    case ResTag::x2_5: return "x2.5";
  }
  return "?";
}

// One multispectral tile: four band planes (blue, green, red, near-infrared)
// in [0,1], an optional label grid, and provenance strings.
struct RasterScene {
  static constexpr int kBands = 4;

  int64_t h = 0;
  int64_t w = 0;
  std::vector<double> bands;  // band-major: bands[b*h*w + y*w + x]
  bool has_labels = false;
  LabelMap labels;
  std::string geo_id;
  ResTag tag = ResTag::native;

  RasterScene() = default;
  RasterScene(int64_t h_, int64_t w_)
      : h(h_), w(w_), bands(static_cast<size_t>(kBands * h_ * w_), 0.0) {
    if (h_ < 1 || w_ < 1) throw ConfigError("RasterScene: non-positive extent");
  }

  double band(int b, int64_t y, int64_t x) const {
    return bands[static_cast<size_t>((b * h + y) * w + x)];
  }
  double& band(int b, int64_t y, int64_t x) {
    return bands[static_cast<size_t>((b * h + y) * w + x)];
  }

  void validate() const {
    if (bands.size() != static_cast<size_t>(kBands * h * w))
      throw DataError(strf("scene %s: band buffer size %zu != %lld",
                           geo_id.c_str(), bands.size(),
                           static_cast<long long>(kBands * h * w)));
    for (size_t i = 0; i < bands.size(); ++i) {
      const double v = bands[i];
      if (!(v >= 0.0 && v <= 1.0))
        throw DataError(strf("scene %s: band value %g at flat index %zu outside [0,1]",
                             geo_id.c_str(), v, i));
    }
    if (has_labels && (labels.h != h || labels.w != w))
      throw DataError(strf("scene %s: label extents %lldx%lld != %lldx%lld",
                           geo_id.c_str(), static_cast<long long>(labels.h),
                           static_cast<long long>(labels.w),
                           static_cast<long long>(h), static_cast<long long>(w)));
  }
};

constexpr char kMsrMagic[8] = {'M', 'S', 'R', 'A', 'S', 'T', 'R', '1'};

inline void save_scene(const RasterScene& sc, const std::string& path) {
  sc.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(strf("cannot write %s", path.c_str()));
  os.write(kMsrMagic, 8);
  io::put_u32(os, 1);  // format version
  io::put_u32(os, RasterScene::kBands);
  io::put_u64(os, static_cast<uint64_t>(sc.h));
  io::put_u64(os, static_cast<uint64_t>(sc.w));
  io::put_u8(os, sc.has_labels ? 1 : 0);
  io::put_u8(os, static_cast<uint8_t>(sc.tag));
  io::put_str(os, sc.geo_id);
  for (double v : sc.bands) io::put_f64(os, v);
  if (sc.has_labels)
    os.write(reinterpret_cast<const char*>(sc.labels.v.data()),
             static_cast<std::streamsize>(sc.labels.v.size()));
  if (!os) throw DataError(strf("write failure on %s", path.c_str()));
}

inline RasterScene load_scene(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(strf("cannot open %s", path.c_str()));
  io::Reader r(is, path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMsrMagic, 8) != 0) r.fail("bad magic (not a .msr raster)");
  const uint32_t version = r.u32();
  if (version != 1) r.fail(strf("unsupported format version %u", version));
  const uint32_t nb = r.u32();
  if (nb != RasterScene::kBands) r.fail(strf("expected 4 bands, file has %u", nb));
  const uint64_t h = r.u64();
  const uint64_t w = r.u64();
  if (h < 1 || w < 1 || h > (1u << 20) || w > (1u << 20))
    r.fail(strf("implausible extents %llux%llu", static_cast<unsigned long long>(h),
                static_cast<unsigned long long>(w)));
  const uint8_t has_labels = r.u8();
  if (has_labels > 1) r.fail(strf("bad label flag %u", has_labels));
  const uint8_t tag = r.u8();
  if (tag > 2) r.fail(strf("bad resolution tag %u", tag));
  RasterScene sc(static_cast<int64_t>(h), static_cast<int64_t>(w));
  sc.tag = static_cast<ResTag>(tag);
  sc.geo_id = r.str();
  for (double& v : sc.bands) v = r.f64();
  if (has_labels) {
    sc.has_labels = true;
    sc.labels = LabelMap(sc.h, sc.w);
    r.bytes(sc.labels.v.data(), sc.labels.v.size());
  }
  sc.validate();
  return sc;
}

// Pack scenes into an (n, 4, h, w) batch; all scenes must share extents.
inline Tensor batch_to_tensor(const std::vector<const RasterScene*>& scenes) {
  if (scenes.empty()) throw ConfigError("batch_to_tensor: empty batch");
  const int64_t h = scenes[0]->h, w = scenes[0]->w;
  Tensor t = Tensor::zeros({static_cast<int64_t>(scenes.size()),
                            RasterScene::kBands, h, w});
  double* p = t.data().data();
  const int64_t per = RasterScene::kBands * h * w;
  for (size_t i = 0; i < scenes.size(); ++i) {
    if (scenes[i]->h != h || scenes[i]->w != w)
      throw DataError(strf("batch_to_tensor: scene %s is %lldx%lld, batch is %lldx%lld",
                           scenes[i]->geo_id.c_str(),
                           static_cast<long long>(scenes[i]->h),
                           static_cast<long long>(scenes[i]->w),
                           static_cast<long long>(h), static_cast<long long>(w)));
    std::copy(scenes[i]->bands.begin(), scenes[i]->bands.end(),
              p + static_cast<int64_t>(i) * per);
  }
  return t;
}

inline Tensor to_tensor(const RasterScene& sc) { return batch_to_tensor({&sc}); }

enum class DomainRole { source, target };

// An ordered bag of tiles playing one role.  Source tiles must all carry
// labels; target tiles may carry them on disk (sealed truth) but training
// code never reads them.
struct DomainSet {
  DomainRole role = DomainRole::source;
  std::vector<RasterScene> tiles;

  void validate() const {
    if (role == DomainRole::source) {
      for (const auto& t : tiles) {
        if (!t.has_labels)
          throw DataError(strf("source tile %s has no labels", t.geo_id.c_str()));
      }
    }
  }
};

inline std::string tile_filename(int index) { return strf("tile_%05d.msr", index); }

inline void save_domain(const DomainSet& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (size_t i = 0; i < ds.tiles.size(); ++i)
    save_scene(ds.tiles[i], dir + "/" + tile_filename(static_cast<int>(i)));
}

inline DomainSet load_domain(const std::string& dir, DomainRole role) {
  DomainSet ds;
  ds.role = role;
  for (int i = 0;; ++i) {
    const std::string path = dir + "/" + tile_filename(i);
    if (!std::filesystem::exists(path)) break;
    ds.tiles.push_back(load_scene(path));
  }
  if (ds.tiles.empty())
    throw DataError(strf("no tiles found under %s (expected tile_00000.msr...)",
                         dir.c_str()));
  ds.validate();
  return ds;
}

}  // namespace lcadapt
