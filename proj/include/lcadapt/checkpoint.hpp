#pragma once

#include <cstring>
#include <fstream>
#include <string>

#include "lcadapt/raster.hpp"
#include "lcadapt/unet.hpp"

namespace lcadapt {

constexpr char kCkptMagic[8] = {'L', 'C', 'C', 'K', 'P', 'T', '0', '1'};

// Little-endian model snapshot: architecture header followed by every named
// parameter (name, 4 extents, raw doubles).  Round-trips bit-exactly.
inline void save_checkpoint(const UNet& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(strf("cannot write checkpoint %s", path.c_str()));
  os.write(kCkptMagic, 8);
  io::put_u32(os, 1);  // format version
  const UNetConfig& c = model.config();
  io::put_u32(os, static_cast<uint32_t>(c.in_channels));
  io::put_u32(os, static_cast<uint32_t>(c.num_classes));
  io::put_u32(os, static_cast<uint32_t>(c.depth));
  io::put_u32(os, static_cast<uint32_t>(c.base_width));
  io::put_u64(os, c.init_seed);
  io::put_u32(os, static_cast<uint32_t>(model.params().size()));
  for (const auto& np : model.params()) {
    io::put_str(os, np.name);
    const Shape4 s = np.value.shape();
    io::put_u64(os, static_cast<uint64_t>(s.n));
    io::put_u64(os, static_cast<uint64_t>(s.c));
    io::put_u64(os, static_cast<uint64_t>(s.h));
    io::put_u64(os, static_cast<uint64_t>(s.w));
    for (double v : np.value.data()) io::put_f64(os, v);
  }
  if (!os) throw DataError(strf("write failure on checkpoint %s", path.c_str()));
}

inline UNet load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(strf("cannot open checkpoint %s", path.c_str()));
  io::Reader r(is, path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kCkptMagic, 8) != 0)
    r.fail("bad magic (not a checkpoint)");
  const uint32_t version = r.u32();
  if (version != 1) r.fail(strf("unsupported checkpoint version %u", version));
  UNetConfig cfg;
  cfg.in_channels = static_cast<int>(r.u32());
  cfg.num_classes = static_cast<int>(r.u32());
  cfg.depth = static_cast<int>(r.u32());
  cfg.base_width = static_cast<int>(r.u32());
  cfg.init_seed = r.u64();
  cfg.validate();
  UNet model(cfg);
  const uint32_t np = r.u32();
  if (np != model.params().size())
    r.fail(strf("parameter count %u does not match architecture (%zu)", np,
                model.params().size()));
  for (auto& param : model.params()) {
    const std::string name = r.str();
    if (name != param.name)
      r.fail(strf("parameter \"%s\" where \"%s\" expected", name.c_str(),
                  param.name.c_str()));
    Shape4 s{};
    s.n = static_cast<int64_t>(r.u64());
    s.c = static_cast<int64_t>(r.u64());
    s.h = static_cast<int64_t>(r.u64());
    s.w = static_cast<int64_t>(r.u64());
    if (!(s == param.value.shape()))
      r.fail(strf("parameter \"%s\" has shape %s, expected %s", name.c_str(),
                  s.str().c_str(), param.value.shape().str().c_str()));
    for (double& v : param.value.data()) v = r.f64();
  }
  return model;
}

}  // namespace lcadapt
