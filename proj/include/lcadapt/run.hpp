#pragma once

#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "lcadapt/common.hpp"
#include "lcadapt/config.hpp"

namespace lcadapt {

inline std::string iso_utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Stable identifier for a run: a hash of everything that determines its
// outputs (command, the fully resolved configuration, seed and input paths).
inline std::string run_id_for(const std::string& command,
                              const std::string& resolved_config, uint64_t seed,
                              const std::vector<std::string>& inputs) {
  uint64_t h = mix_seed({tag_hash(command), tag_hash(resolved_config), seed});
  for (const std::string& in : inputs) h = mix_seed({h, tag_hash(in)});
  return strf("%016llx", static_cast<unsigned long long>(h));
}

// What a run directory remembers about itself.  `config.resolved` next to it
// holds the exact configuration; re-running the recorded command on the
// recorded inputs reproduces the outputs byte for byte (timestamps live only
// here, never in outputs).
struct RunManifest {
  std::string command;
  std::string run_id;
  uint64_t seed = 0;
  std::string created;
  std::vector<std::pair<std::string, std::string>> paths;  // role -> path

  void add_path(const std::string& role, const std::string& path) {
    paths.push_back({role, path});
  }

  void save(const std::string& run_dir, const Config& resolved) const {
    std::filesystem::create_directories(run_dir);
    {
      std::ofstream os(run_dir + "/config.resolved");
      if (!os) throw DataError(strf("cannot write %s/config.resolved", run_dir.c_str()));
      os << resolved.resolved_text();
    }
    std::ofstream os(run_dir + "/manifest.txt");
    if (!os) throw DataError(strf("cannot write %s/manifest.txt", run_dir.c_str()));
    os << "command = " << command << "\n";
    os << "run_id = " << run_id << "\n";
    os << "seed = " << seed << "\n";
    os << "created = " << created << "\n";
    for (const auto& [role, path] : paths) os << role << " = " << path << "\n";
  }

  static RunManifest load(const std::string& path) {
    const Config c = Config::from_file(path);
    RunManifest m;
    m.command = c.require_str("command");
    m.run_id = c.require_str("run_id");
    m.seed = static_cast<uint64_t>(c.get_int("seed", 0));
    m.created = c.get_str("created", "");
    for (const std::string& k : c.keys()) {
      if (k == "command" || k == "run_id" || k == "seed" || k == "created") continue;
      m.paths.push_back({k, c.get_str(k, "")});
    }
    return m;
  }

  std::string path_for(const std::string& role) const {
    for (const auto& [r, p] : paths)
      if (r == role) return p;
    throw DataError(strf("manifest has no \"%s\" path", role.c_str()));
  }
};

}  // namespace lcadapt
