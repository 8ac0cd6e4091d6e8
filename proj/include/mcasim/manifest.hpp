// Run manifest: enough provenance (input hashes, seed, version, command
// line) to reproduce any output directory bit for bit. Wall-clock timings are
// informational only.
#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <string>

#include "mcasim/util.hpp"
#include "mcasim/version.hpp"

namespace mcasim {

struct RunManifest {
  std::string command_line;
  std::string config_hash;
  std::string case_hash;
  std::string partition_hash;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string version = kVersion;
  std::map<std::string, double> phase_seconds;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command_line"] = command_line;
    j["config_hash"] = config_hash;
    j["case_hash"] = case_hash;
    j["partition_hash"] = partition_hash;
    j["seed"] = seed;
    j["jobs"] = jobs;
    j["version"] = version;
    j["phase_seconds"] = phase_seconds;
    return j;
  }
};

inline std::string content_hash(const std::string& bytes) {
  return hex64(fnv1a64_bytes(bytes.data(), bytes.size()));
}

}  // namespace mcasim
