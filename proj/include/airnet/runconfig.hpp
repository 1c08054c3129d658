#ifndef AIRNET_RUNCONFIG_HPP
#define AIRNET_RUNCONFIG_HPP

#include <fstream>
#include <map>
#include <string>

#include "airnet/common.hpp"

namespace airnet {

// Flat key=value configuration text. '#' starts a comment; blank lines are
// ignored. Keys are matched against a schema of known defaults, and unknown
// keys are rejected.
using KvMap = std::map<std::string, std::string>;

inline KvMap parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  KvMap out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r' || line.back() == '\t'))
      line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    std::size_t eq = line.find('=', start);
    require(eq != std::string::npos,
            "config: missing '=' at " + path + ":" + std::to_string(lineno));
    std::string key = line.substr(start, eq - start);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::string value = line.substr(eq + 1);
    std::size_t vstart = value.find_first_not_of(" \t");
    value = vstart == std::string::npos ? "" : value.substr(vstart);
    require(!key.empty(), "config: empty key at " + path + ":" + std::to_string(lineno));
    out[key] = value;
  }
  return out;
}

// File values override defaults; keys absent from the schema are errors.
inline void apply_kv_file(KvMap& effective, const std::string& path) {
  for (const auto& [k, v] : parse_kv_file(path)) {
    require(effective.count(k) > 0, "config: unknown key '" + k + "' in " + path);
    effective[k] = v;
  }
}

inline void write_kv_file(const std::string& path, const KvMap& kv) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("config: cannot open " + path + " for writing");
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
  if (!out) throw IoError("config: write failed for " + path);
}

}  // namespace airnet

#endif
