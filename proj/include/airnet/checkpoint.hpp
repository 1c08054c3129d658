#ifndef AIRNET_CHECKPOINT_HPP
#define AIRNET_CHECKPOINT_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "airnet/nn.hpp"

namespace airnet {

// Checkpoint file: UTF-8 manifest (meta lines, then one record per parameter:
// name, dtype, shape), the literal line "data", then little-endian 32-bit
// float payloads in manifest order.
constexpr const char* kCheckpointHeader = "airnet-checkpoint v1";

struct CheckpointEntry {
  std::string name;
  ShapeVec shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

template <typename T, typename P>
inline void save_checkpoint(const std::string& path, P& params,
                            const std::map<std::string, std::string>& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  out << kCheckpointHeader << '\n';
  for (const auto& [k, v] : meta) {
    require(k.find(' ') == std::string::npos, "checkpoint meta keys must not contain spaces");
    out << "meta " << k << ' ' << v << '\n';
  }
  auto named = collect_params<T>(params, /*include_buffers=*/true);
  for (const auto& np : named) {
    out << "param " << np.name << " f32";
    for (std::size_t d : np.tensor->shape) out << ' ' << d;
    out << '\n';
  }
  out << "data\n";
  for (const auto& np : named) {
    for (const T& v : np.tensor->vec()) {
      float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), sizeof(f));
    }
  }
  if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointHeader)
    throw IoError("load_checkpoint: bad header in " + path);
  Checkpoint ck;
  while (std::getline(in, line)) {
    if (line == "data") break;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ck.meta[key] = value;
    } else if (tag == "param") {
      CheckpointEntry e;
      std::string dtype;
      ls >> e.name >> dtype;
      if (dtype != "f32") throw IoError("load_checkpoint: unsupported dtype " + dtype);
      std::size_t d;
      while (ls >> d) e.shape.push_back(d);
      ck.entries.push_back(std::move(e));
    } else {
      throw IoError("load_checkpoint: unexpected manifest line: " + line);
    }
  }
  for (auto& e : ck.entries) {
    std::size_t n = 1;
    for (std::size_t d : e.shape) n *= d;
    e.values.resize(n);
    in.read(reinterpret_cast<char*>(e.values.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw IoError("load_checkpoint: truncated payload in " + path);
  }
  return ck;
}

// Copies checkpoint values into an existing parameter struct; names and
// shapes must match exactly.
template <typename T, typename P>
inline void apply_checkpoint(const Checkpoint& ck, P& params) {
  auto named = collect_params<T>(params, /*include_buffers=*/true);
  require(named.size() == ck.entries.size(), "apply_checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& e = ck.entries[i];
    require(e.name == named[i].name, "apply_checkpoint: name mismatch at " + e.name);
    require(e.shape == named[i].tensor->shape, "apply_checkpoint: shape mismatch at " + e.name);
    auto& dst = named[i].tensor->vec();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<T>(e.values[j]);
  }
}

}  // namespace airnet

#endif
