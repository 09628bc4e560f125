#pragma once

#include <cstdint>
#include <string>

#include "traffic/net.hpp"
#include "traffic/util.hpp"

namespace traffic {

// Model file layout (all little-endian):
//   magic "TLQN", u32 version (=1),
//   u32 input_dim, u32 hidden_layers, u32 num_neurons, u32 output_dim,
//   u64 training_seed,
//   then per weight layer: out*in f64 weights (row-major), out f64 biases.
// No padding, no trailing bytes; save -> load -> save is byte-identical.

inline constexpr uint32_t kModelVersion = 1;
inline constexpr char kModelMagic[4] = {'T', 'L', 'Q', 'N'};

struct LoadedModel {
  QNetwork net;
  uint64_t training_seed = 0;
};

inline std::string serialize_model(const QNetwork& net, uint64_t training_seed) {
  std::string out;
  out.append(kModelMagic, 4);
  put_u32(out, kModelVersion);
  const NetSpec& s = net.spec();
  put_u32(out, static_cast<uint32_t>(s.input_dim));
  put_u32(out, static_cast<uint32_t>(s.hidden_layers));
  put_u32(out, static_cast<uint32_t>(s.num_neurons));
  put_u32(out, static_cast<uint32_t>(s.output_dim));
  put_u64(out, training_seed);
  for (const Layer& l : net.layers()) {
    for (double w : l.w) put_f64(out, w);
    for (double b : l.b) put_f64(out, b);
  }
  return out;
}

inline LoadedModel deserialize_model(const std::string& bytes, const std::string& name) {
  if (bytes.size() < 8 || bytes.compare(0, 4, kModelMagic, 4) != 0)
    throw ModelFormatError(name + ": not a model file");
  ByteReader r(bytes, name);
  r.get_u32();  // magic, already checked
  const uint32_t version = r.get_u32();
  if (version != kModelVersion)
    throw ModelFormatError(name + ": unsupported model format version " + std::to_string(version));
  NetSpec spec;
  spec.input_dim = static_cast<int>(r.get_u32());
  spec.hidden_layers = static_cast<int>(r.get_u32());
  spec.num_neurons = static_cast<int>(r.get_u32());
  spec.output_dim = static_cast<int>(r.get_u32());
  spec.validate();
  LoadedModel m;
  m.training_seed = r.get_u64();
  m.net = QNetwork::zeros(spec);
  for (Layer& l : m.net.layers_mut()) {
    for (double& w : l.w) w = r.get_f64();
    for (double& b : l.b) b = r.get_f64();
  }
  if (!r.at_end()) throw ModelFormatError(name + ": trailing bytes");
  return m;
}

inline void save_model(const std::string& path, const QNetwork& net, uint64_t training_seed) {
  write_file_atomic(path, serialize_model(net, training_seed));
}

inline LoadedModel load_model(const std::string& path) {
  return deserialize_model(read_file(path), path);
}

}  // namespace traffic
