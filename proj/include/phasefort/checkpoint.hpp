// Copyright 2026 The PhaseFort Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Checkpoint layout (little-endian):
//
//   "PFCK" | u32 version
//   str arch | str variant | f64 gamma | u64 classes | u8 rank + u32 dims
//   u8 delta mode | f64 delta c | f64 dropout
//   u64 step | str config text
//   u32 record count, then per record:
//     str name | u64 payload length | u32 crc32(payload) | CVT1 payload
//
// Strings are u32 length + bytes. Only model parameters are stored; the
// per-inference phases and fooling partners never reach this format.

#pragma once

#include <boost/crc.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>

#include "phasefort/network.hpp"
#include "phasefort/tensor_io.hpp"

namespace phasefort {

inline constexpr char kCheckpointMagic[4] = {'P', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// What a checkpoint describes besides the weights.
struct CheckpointHeader {
  std::string arch;
  Variant variant = Variant::complex;
  double gamma = 0.0;
  BuildOptions build;
  std::uint64_t step = 0;
  std::string config;
};

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

inline NetworkDivision rebuild_division(const CheckpointHeader& h) {
  return h.variant == Variant::complex ? build(h.arch, h.build) : build_baseline(h.arch, h.variant, h.build, h.gamma);
}

template <typename T>
io::Bytes encode_checkpoint(const Network<T>& net, const CheckpointHeader& h) {
  if (rebuild_division(h) != net.division()) throw Error("checkpoint header does not describe this network");
  io::Bytes out(kCheckpointMagic, kCheckpointMagic + 4);
  io::put_u32(out, kCheckpointVersion);
  io::put_string(out, h.arch);
  io::put_string(out, to_string(h.variant));
  io::put_u64(out, std::bit_cast<std::uint64_t>(h.gamma));
  io::put_u64(out, h.build.classes);
  io::put_u8(out, static_cast<std::uint8_t>(h.build.input_shape.size()));
  for (std::size_t d : h.build.input_shape) io::put_u32(out, static_cast<std::uint32_t>(d));
  io::put_u8(out, h.build.lenet_delta == DeltaMode::channelwise ? 1 : 0);
  io::put_u64(out, std::bit_cast<std::uint64_t>(h.build.delta_c));
  io::put_u64(out, std::bit_cast<std::uint64_t>(h.build.phi_dropout));
  io::put_u64(out, h.step);
  io::put_string(out, h.config);
  const auto params = net.parameters();
  io::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    io::put_string(out, p->name);
    const io::Bytes payload = io::encode_tensor(p->value);
    io::put_u64(out, payload.size());
    io::put_u32(out, crc32(payload));
    out.insert(out.end(), payload.begin(), payload.end());
  }
  return out;
}

template <typename T>
struct LoadedCheckpoint {
  CheckpointHeader header;
  std::unique_ptr<Network<T>> net;
};

template <typename T>
LoadedCheckpoint<T> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  auto magic = r.take(4);
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  LoadedCheckpoint<T> out;
  CheckpointHeader& h = out.header;
  h.arch = r.string();
  h.variant = parse_variant(r.string());
  h.gamma = std::bit_cast<double>(r.u64());
  h.build.classes = r.u64();
  h.build.input_shape.resize(r.u8());
  for (auto& d : h.build.input_shape) d = r.u32();
  h.build.lenet_delta = r.u8() ? DeltaMode::channelwise : DeltaMode::fixed_c;
  h.build.delta_c = std::bit_cast<double>(r.u64());
  h.build.phi_dropout = std::bit_cast<double>(r.u64());
  h.step = r.u64();
  h.config = r.string();

  out.net = std::make_unique<Network<T>>(rebuild_division(h), 0);
  std::map<std::string, Parameter<T>*> by_name;
  for (auto* p : out.net->parameters()) by_name[p->name] = p;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.string();
    const std::uint64_t len = r.u64();
    const std::uint32_t crc = r.u32();
    const std::size_t at = r.offset();
    auto payload = r.take(len);
    if (crc32(payload) != crc) {
      throw FormatError("checksum mismatch in record '" + name + "' at byte offset " + std::to_string(at));
    }
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("unexpected parameter '" + name + "' in checkpoint");
    Tensor<T> v = io::decode_tensor<T>(payload);
    if (v.shape() != it->second->value.shape()) {
      throw FormatError("parameter '" + name + "' has shape " + to_string(v.shape()) + ", expected " +
                        to_string(it->second->value.shape()));
    }
    it->second->value = std::move(v);
    it->second->touch();
    by_name.erase(it);
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint records");
  if (!by_name.empty()) throw FormatError("checkpoint is missing parameter '" + by_name.begin()->first + "'");
  return out;
}

template <typename T>
void save_checkpoint(const Network<T>& net, const CheckpointHeader& h, const std::filesystem::path& path) {
  const io::Bytes bytes = encode_checkpoint(net, h);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing " + path.string());
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("checkpoint not found: " + path.string());
  std::ifstream f(path, std::ios::binary);
  const io::Bytes bytes((std::istreambuf_iterator<char>(f)), {});
  return decode_checkpoint<T>(bytes);
}

}  // namespace phasefort
