// SPDX-License-Identifier: Apache-2.0
#include "compnet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "compnet/errors.hpp"

namespace compnet {
namespace {

constexpr char kMagic[4] = {'C', 'N', 'E', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataFormatError("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const ModelParams& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);

  os.write(kMagic, 4);
  write_pod(os, kVersion);
  write_pod(os, static_cast<uint8_t>(model.variant));
  const EncoderSpec& enc = model.encoder.spec();
  write_pod(os, static_cast<uint8_t>(enc.kind));
  write_pod(os, static_cast<int32_t>(enc.input_dim));
  write_pod(os, static_cast<int32_t>(enc.hidden_dim));
  write_pod(os, static_cast<int32_t>(model.feature_dim));
  write_pod(os, static_cast<int32_t>(model.num_attrs()));
  write_pod(os, static_cast<int32_t>(model.num_objs()));
  write_pod(os, model.comp.leaky_slope);
  write_pod(os, model.comp.dropout_rate);

  write_pod(os, static_cast<uint64_t>(model.fc.pairs.size()));
  for (const Pair& p : model.fc.pairs) {
    write_pod(os, static_cast<int32_t>(p.attr));
    write_pod(os, static_cast<int32_t>(p.obj));
  }

  // const_cast: the visitor only reads here.
  auto& m = const_cast<ModelParams&>(model);
  m.for_each_tensor([&os](const char*, double* p, size_t n) {
    write_pod(os, static_cast<uint64_t>(n));
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  });
  if (!os) throw IoError("checkpoint write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);

  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw DataFormatError("not a checkpoint file: " + path);
  const auto version = read_pod<uint32_t>(is);
  if (version != kVersion) throw DataFormatError("unsupported checkpoint version");

  ModelSpec spec;
  spec.variant = static_cast<ModelVariant>(read_pod<uint8_t>(is));
  spec.encoder.kind = static_cast<EncoderKind>(read_pod<uint8_t>(is));
  spec.encoder.input_dim = read_pod<int32_t>(is);
  spec.encoder.hidden_dim = read_pod<int32_t>(is);
  spec.feature_dim = read_pod<int32_t>(is);
  spec.num_attrs = read_pod<int32_t>(is);
  spec.num_objs = read_pod<int32_t>(is);
  spec.leaky_slope = read_pod<double>(is);
  spec.dropout_rate = read_pod<double>(is);

  const auto num_fc = read_pod<uint64_t>(is);
  spec.fc_pairs.reserve(num_fc);
  for (uint64_t i = 0; i < num_fc; ++i) {
    Pair p;
    p.attr = read_pod<int32_t>(is);
    p.obj = read_pod<int32_t>(is);
    spec.fc_pairs.push_back(p);
  }

  // Shapes come from the spec; values are then overwritten tensor by tensor.
  ModelParams model = ModelParams::init(spec, 0);
  model.for_each_tensor([&is](const char* name, double* p, size_t n) {
    const auto stored = read_pod<uint64_t>(is);
    if (stored != n)
      throw DataFormatError(std::string("checkpoint tensor size mismatch for ") + name);
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw DataFormatError("checkpoint truncated");
  });
  return model;
}

}  // namespace compnet
