// Copyright 2026 the zsr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "zsr/train.hpp"

namespace zsr::train {

namespace {

constexpr char kMagic[8] = {'Z', 'S', 'R', 'C', 'K', 'P', 'T', '2'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ofstream& f, uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t read_u32(std::ifstream& f) {
  uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const nn::ParamStore& store,
                     const std::string& config_echo) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write(kMagic, 8);
  write_u32(f, kVersion);
  write_u32(f, static_cast<uint32_t>(config_echo.size()));
  f.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
  write_u32(f, static_cast<uint32_t>(store.size()));
  for (const auto& p : store.all()) {
    write_u32(f, static_cast<uint32_t>(p.name.size()));
    f.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    uint8_t role = static_cast<uint8_t>(p.role);
    uint8_t group = static_cast<uint8_t>(p.group);
    f.write(reinterpret_cast<const char*>(&role), 1);
    f.write(reinterpret_cast<const char*>(&group), 1);
    write_u32(f, static_cast<uint32_t>(p.value.shape.size()));
    for (int d : p.value.shape) write_u32(f, static_cast<uint32_t>(d));
    std::vector<float> blob(p.value.v.size());
    for (size_t i = 0; i < blob.size(); ++i)
      blob[i] = static_cast<float>(p.value.v[i]);
    f.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("save_checkpoint: write failed " + path);
}

std::string checkpoint_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  uint32_t version = read_u32(f);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version");
  uint32_t len = read_u32(f);
  std::string cfg(len, '\0');
  f.read(cfg.data(), len);
  if (!f) throw std::runtime_error("checkpoint: truncated config");
  return cfg;
}

void load_checkpoint_params(const std::string& path, nn::ParamStore& store) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  if (read_u32(f) != kVersion)
    throw std::runtime_error("checkpoint: unsupported version");
  uint32_t cfg_len = read_u32(f);
  f.seekg(cfg_len, std::ios::cur);
  uint32_t count = read_u32(f);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = read_u32(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    uint8_t role = 0, group = 0;
    f.read(reinterpret_cast<char*>(&role), 1);
    f.read(reinterpret_cast<char*>(&group), 1);
    uint32_t ndim = read_u32(f);
    std::vector<int> shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d)
      shape[d] = static_cast<int>(read_u32(f));
    int64_t numel = Tensor::numel_of(shape);
    std::vector<float> blob(static_cast<size_t>(numel));
    f.read(reinterpret_cast<char*>(blob.data()),
           static_cast<std::streamsize>(blob.size() * sizeof(float)));
    if (!f) throw std::runtime_error("checkpoint: truncated blob " + name);
    int id = store.find(name);
    if (id < 0)
      throw std::runtime_error("checkpoint: unknown parameter " + name);
    nn::Param& p = store.at(id);
    if (p.value.shape != shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    for (size_t j = 0; j < blob.size(); ++j)
      p.value.v[j] = static_cast<double>(blob[j]);
  }
}

void poison_train_only(nn::ParamStore& store) {
  for (auto& p : store.all())
    if (p.role == nn::Role::kTrainOnly)
      for (double& v : p.value.v)
        v = std::numeric_limits<double>::quiet_NaN();
}

}  // namespace zsr::train
