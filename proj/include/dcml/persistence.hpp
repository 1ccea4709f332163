/* Copyright 2026 The DCML Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef DCML_PERSISTENCE_HPP_
#define DCML_PERSISTENCE_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dcml/param_set.hpp"
#include "dcml/synthetic_data.hpp"

// Named-array container shared by checkpoints and dataset files. All
// integers and floats are little-endian.
//
//   char[8]  magic "DCMLARR\0"
//   u32      format version
//   str      kind                      (str = u32 byte length + bytes)
//   u32      metadata count, then (str key, str value) pairs
//   u32      array count, then per array:
//              str name, u8 dtype (0 = f64, 1 = i64), u8 flags (bit 0 =
//              trainable), u32 rank, u64 dims[rank], 8-byte elements
namespace dcml {

inline constexpr std::string_view kContainerMagic{"DCMLARR\0", 8};
inline constexpr std::uint32_t kContainerVersion = 1;

enum class DType : std::uint8_t { kFloat64 = 0, kInt64 = 1 };

struct ArrayRecord {
  std::string name;
  DType dtype = DType::kFloat64;
  bool trainable = true;
  std::vector<std::uint64_t> shape;
  std::vector<double> f64;
  std::vector<std::int64_t> i64;

  std::uint64_t element_count() const;
};

struct Container {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<ArrayRecord> arrays;

  const std::string& meta(std::string_view key) const;
  const ArrayRecord& array(std::string_view name) const;
};

std::string encode_container(const Container& c);
Container decode_container(std::string_view bytes);

std::string read_file_bytes(const std::filesystem::path& path);
// Writes via a temporary file and rename.
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

ArrayRecord to_record(const std::string& name, const Tensor& t, bool trainable);
Tensor to_tensor(const ArrayRecord& r);

struct Checkpoint {
  std::uint32_t format_version = kContainerVersion;
  std::string config_hash;
  std::string config_text;
  std::int64_t iteration = 0;
  ParamSet params;
  std::int64_t optimizer_steps = 0;
  ParamSet optimizer_m;  // may be empty
  ParamSet optimizer_v;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Throws ConfigError on mismatch unless `allow_mismatch`.
void check_config_hash(const Checkpoint& ckpt, const std::string& expected,
                       bool allow_mismatch);

std::string encode_dataset(const DomainDataset& data);
DomainDataset decode_dataset(std::string_view bytes);
void save_dataset(const std::filesystem::path& path, const DomainDataset& data);
DomainDataset load_dataset(const std::filesystem::path& path);

}  // namespace dcml

#endif  // DCML_PERSISTENCE_HPP_
