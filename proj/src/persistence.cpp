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

#include "dcml/persistence.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace dcml {
namespace {

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::string_view bytes(std::size_t n) {
    if (n > in_.size() - pos_) throw ConfigError("container: truncated file");
    std::string_view s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::string str() { return std::string(bytes(u32())); }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

constexpr const char* kParamPrefix = "param/";
constexpr const char* kMomentPrefix = "adam_m/";
constexpr const char* kVariancePrefix = "adam_v/";

void append_params(Container& c, const ParamSet& p, const std::string& prefix) {
  for (const auto& e : p) {
    c.arrays.push_back(to_record(prefix + e.name, e.value, e.trainable));
  }
}

ParamSet extract_params(const Container& c, const std::string& prefix) {
  ParamSet out;
  for (const auto& r : c.arrays) {
    if (r.name.starts_with(prefix)) {
      out.insert(r.name.substr(prefix.size()), to_tensor(r), r.trainable);
    }
  }
  return out;
}

std::int64_t parse_int(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("container: bad integer for ") + what);
  }
}

double parse_double(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("container: bad number for ") + what);
  }
}

std::string exact(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

std::vector<int> to_ints(const ArrayRecord& r) {
  if (r.dtype != DType::kInt64) {
    throw ConfigError("container: array '" + r.name + "' must be int64");
  }
  return {r.i64.begin(), r.i64.end()};
}

ArrayRecord int_record(const std::string& name, const std::vector<int>& v) {
  ArrayRecord r;
  r.name = name;
  r.dtype = DType::kInt64;
  r.shape = {v.size()};
  r.i64.assign(v.begin(), v.end());
  return r;
}

}  // namespace

std::uint64_t ArrayRecord::element_count() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

const std::string& Container::meta(std::string_view key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  throw ConfigError("container: missing metadata '" + std::string(key) + "'");
}

const ArrayRecord& Container::array(std::string_view name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw ConfigError("container: missing array '" + std::string(name) + "'");
}

std::string encode_container(const Container& c) {
  Writer w;
  w.bytes(kContainerMagic);
  w.u32(kContainerVersion);
  w.str(c.kind);
  w.u32(static_cast<std::uint32_t>(c.metadata.size()));
  for (const auto& [k, v] : c.metadata) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(c.arrays.size()));
  for (const auto& a : c.arrays) {
    const std::uint64_t n = a.element_count();
    const std::size_t have = a.dtype == DType::kFloat64 ? a.f64.size() : a.i64.size();
    if (have != n) {
      throw ConfigError("container: array '" + a.name +
                        "' size does not match its shape");
    }
    w.str(a.name);
    w.u8(static_cast<std::uint8_t>(a.dtype));
    w.u8(a.trainable ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) w.u64(d);
    if (a.dtype == DType::kFloat64) {
      for (double v : a.f64) w.u64(std::bit_cast<std::uint64_t>(v));
    } else {
      for (std::int64_t v : a.i64) w.u64(static_cast<std::uint64_t>(v));
    }
  }
  return w.take();
}

Container decode_container(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(kContainerMagic.size()) != kContainerMagic) {
    throw ConfigError("container: bad magic (not a DCML array file)");
  }
  const std::uint32_t version = r.u32();
  if (version != kContainerVersion) {
    throw ConfigError("container: unsupported format version " +
                      std::to_string(version));
  }
  Container c;
  c.kind = r.str();
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    c.metadata.emplace_back(std::move(k), r.str());
  }
  const std::uint32_t n_arrays = r.u32();
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    ArrayRecord a;
    a.name = r.str();
    const std::uint8_t dtype = r.u8();
    if (dtype > 1) throw ConfigError("container: unknown dtype");
    a.dtype = static_cast<DType>(dtype);
    a.trainable = (r.u8() & 1) != 0;
    const std::uint32_t rank = r.u32();
    for (std::uint32_t d = 0; d < rank; ++d) a.shape.push_back(r.u64());
    const std::uint64_t n = a.element_count();
    if (n > bytes.size() / 8) throw ConfigError("container: truncated file");
    if (a.dtype == DType::kFloat64) {
      a.f64.reserve(n);
      for (std::uint64_t k = 0; k < n; ++k) a.f64.push_back(std::bit_cast<double>(r.u64()));
    } else {
      a.i64.reserve(n);
      for (std::uint64_t k = 0; k < n; ++k) {
        a.i64.push_back(static_cast<std::int64_t>(r.u64()));
      }
    }
    c.arrays.push_back(std::move(a));
  }
  if (!r.done()) throw ConfigError("container: trailing bytes");
  return c;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

ArrayRecord to_record(const std::string& name, const Tensor& t, bool trainable) {
  ArrayRecord r;
  r.name = name;
  r.trainable = trainable;
  r.shape = {static_cast<std::uint64_t>(t.rows()),
             static_cast<std::uint64_t>(t.cols())};
  r.f64.assign(t.data(), t.data() + t.size());
  return r;
}

Tensor to_tensor(const ArrayRecord& r) {
  if (r.dtype != DType::kFloat64 || r.shape.size() != 2) {
    throw ConfigError("container: array '" + r.name +
                      "' is not a rank-2 float64 array");
  }
  Tensor t(static_cast<Eigen::Index>(r.shape[0]),
           static_cast<Eigen::Index>(r.shape[1]));
  std::copy(r.f64.begin(), r.f64.end(), t.data());
  return t;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Container c;
  c.kind = "checkpoint";
  c.metadata = {{"format_version", std::to_string(ckpt.format_version)},
                {"config_hash", ckpt.config_hash},
                {"config", ckpt.config_text},
                {"iteration", std::to_string(ckpt.iteration)},
                {"optimizer_steps", std::to_string(ckpt.optimizer_steps)}};
  append_params(c, ckpt.params, kParamPrefix);
  append_params(c, ckpt.optimizer_m, kMomentPrefix);
  append_params(c, ckpt.optimizer_v, kVariancePrefix);
  return encode_container(c);
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  const Container c = decode_container(bytes);
  if (c.kind != "checkpoint") {
    throw ConfigError("expected a checkpoint file, found '" + c.kind + "'");
  }
  Checkpoint ckpt;
  ckpt.format_version =
      static_cast<std::uint32_t>(parse_int(c.meta("format_version"), "format_version"));
  ckpt.config_hash = c.meta("config_hash");
  ckpt.config_text = c.meta("config");
  ckpt.iteration = parse_int(c.meta("iteration"), "iteration");
  ckpt.optimizer_steps = parse_int(c.meta("optimizer_steps"), "optimizer_steps");
  ckpt.params = extract_params(c, kParamPrefix);
  ckpt.optimizer_m = extract_params(c, kMomentPrefix);
  ckpt.optimizer_v = extract_params(c, kVariancePrefix);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

void check_config_hash(const Checkpoint& ckpt, const std::string& expected,
                       bool allow_mismatch) {
  if (ckpt.config_hash != expected && !allow_mismatch) {
    throw ConfigError("checkpoint config hash " + ckpt.config_hash +
                      " does not match current config " + expected +
                      " (pass the override flag to load anyway)");
  }
}

std::string encode_dataset(const DomainDataset& data) {
  const GeneratorSpec& s = data.spec;
  Container c;
  c.kind = "dataset";
  c.metadata = {{"num_domains", std::to_string(s.num_domains)},
                {"num_concepts", std::to_string(s.num_concepts)},
                {"latent_dim", std::to_string(s.latent_dim)},
                {"image_dim", std::to_string(s.image_dim)},
                {"text_dim", std::to_string(s.text_dim)},
                {"domain_shift", exact(s.domain_shift)},
                {"noise_std", exact(s.noise_std)},
                {"samples_per_domain", std::to_string(s.samples_per_domain)},
                {"seed", std::to_string(s.seed)}};
  c.arrays.push_back(to_record("x", data.x, false));
  c.arrays.push_back(to_record("t", data.t, false));
  c.arrays.push_back(to_record("latents", data.latents, false));
  c.arrays.push_back(int_record("domain_ids", data.domain_ids));
  c.arrays.push_back(int_record("concept_ids", data.concept_ids));
  return encode_container(c);
}

DomainDataset decode_dataset(std::string_view bytes) {
  const Container c = decode_container(bytes);
  if (c.kind != "dataset") {
    throw ConfigError("expected a dataset file, found '" + c.kind + "'");
  }
  DomainDataset d;
  GeneratorSpec& s = d.spec;
  s.num_domains = static_cast<int>(parse_int(c.meta("num_domains"), "num_domains"));
  s.num_concepts = static_cast<int>(parse_int(c.meta("num_concepts"), "num_concepts"));
  s.latent_dim = static_cast<int>(parse_int(c.meta("latent_dim"), "latent_dim"));
  s.image_dim = static_cast<int>(parse_int(c.meta("image_dim"), "image_dim"));
  s.text_dim = static_cast<int>(parse_int(c.meta("text_dim"), "text_dim"));
  s.domain_shift = parse_double(c.meta("domain_shift"), "domain_shift");
  s.noise_std = parse_double(c.meta("noise_std"), "noise_std");
  s.samples_per_domain = static_cast<int>(
      parse_int(c.meta("samples_per_domain"), "samples_per_domain"));
  s.seed = static_cast<std::uint64_t>(parse_int(c.meta("seed"), "seed"));
  d.x = to_tensor(c.array("x"));
  d.t = to_tensor(c.array("t"));
  d.latents = to_tensor(c.array("latents"));
  d.domain_ids = to_ints(c.array("domain_ids"));
  d.concept_ids = to_ints(c.array("concept_ids"));
  const auto n = static_cast<std::size_t>(d.x.rows());
  if (d.t.rows() != d.x.rows() || d.domain_ids.size() != n ||
      d.concept_ids.size() != n || d.latents.rows() != d.x.rows()) {
    throw ConfigError("dataset: inconsistent row counts");
  }
  return d;
}

void save_dataset(const std::filesystem::path& path, const DomainDataset& data) {
  write_file_bytes(path, encode_dataset(data));
}

DomainDataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(read_file_bytes(path));
}

}  // namespace dcml
