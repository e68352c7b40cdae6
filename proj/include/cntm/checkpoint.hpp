#pragma once

// Binary checkpoint container:
//   "CNTMCKPT" | u32 version | u64 header length | JSON header | tensor data
// The header holds the model config, the codebook, seed, step, model kind and
// the tensor directory (name, shape, trainable). Tensor data follows in
// directory order: the values, then the optimizer's running mean square, as
// little-endian IEEE doubles.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cntm/codebook.hpp"
#include "cntm/errors.hpp"
#include "cntm/model.hpp"

namespace cntm::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

inline constexpr char kMagic[8] = {'C', 'N', 'T', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

struct Checkpoint {
  model::ModelConfig config;
  graphs::SymbolCodebook codebook;
  model::ParamStore params;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;

  std::string kind() const { return config.use_memory ? "cntm" : "lstm"; }
};

inline nlohmann::json config_to_json(const model::ModelConfig& c) {
  return {{"code_bits", c.code_bits},         {"controller_width", c.controller_width},
          {"head_width", c.head_width},       {"u_width", c.u_width},
          {"memory_rows", c.memory_rows},     {"memory_width", c.memory_width},
          {"shift_width", c.shift_width},     {"num_classes", c.num_classes},
          {"use_memory", c.use_memory},       {"train_memory_init", c.train_memory_init},
          {"beta_bias_init", c.beta_bias_init}};
}

inline model::ModelConfig config_from_json(const nlohmann::json& j) {
  model::ModelConfig c;
  c.code_bits = j.at("code_bits");
  c.controller_width = j.at("controller_width");
  c.head_width = j.at("head_width");
  c.u_width = j.at("u_width");
  c.memory_rows = j.at("memory_rows");
  c.memory_width = j.at("memory_width");
  c.shift_width = j.at("shift_width");
  c.num_classes = j.at("num_classes");
  c.use_memory = j.at("use_memory");
  c.train_memory_init = j.at("train_memory_init");
  c.beta_bias_init = j.at("beta_bias_init");
  return c;
}

inline nlohmann::json codebook_to_json(const graphs::SymbolCodebook& cb) {
  return {{"nodes", cb.nodes()}, {"conditions", cb.conditions()}, {"codes", cb.codes()}};
}

inline graphs::SymbolCodebook codebook_from_json(const nlohmann::json& j) {
  return graphs::SymbolCodebook(j.at("nodes").get<std::vector<std::string>>(),
                                j.at("conditions").get<std::vector<std::string>>(),
                                j.at("codes").get<std::vector<graphs::Code>>());
}

inline nlohmann::json header(const Checkpoint& ck) {
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& p : ck.params) dir.push_back({{"name", p.name}, {"shape", p.shape}, {"trainable", p.trainable}});
  return {{"kind", ck.kind()},
          {"seed", ck.seed},
          {"step", ck.step},
          {"config", config_to_json(ck.config)},
          {"codebook", codebook_to_json(ck.codebook)},
          {"tensors", dir}};
}

namespace detail {

template <class T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void put_doubles(std::string& out, const std::vector<double>& v) {
  out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::string_view take(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) throw DataError(std::string("checkpoint truncated while reading ") + what);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  template <class T>
  T get(const char* what) {
    T v;
    std::memcpy(&v, take(sizeof(T), what).data(), sizeof(T));
    return v;
  }

  void doubles(std::vector<double>& v, const char* what) {
    auto s = take(v.size() * sizeof(double), what);
    std::memcpy(v.data(), s.data(), s.size());
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize(const Checkpoint& ck) {
  const std::string head = header(ck).dump();
  std::string out(kMagic, sizeof kMagic);
  detail::put(out, kVersion);
  detail::put(out, static_cast<std::uint64_t>(head.size()));
  out += head;
  for (const auto& p : ck.params) {
    detail::put_doubles(out, p.value);
    detail::put_doubles(out, p.rms);
  }
  return out;
}

inline Checkpoint deserialize(std::string_view data) {
  detail::Reader r(data);
  if (r.take(sizeof kMagic, "magic") != std::string_view(kMagic, sizeof kMagic))
    throw DataError("not a checkpoint file (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto len = r.get<std::uint64_t>("header length");
  Checkpoint ck;
  nlohmann::json head;
  try {
    head = nlohmann::json::parse(r.take(len, "header"));
    ck.config = config_from_json(head.at("config"));
    ck.codebook = codebook_from_json(head.at("codebook"));
    ck.seed = head.at("seed");
    ck.step = head.at("step");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }
  if (head.value("kind", "") != ck.kind()) throw DataError("checkpoint kind does not match its config");
  ck.params = model::param_layout(ck.config);
  const auto& dir = head.at("tensors");
  if (dir.size() != ck.params.size())
    throw DataError("checkpoint lists " + std::to_string(dir.size()) + " tensors, config expects " +
                    std::to_string(ck.params.size()));
  for (std::size_t i = 0; i < dir.size(); ++i) {
    auto& p = ck.params[i];
    if (dir[i].at("name") != p.name || dir[i].at("shape").get<ad::Shape>() != p.shape)
      throw DataError("checkpoint tensor " + std::to_string(i) + " does not match layout (expected " + p.name + " " +
                      ad::shape_string(p.shape) + ")");
    p.trainable = dir[i].at("trainable");
    r.doubles(p.value, p.name.c_str());
    r.doubles(p.rms, p.name.c_str());
  }
  if (!r.done()) throw DataError("checkpoint has trailing bytes");
  return ck;
}

inline void save(const Checkpoint& ck, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  const auto bytes = serialize(ck);
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

inline bool same_tensors(const model::ParamStore& a, const model::ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || a[i].shape != b[i].shape || a[i].value != b[i].value || a[i].rms != b[i].rms ||
        a[i].trainable != b[i].trainable)
      return false;
  return true;
}

}  // namespace cntm::checkpoint
