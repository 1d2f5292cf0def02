#include "firecast/param_store.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace firecast::nn {

using nlohmann::json;

Tensor& ParamStore::add(const std::string& name, Shape shape, int fan_in, Rng& rng) {
  if (by_name_.count(name)) throw DataError("duplicate parameter name: " + name);
  if (fan_in < 1) throw DataError("parameter fan_in must be >= 1: " + name);
  Tensor t = Tensor::zeros(shape, true);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : *t.data) v = rng.uniform(-bound, bound);
  order_.push_back(name);
  fan_in_[name] = fan_in;
  return by_name_[name] = std::move(t);
}

Tensor& ParamStore::add_constant(const std::string& name, Shape shape, double value) {
  if (by_name_.count(name)) throw DataError("duplicate parameter name: " + name);
  Tensor t = Tensor::zeros(shape, true);
  std::fill(t.data->begin(), t.data->end(), value);
  order_.push_back(name);
  fan_in_[name] = 1;
  return by_name_[name] = std::move(t);
}

Tensor& ParamStore::adopt(const std::string& name, Tensor t) {
  if (by_name_.count(name)) throw DataError("duplicate parameter name: " + name);
  if (!t.has_grad()) throw DataError("adopted parameter lacks a gradient buffer: " + name);
  order_.push_back(name);
  fan_in_[name] = 1;
  return by_name_[name] = std::move(t);
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw DataError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw DataError("unknown parameter: " + name);
  return it->second;
}

int ParamStore::fan_in(const std::string& name) const {
  auto it = fan_in_.find(name);
  if (it == fan_in_.end()) throw DataError("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (const auto& name : order_) by_name_[name].zero_grad();
}

long long ParamStore::total_values() const {
  long long n = 0;
  for (const auto& name : order_) n += by_name_.at(name).numel();
  return n;
}

std::vector<std::vector<double>> ParamStore::snapshot() const {
  std::vector<std::vector<double>> snap;
  snap.reserve(order_.size());
  for (const auto& name : order_) snap.push_back(*by_name_.at(name).data);
  return snap;
}

void ParamStore::restore(const std::vector<std::vector<double>>& snap) {
  if (snap.size() != order_.size()) throw DataError("snapshot size mismatch");
  for (size_t i = 0; i < order_.size(); ++i) {
    auto& t = by_name_[order_[i]];
    if (snap[i].size() != t.data->size()) throw DataError("snapshot tensor size mismatch");
    *t.data = snap[i];
  }
}

// File layout: magic, u64 LE header length, header JSON, then each tensor's
// float64 values little-endian in header order.
static constexpr char kMagic[8] = {'F', 'C', 'P', 'A', 'R', 'M', '0', '1'};

void save_params(const ParamStore& store, const std::filesystem::path& path) {
  json header;
  header["params"] = json::array();
  long long total = 0;
  for (const auto& name : store.names()) {
    const Tensor& t = store.get(name);
    header["params"].push_back({{"name", name}, {"shape", t.shape}});
    total += t.numel();
  }
  const std::string header_str = header.dump();

  std::vector<uint8_t> bytes;
  bytes.resize(sizeof(kMagic) + 8 + header_str.size() + static_cast<size_t>(total) * 8);
  uint8_t* p = bytes.data();
  std::memcpy(p, kMagic, sizeof(kMagic));
  p += sizeof(kMagic);
  store_u64_le(p, header_str.size());
  p += 8;
  std::memcpy(p, header_str.data(), header_str.size());
  p += header_str.size();
  for (const auto& name : store.names()) {
    const Tensor& t = store.get(name);
    for (double v : *t.data) {
      store_f64_le(p, v);
      p += 8;
    }
  }
  write_bytes(path, bytes);
}

ParamStore load_params(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a parameter checkpoint: " + path.string());
  }
  const uint8_t* p = bytes.data() + sizeof(kMagic);
  const uint64_t header_len = load_u64_le(p);
  p += 8;
  if (sizeof(kMagic) + 8 + header_len > bytes.size()) {
    throw DataError("truncated checkpoint header: " + path.string());
  }
  json header;
  try {
    header = json::parse(std::string(reinterpret_cast<const char*>(p), header_len));
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint header: " + std::string(e.what()));
  }
  p += header_len;
  const uint8_t* end = bytes.data() + bytes.size();

  ParamStore store;
  for (const auto& entry : header.at("params")) {
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    Tensor t = Tensor::zeros(shape, true);
    const auto n = static_cast<size_t>(t.numel());
    if (p + n * 8 > end) throw DataError("truncated checkpoint data: " + path.string());
    for (size_t i = 0; i < n; ++i) {
      (*t.data)[i] = load_f64_le(p);
      p += 8;
    }
    store.adopt(name, std::move(t));
  }
  if (p != end) throw DataError("trailing bytes in checkpoint: " + path.string());
  return store;
}

}  // namespace firecast::nn
