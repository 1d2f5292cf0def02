#pragma once
// Named trainable parameters with paired gradient buffers, plus the binary
// checkpoint format: a little-endian JSON-prefixed file that round-trips
// bit-exactly.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "firecast/common.hpp"
#include "firecast/tensor.hpp"

namespace firecast::nn {

class ParamStore {
 public:
  // Registers a tensor initialized uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).
  Tensor& add(const std::string& name, Shape shape, int fan_in, Rng& rng);

  // Registers a tensor filled with a constant.
  Tensor& add_constant(const std::string& name, Shape shape, double value);

  // Adopts an existing tensor (must carry a gradient buffer).
  Tensor& adopt(const std::string& name, Tensor t);

  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.count(name) > 0; }

  // Registration order; drives initialization, updates, and checkpoint layout.
  const std::vector<std::string>& names() const { return order_; }
  size_t size() const { return order_.size(); }
  int fan_in(const std::string& name) const;

  void zero_grads();
  long long total_values() const;

  // Deep copy of all parameter values in registration order.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& snap);

 private:
  std::vector<std::string> order_;
  std::map<std::string, Tensor> by_name_;
  std::map<std::string, int> fan_in_;
};

void save_params(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_params(const std::filesystem::path& path);

}  // namespace firecast::nn
