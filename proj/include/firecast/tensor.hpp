#pragma once
// Dense float64 tensors plus a recorded-computation tape for reverse-mode
// differentiation. Buffers are shared_ptr-owned so backward closures and
// callers alias the same storage.

#include <cassert>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace firecast::nn {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

inline long long shape_numel(const Shape& s) {
  long long n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative dimension");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<double>> data;
  std::shared_ptr<std::vector<double>> grad;  // null => constant (no gradient flows in)

  Tensor() = default;

  static Tensor zeros(Shape s, bool with_grad = false) {
    Tensor t;
    const auto n = static_cast<size_t>(shape_numel(s));
    t.shape = std::move(s);
    t.data = std::make_shared<std::vector<double>>(n, 0.0);
    if (with_grad) t.grad = std::make_shared<std::vector<double>>(n, 0.0);
    return t;
  }

  static Tensor values(Shape s, std::vector<double> v, bool with_grad = false) {
    if (static_cast<long long>(v.size()) != shape_numel(s)) {
      throw ShapeError("value count does not match shape " + shape_str(s));
    }
    Tensor t;
    t.shape = std::move(s);
    t.data = std::make_shared<std::vector<double>>(std::move(v));
    if (with_grad) t.grad = std::make_shared<std::vector<double>>(t.data->size(), 0.0);
    return t;
  }

  bool defined() const { return data != nullptr; }
  bool has_grad() const { return grad != nullptr; }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  long long numel() const { return data ? static_cast<long long>(data->size()) : 0; }

  double* ptr() { return data->data(); }
  const double* ptr() const { return data->data(); }
  double* gptr() { return grad->data(); }
  const double* gptr() const { return grad->data(); }

  double value() const {
    assert(numel() == 1);
    return (*data)[0];
  }

  double& at(int i) { return (*data)[static_cast<size_t>(i)]; }
  double at(int i) const { return (*data)[static_cast<size_t>(i)]; }
  double& at(int i, int j) { return (*data)[static_cast<size_t>(i) * dim(1) + j]; }
  double at(int i, int j) const { return (*data)[static_cast<size_t>(i) * dim(1) + j]; }

  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
  }
};

// Reverse-mode tape. Each differentiable op appends one closure; backward()
// replays them last-to-first. A tape belongs to exactly one forward pass at
// a time; clear() keeps capacity for reuse.
class Tape {
 public:
  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

  // Seeds d(loss)/d(loss) = seed and propagates. Gradients accumulate, so a
  // batch may run several forward/backward pairs between zero_grad calls.
  void backward(const Tensor& loss, double seed = 1.0) {
    if (!loss.has_grad()) {
      throw ShapeError("backward: loss tensor has no gradient buffer");
    }
    if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar");
    (*loss.grad)[0] += seed;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

  size_t size() const { return steps_.size(); }
  void clear() { steps_.clear(); }

 private:
  std::vector<std::function<void()>> steps_;
};

}  // namespace firecast::nn
