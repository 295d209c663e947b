#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace lga {

// Dense row-major 64-bit real array with explicit shape, rank <= 4.
// Immutable after construction; copies share the underlying buffer.
class Tensor {
 public:
  Tensor() : shape_{1}, data_(std::make_shared<std::vector<double>>(1, 0.0)) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(std::move(data))) {
    validate();
  }

  static Tensor zeros(std::vector<std::size_t> shape) {
    std::size_t n = extent_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
  }

  static Tensor full(std::vector<std::size_t> shape, double v) {
    std::size_t n = extent_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  // Wraps arithmetic results whose inputs were already validated; skips the
  // per-element finite scan. Shape consistency is still enforced.
  static Tensor from_computed(std::vector<std::size_t> shape, std::vector<double> data) {
    if (data.size() != extent_product(shape))
      throw std::invalid_argument("Tensor: data length does not match shape product");
    Tensor t;
    t.shape_ = std::move(shape);
    *t.data_ = std::move(data);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_->size(); }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  const double* data() const { return data_->data(); }
  const std::vector<double>& vec() const { return *data_; }

  bool is_scalar() const { return size() == 1; }
  double item() const {
    if (!is_scalar()) throw std::invalid_argument("Tensor::item: not scalar-shaped");
    return (*data_)[0];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(std::vector<std::size_t> shape) const {
    if (extent_product(shape) != size())
      throw std::invalid_argument("Tensor::reshaped: element count mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  static std::size_t extent_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
  }

 private:
  void validate() const {
    if (shape_.empty() || shape_.size() > 4)
      throw std::invalid_argument("Tensor: rank must be 1..4");
    for (std::size_t e : shape_)
      if (e == 0) throw std::invalid_argument("Tensor: zero extent");
    if (data_->size() != extent_product(shape_))
      throw std::invalid_argument(
          "Tensor: data length " + std::to_string(data_->size()) +
          " does not match shape product " + std::to_string(extent_product(shape_)));
    for (double v : *data_)
      if (!std::isfinite(v)) throw std::invalid_argument("Tensor: non-finite element");
  }

  std::vector<std::size_t> shape_;
  std::shared_ptr<std::vector<double>> data_;
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace lga
