#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gleak {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Dense row-major double tensor. Immutable once constructed; copies share
/// storage.
class Tensor {
 public:
  Tensor();  // rank-0 tensor holding 0.0
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor full(Shape shape, double v);
  static Tensor from(std::initializer_list<double> values);  // rank-1

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_->size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  std::span<const double> data() const { return {data_->data(), data_->size()}; }
  const double* ptr() const { return data_->data(); }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double item() const;

  std::vector<double> to_vector() const { return *data_; }
  Tensor reshaped(Shape shape) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && *a.data_ == *b.data_;
  }

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
};

}  // namespace gleak
