#include "hmlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace hmlab {

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return matrix(r, c, std::move(values));
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 1;
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() < 2) return 1;
  return shape_[1];
}

std::span<double> Tensor::row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }

std::span<const double> Tensor::row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor of shape " + to_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor gather_rows(const Tensor& source, std::span<const std::size_t> indices) {
  const std::size_t cols = source.cols();
  Tensor out(Shape{indices.size(), cols});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= source.rows()) throw ShapeError("row index out of range for " + to_string(source.shape()));
    std::copy_n(source.row(indices[k]).begin(), cols, out.row(k).begin());
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) return Tensor(Shape{0, 0});
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw ShapeError("concat_rows: " + to_string(parts.front().shape()) + " vs " + to_string(p.shape()));
    }
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& p : parts) data.insert(data.end(), p.storage().begin(), p.storage().end());
  return Tensor(Shape{rows, cols}, std::move(data));
}

Tensor slice_rows(const Tensor& source, std::size_t begin, std::size_t end) {
  if (begin > end || end > source.rows()) throw ShapeError("slice_rows out of range for " + to_string(source.shape()));
  const std::size_t cols = source.cols();
  std::vector<double> data(source.storage().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                           source.storage().begin() + static_cast<std::ptrdiff_t>(end * cols));
  return Tensor(Shape{end - begin, cols}, std::move(data));
}

}  // namespace hmlab
