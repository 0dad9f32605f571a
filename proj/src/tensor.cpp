// Copyright 2026 The hgdpo Authors
// SPDX-License-Identifier: Apache-2.0

#include "hgdpo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hgdpo/errors.hpp"

namespace hgdpo {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimension must be positive: " + to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + to_string(shape_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ShapeError("from_rows: no rows");
  std::vector<double> data;
  for (const auto& r : rows) {
    if (r.size() != rows.front().size()) throw ShapeError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), rows.front().size()}, std::move(data));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("reshape " + to_string(shape_) + " -> " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

std::size_t Tensor::row_size() const { return shape_.empty() ? 0 : data_.size() / shape_[0]; }

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > shape_.at(0)) throw ShapeError("slice_rows out of range");
  Shape s = shape_;
  s[0] = end - begin;
  const auto rs = row_size();
  return Tensor(std::move(s), std::vector<double>(data_.begin() + begin * rs, data_.begin() + end * rs));
}

std::span<const double> Tensor::row(std::size_t r) const {
  const auto rs = row_size();
  return std::span<const double>(data_).subspan(r * rs, rs);
}

std::span<double> Tensor::row(std::size_t r) {
  const auto rs = row_size();
  return std::span<double>(data_).subspan(r * rs, rs);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor stack(const std::vector<Tensor>& items) {
  if (items.empty()) throw ShapeError("stack: no tensors");
  Shape s{items.size()};
  s.insert(s.end(), items.front().shape().begin(), items.front().shape().end());
  std::vector<double> data;
  data.reserve(shape_size(s));
  for (const auto& t : items) {
    if (t.shape() != items.front().shape()) {
      throw ShapeError("stack: " + to_string(t.shape()) + " vs " + to_string(items.front().shape()));
    }
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return Tensor(std::move(s), std::move(data));
}

Tensor concat_rows(const std::vector<Tensor>& items) {
  if (items.empty()) throw ShapeError("concat_rows: no tensors");
  Shape s = items.front().shape();
  std::size_t rows = 0;
  std::vector<double> data;
  for (const auto& t : items) {
    Shape tail_a(t.shape().begin() + 1, t.shape().end());
    Shape tail_b(s.begin() + 1, s.end());
    if (tail_a != tail_b) throw ShapeError("concat_rows: " + to_string(t.shape()) + " vs " + to_string(s));
    rows += t.dim(0);
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  s[0] = rows;
  return Tensor(std::move(s), std::move(data));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace hgdpo
