#include "tal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "tal/errors.hpp"

namespace tal {

Tensor::Tensor(std::vector<size_t> s, double fill) : shape(std::move(s)) {
  size_t n = 1;
  for (size_t d : shape) {
    if (d == 0) throw DimensionError("tensor extent must be positive, got shape " + shape_str());
    n *= d;
  }
  data.assign(n, fill);
}

Tensor Tensor::scalar(double v) {
  Tensor t(std::vector<size_t>{1});
  t.data[0] = v;
  return t;
}

Tensor Tensor::row_major(size_t r, size_t c, std::vector<double> d) {
  Tensor t;
  t.shape = {r, c};
  if (d.size() != r * c) throw DimensionError("row_major: data length does not match extents");
  t.data = std::move(d);
  return t;
}

Tensor Tensor::vec(std::vector<double> d) {
  Tensor t;
  t.shape = {d.size()};
  t.data = std::move(d);
  return t;
}

size_t Tensor::numel() const {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows(): tensor is not rank-2, shape " + shape_str());
  return shape[0];
}

size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols(): tensor is not rank-2, shape " + shape_str());
  return shape[1];
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item(): tensor has " + std::to_string(numel()) + " elements");
  return data[0];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor zeros_like(const Tensor& t) {
  Tensor z;
  z.shape = t.shape;
  z.data.assign(t.data.size(), 0.0);
  return z;
}

double sorted_sum(std::vector<double>& buf) {
  std::sort(buf.begin(), buf.end());
  double s = 0.0;
  for (double v : buf) s += v;
  return s;
}

}  // namespace tal
