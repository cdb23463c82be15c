#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tal {

// Dense row-major tensor of doubles. Rank 1..3 is what the toolkit uses.
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> s, double fill = 0.0);

  static Tensor scalar(double v);
  static Tensor row_major(size_t r, size_t c, std::vector<double> d);
  static Tensor vec(std::vector<double> d);

  size_t numel() const;
  size_t rank() const { return shape.size(); }

  // rank-2 helpers
  size_t rows() const;
  size_t cols() const;
  double& at2(size_t r, size_t c) { return data[r * shape[1] + c]; }
  double at2(size_t r, size_t c) const { return data[r * shape[1] + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  double item() const;  // numel()==1 or ContractError
  std::string shape_str() const;
};

Tensor zeros_like(const Tensor& t);

// Deterministic order-invariant accumulation: sorts the buffer, then folds.
// Two value-permuted multisets of addends produce bit-identical sums, which
// keeps global attention exactly permutation-equivariant. Consumes the buffer.
double sorted_sum(std::vector<double>& buf);

}  // namespace tal
