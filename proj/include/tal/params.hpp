#pragma once

#include <map>
#include <string>
#include <vector>

#include "tal/rng.hpp"
#include "tal/tensor.hpp"

namespace tal {

// One named learnable tensor with its gradient slot.
struct ParamTensor {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Named tensors of all learnable weights. std::map keeps iteration order
// deterministic (checkpoint layout, SGD update order).
class ParamStore {
 public:
  // Weight init: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], seeded.
  ParamTensor& add_uniform(const std::string& name, std::vector<size_t> shape, size_t fan_in,
                           Rng& rng);
  ParamTensor& add_constant(const std::string& name, std::vector<size_t> shape, double fill);

  ParamTensor& at(const std::string& name);
  const ParamTensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return items_.count(name) != 0; }

  void zero_grads();
  double grad_norm() const;
  void clip_grads(double max_norm);
  void sgd_step(double lr);

  size_t tensor_count() const { return items_.size(); }
  size_t scalar_count() const;

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  ParamTensor& insert(const std::string& name, Tensor value);
  std::map<std::string, ParamTensor> items_;
};

}  // namespace tal
