#include "tal/params.hpp"

#include <cmath>

#include "tal/errors.hpp"

namespace tal {

ParamTensor& ParamStore::insert(const std::string& name, Tensor value) {
  if (items_.count(name)) throw ConfigError("parameter registered twice: " + name);
  ParamTensor p;
  p.name = name;
  p.grad = zeros_like(value);
  p.value = std::move(value);
  auto [it, ok] = items_.emplace(name, std::move(p));
  (void)ok;
  return it->second;
}

ParamTensor& ParamStore::add_uniform(const std::string& name, std::vector<size_t> shape,
                                     size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw ConfigError("fan_in must be positive for " + name);
  Tensor t(std::move(shape));
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return insert(name, std::move(t));
}

ParamTensor& ParamStore::add_constant(const std::string& name, std::vector<size_t> shape,
                                      double fill) {
  return insert(name, Tensor(std::move(shape), fill));
}

ParamTensor& ParamStore::at(const std::string& name) {
  auto it = items_.find(name);
  if (it == items_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const ParamTensor& ParamStore::at(const std::string& name) const {
  auto it = items_.find(name);
  if (it == items_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [name, p] : items_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
}

double ParamStore::grad_norm() const {
  double acc = 0.0;
  for (const auto& [name, p] : items_)
    for (double g : p.grad.data) acc += g * g;
  return std::sqrt(acc);
}

void ParamStore::clip_grads(double max_norm) {
  double n = grad_norm();
  if (n <= max_norm || n == 0.0) return;
  double s = max_norm / n;
  for (auto& [name, p] : items_)
    for (double& g : p.grad.data) g *= s;
}

void ParamStore::sgd_step(double lr) {
  for (auto& [name, p] : items_)
    for (size_t i = 0; i < p.value.data.size(); ++i) p.value.data[i] -= lr * p.grad.data[i];
}

size_t ParamStore::scalar_count() const {
  size_t n = 0;
  for (const auto& [name, p] : items_) n += p.value.numel();
  return n;
}

}  // namespace tal
