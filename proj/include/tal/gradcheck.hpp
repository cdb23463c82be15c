#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tal/params.hpp"

namespace tal {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  size_t checked = 0;
  size_t failed = 0;
  double eps = 0.0;
  double rtol = 0.0;
  std::vector<std::string> failing;  // first few "name[i] analytic=.. numeric=.. rel=.."

  bool pass() const { return failed == 0; }
  std::string summary() const;
};

// Central-difference check of reverse-mode gradients.
// f must be deterministic given params; each call records a fresh graph,
// runs backward and returns the loss value (gradients land in params).
GradCheckResult check_gradients(const std::function<double(ParamStore&)>& f, ParamStore& params,
                                double eps, double rtol);

}  // namespace tal
