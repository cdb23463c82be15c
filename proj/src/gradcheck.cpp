#include "tal/gradcheck.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace tal {

std::string GradCheckResult::summary() const {
  std::ostringstream os;
  os << (pass() ? "PASS" : "FAIL") << " max_rel_err=" << max_rel_err << " (checked " << checked
     << " coords, " << failed << " failing, eps=" << eps << ", rtol=" << rtol << ")";
  if (!worst_param.empty())
    os << " worst=" << worst_param << "[" << worst_index << "] analytic=" << worst_analytic
       << " numeric=" << worst_numeric;
  return os.str();
}

GradCheckResult check_gradients(const std::function<double(ParamStore&)>& f, ParamStore& params,
                                double eps, double rtol) {
  GradCheckResult res;
  res.eps = eps;
  res.rtol = rtol;

  params.zero_grads();
  f(params);
  std::map<std::string, std::vector<double>> analytic;
  for (auto& [name, p] : params) analytic[name] = p.grad.data;

  for (auto& [name, p] : params) {
    for (size_t i = 0; i < p.value.data.size(); ++i) {
      double saved = p.value.data[i];
      p.value.data[i] = saved + eps;
      params.zero_grads();
      double up = f(params);
      p.value.data[i] = saved - eps;
      params.zero_grads();
      double dn = f(params);
      p.value.data[i] = saved;
      double numeric = (up - dn) / (2.0 * eps);
      double a = analytic[name][i];
      double rel = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
      ++res.checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = name;
        res.worst_index = i;
        res.worst_analytic = a;
        res.worst_numeric = numeric;
      }
      if (rel > rtol) {
        ++res.failed;
        if (res.failing.size() < 16) {
          std::ostringstream os;
          os << name << "[" << i << "] analytic=" << a << " numeric=" << numeric
             << " rel=" << rel;
          res.failing.push_back(os.str());
        }
      }
    }
  }
  // leave analytic gradients in place for the caller
  params.zero_grads();
  f(params);
  return res;
}

}  // namespace tal
