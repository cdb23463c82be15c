#include "tal/transfer.hpp"

#include <algorithm>
#include <cmath>

#include "tal/errors.hpp"

namespace tal {

Graph::Id mmd(Graph& g, Graph::Id x, Graph::Id y, const std::vector<double>& bandwidths) {
  return g.mmd_gaussian(x, y, bandwidths);
}

double mmd_linear(const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols())
    throw DimensionError("mmd_linear: feature dims differ");
  size_t d = x.cols();
  auto term = [d](const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.rows(); ++i)
      for (size_t j = 0; j < b.rows(); ++j)
        for (size_t t = 0; t < d; ++t) acc += a.at2(i, t) * b.at2(j, t);
    return acc / static_cast<double>(a.rows() * b.rows());
  };
  return term(x, x) + term(y, y) - 2.0 * term(x, y);
}

std::vector<double> median_bandwidths(const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols())
    throw DimensionError("median_bandwidths: feature dims differ");
  std::vector<const Tensor*> mats = {&x, &y};
  std::vector<std::vector<double>> rows;
  for (const Tensor* m : mats)
    for (size_t i = 0; i < m->rows(); ++i) {
      std::vector<double> r(m->cols());
      for (size_t j = 0; j < m->cols(); ++j) r[j] = m->at2(i, j);
      rows.push_back(std::move(r));
    }
  std::vector<double> dists;
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = i + 1; j < rows.size(); ++j) {
      double acc = 0.0;
      for (size_t t = 0; t < rows[i].size(); ++t) {
        double d = rows[i][t] - rows[j][t];
        acc += d * d;
      }
      dists.push_back(std::sqrt(acc));
    }
  double med = 1.0;
  if (!dists.empty()) {
    std::sort(dists.begin(), dists.end());
    med = dists[dists.size() / 2];
    if (med <= 0.0) med = 1.0;
  }
  return {0.5 * med, med, 2.0 * med};
}

Graph::Id transfer_loss(Graph& g, Graph::Id target_cls_loss, const Tensor& source_pooled,
                        Graph::Id target_pooled, double lambda_mmd,
                        const std::vector<double>& bandwidths) {
  if (lambda_mmd == 0.0) return target_cls_loss;
  auto src = g.leaf(source_pooled);  // frozen source branch: plain constant
  auto term = g.mmd_gaussian(src, target_pooled, bandwidths);
  return g.add(target_cls_loss, g.scale(term, lambda_mmd));
}

}  // namespace tal
