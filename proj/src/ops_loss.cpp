#include <algorithm>
#include <cmath>

#include "tal/errors.hpp"
#include "tal/graph.hpp"

namespace tal {

Graph::Id Graph::bce_mean(Id probs, std::vector<double> labels) {
  const Tensor& tp = value(probs);
  if (tp.numel() != labels.size())
    throw DimensionError("bce_mean: labels length must match score count");
  for (double y : labels)
    if (y != 0.0 && y != 1.0) throw ContractError("bce_mean: labels must be 0/1");
  const double lo = 1e-12, hi = 1.0 - 1e-12;
  size_t k = labels.size();
  double acc = 0.0;
  for (size_t i = 0; i < k; ++i) {
    double p = std::clamp(tp.data[i], lo, hi);
    acc -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  acc /= static_cast<double>(k);
  return add_node(Tensor::scalar(acc), {probs},
                  [k, lo, hi, labels = std::move(labels)](Graph& g, Id self) {
                    double gy = g.nodes_[self].grad.data[0];
                    Id pp = g.nodes_[self].parents[0];
                    const Tensor& vp = g.value(pp);
                    Tensor& dp = g.grad_sink(pp);
                    for (size_t i = 0; i < k; ++i) {
                      double p = vp.data[i];
                      if (p <= lo || p >= hi) continue;  // clamped region is flat
                      dp.data[i] += gy * (p - labels[i]) / (p * (1.0 - p) * static_cast<double>(k));
                    }
                  });
}

// Fractional overlap of interval [a,b] with the snippet cells [t, t+1) and its
// activation-weighted version. Returns (weighted sum, total length).
static void soft_interval(const std::vector<double>& cas, double a, double b, double& wsum,
                          double& len) {
  wsum = 0.0;
  len = 0.0;
  if (b <= a) return;
  long t0 = std::max(0L, static_cast<long>(std::floor(a)));
  long t1 = std::min(static_cast<long>(cas.size()) - 1, static_cast<long>(std::ceil(b)) - 1);
  for (long t = t0; t <= t1; ++t) {
    double w = std::min(b, static_cast<double>(t + 1)) - std::max(a, static_cast<double>(t));
    if (w <= 0.0) continue;
    wsum += w * cas[static_cast<size_t>(t)];
    len += w;
  }
}

// d(wsum)/d(endpoint) and d(len)/d(endpoint) for the interval [a,b].
// Moving the left endpoint right sheds coverage of cell floor(a); moving the
// right endpoint right gains cell floor(b). Endpoints outside [0,T] are inert.
static void soft_interval_derivs(const std::vector<double>& cas, double a, double b, double& dwa,
                                 double& dla, double& dwb, double& dlb) {
  dwa = dla = dwb = dlb = 0.0;
  if (b <= a) return;
  long T = static_cast<long>(cas.size());
  long ta = static_cast<long>(std::floor(a));
  if (ta >= 0 && ta < T) {
    dwa = -cas[static_cast<size_t>(ta)];
    dla = -1.0;
  }
  long tb = static_cast<long>(std::floor(b));
  if (tb >= 0 && tb < T) {
    dwb = cas[static_cast<size_t>(tb)];
    dlb = 1.0;
  }
}

Graph::Id Graph::oic(Id cas, Id s, Id e, Id outer_s, Id outer_e, bool full_interval) {
  const Tensor& tc = value(cas);
  if (tc.rank() > 2 || (tc.rank() == 2 && tc.cols() != 1))
    throw DimensionError("oic: cas must be a vector or Tx1 column");
  std::vector<double> track = tc.data;
  double sv = value(s).item(), ev = value(e).item();
  double Sv = value(outer_s).item(), Ev = value(outer_e).item();
  if (!(sv < ev)) throw DegenerateInputError("oic: inner segment is empty");
  if (Sv > sv || Ev < ev) throw ContractError("oic: outer must contain inner");
  double a_in, l_in, a_out, l_out;
  soft_interval(track, sv, ev, a_in, l_in);
  soft_interval(track, Sv, Ev, a_out, l_out);
  if (l_in <= 1e-12) throw DegenerateInputError("oic: inner segment lies outside the track");
  const double eps_len = 1e-12;
  double inner_mean = a_in / l_in;
  double ring_sum = full_interval ? a_out : a_out - a_in;
  double ring_len = full_interval ? l_out : l_out - l_in;
  bool ring_empty = ring_len <= eps_len;
  double ring_mean = ring_empty ? 0.0 : ring_sum / ring_len;
  double loss = ring_mean - inner_mean;
  return add_node(
      Tensor::scalar(loss), {cas, s, e, outer_s, outer_e},
      [track = std::move(track), sv, ev, Sv, Ev, a_in, l_in, ring_sum, ring_len, ring_empty,
       full_interval](Graph& g, Id self) {
        double gy = g.nodes_[self].grad.data[0];
        const auto& par = g.nodes_[self].parents;
        size_t T = track.size();
        // d loss / d cas_t
        if (g.wants_grad(par[0])) {
          Tensor& dc = g.grad_sink(par[0]);
          for (size_t t = 0; t < T; ++t) {
            double w_in =
                std::max(0.0, std::min(ev, static_cast<double>(t + 1)) -
                                  std::max(sv, static_cast<double>(t)));
            double w_out =
                std::max(0.0, std::min(Ev, static_cast<double>(t + 1)) -
                                  std::max(Sv, static_cast<double>(t)));
            double w_ring = full_interval ? w_out : w_out - w_in;
            double d = -w_in / l_in;
            if (!ring_empty) d += w_ring / ring_len;
            dc.data[t] += gy * d;
          }
        }
        // d loss / d boundaries through the soft overlaps
        double dwa_i, dla_i, dwb_i, dlb_i;  // inner interval
        soft_interval_derivs(track, sv, ev, dwa_i, dla_i, dwb_i, dlb_i);
        double dwa_o, dla_o, dwb_o, dlb_o;  // outer interval
        soft_interval_derivs(track, Sv, Ev, dwa_o, dla_o, dwb_o, dlb_o);
        auto mean_grad = [](double dnum, double dden, double num, double den) {
          return (dnum * den - num * dden) / (den * den);
        };
        // inner boundary s: affects inner mean, and the ring via subtraction
        auto add_scalar_grad = [&](Id p, double v) {
          if (g.wants_grad(p)) g.grad_sink(p).data[0] += gy * v;
        };
        {
          double d_inner = mean_grad(dwa_i, dla_i, a_in, l_in);
          double d_ring = 0.0;
          if (!ring_empty && !full_interval)
            d_ring = mean_grad(-dwa_i, -dla_i, ring_sum, ring_len);
          add_scalar_grad(par[1], d_ring - d_inner);
        }
        {
          double d_inner = mean_grad(dwb_i, dlb_i, a_in, l_in);
          double d_ring = 0.0;
          if (!ring_empty && !full_interval)
            d_ring = mean_grad(-dwb_i, -dlb_i, ring_sum, ring_len);
          add_scalar_grad(par[2], d_ring - d_inner);
        }
        // outer boundaries S, E: ring only
        if (!ring_empty) {
          add_scalar_grad(par[3], mean_grad(dwa_o, dla_o, ring_sum, ring_len));
          add_scalar_grad(par[4], mean_grad(dwb_o, dlb_o, ring_sum, ring_len));
        }
      });
}

Graph::Id Graph::mmd_gaussian(Id x, Id y, std::vector<double> bandwidths) {
  const Tensor& tx = value(x);
  const Tensor& ty = value(y);
  if (tx.rank() != 2 || ty.rank() != 2 || tx.cols() != ty.cols())
    throw DimensionError("mmd_gaussian: feature dims differ, " + tx.shape_str() + " vs " +
                         ty.shape_str());
  if (bandwidths.empty()) throw ConfigError("mmd_gaussian: need at least one bandwidth");
  for (double b : bandwidths)
    if (b <= 0.0) throw ConfigError("mmd_gaussian: bandwidths must be positive");
  size_t n = tx.rows(), m = ty.rows(), d = tx.cols();
  auto sqdist = [d](const Tensor& a, size_t i, const Tensor& b, size_t j) {
    double acc = 0.0;
    for (size_t t = 0; t < d; ++t) {
      double df = a.at2(i, t) - b.at2(j, t);
      acc += df * df;
    }
    return acc;
  };
  double total = 0.0;
  for (double sigma : bandwidths) {
    double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    double t_xx = 0.0, t_yy = 0.0, t_xy = 0.0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) t_xx += std::exp(-sqdist(tx, i, tx, j) * inv2s2);
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < m; ++j) t_yy += std::exp(-sqdist(ty, i, ty, j) * inv2s2);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < m; ++j) t_xy += std::exp(-sqdist(tx, i, ty, j) * inv2s2);
    total += t_xx / static_cast<double>(n * n) + t_yy / static_cast<double>(m * m) -
             2.0 * t_xy / static_cast<double>(n * m);
  }
  if (total < 0.0 && total > -1e-9) total = 0.0;  // V-statistic is nonnegative up to rounding
  return add_node(
      Tensor::scalar(total), {x, y}, [n, m, d, bw = std::move(bandwidths)](Graph& g, Id self) {
        double gy = g.nodes_[self].grad.data[0];
        const auto& par = g.nodes_[self].parents;
        const Tensor& vx = g.value(par[0]);
        const Tensor& vy = g.value(par[1]);
        bool wx = g.wants_grad(par[0]), wy = g.wants_grad(par[1]);
        Tensor* dx = wx ? &g.grad_sink(par[0]) : nullptr;
        Tensor* dy = wy ? &g.grad_sink(par[1]) : nullptr;
        for (double sigma : bw) {
          double inv_s2 = 1.0 / (sigma * sigma);
          double inv2s2 = 0.5 * inv_s2;
          double cn2 = 2.0 / static_cast<double>(n * n);
          double cm2 = 2.0 / static_cast<double>(m * m);
          double cnm = 2.0 / static_cast<double>(n * m);
          for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j) {
              if (!wx || i == j) continue;
              double sq = 0.0;
              for (size_t t = 0; t < d; ++t) {
                double df = vx.at2(i, t) - vx.at2(j, t);
                sq += df * df;
              }
              double k = std::exp(-sq * inv2s2);
              for (size_t t = 0; t < d; ++t) {
                double df = vx.at2(i, t) - vx.at2(j, t);
                dx->at2(i, t) += gy * (-cn2 * k * df * inv_s2);
              }
            }
          for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < m; ++j) {
              if (!wy || i == j) continue;
              double sq = 0.0;
              for (size_t t = 0; t < d; ++t) {
                double df = vy.at2(i, t) - vy.at2(j, t);
                sq += df * df;
              }
              double k = std::exp(-sq * inv2s2);
              for (size_t t = 0; t < d; ++t) {
                double df = vy.at2(i, t) - vy.at2(j, t);
                dy->at2(i, t) += gy * (-cm2 * k * df * inv_s2);
              }
            }
          for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < m; ++j) {
              if (!wx && !wy) continue;
              double sq = 0.0;
              for (size_t t = 0; t < d; ++t) {
                double df = vx.at2(i, t) - vy.at2(j, t);
                sq += df * df;
              }
              double k = std::exp(-sq * inv2s2);
              for (size_t t = 0; t < d; ++t) {
                double df = vx.at2(i, t) - vy.at2(j, t);
                if (wx) dx->at2(i, t) += gy * (cnm * k * df * inv_s2);
                if (wy) dy->at2(j, t) += gy * (-cnm * k * df * inv_s2);
              }
            }
        }
      });
}

}  // namespace tal
