#include "tal/graph.hpp"

#include <algorithm>
#include <cmath>

#include "tal/errors.hpp"

namespace tal {

Graph::Id Graph::add_node(Tensor value, std::vector<Id> parents,
                          std::function<void(Graph&, Id)> backprop) {
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.requires_grad = any_parent_requires(n.parents);
  if (n.requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

bool Graph::any_parent_requires(const std::vector<Id>& parents) const {
  for (Id p : parents)
    if (nodes_[p].requires_grad) return true;
  return false;
}

Tensor& Graph::grad_sink(Id id) {
  Node& n = nodes_[id];
  if (n.bound) return n.bound->grad;
  if (n.grad.data.size() != n.value.data.size()) n.grad = zeros_like(n.value);
  return n.grad;
}

const Tensor& Graph::grad(Id id) const {
  const Node& n = nodes_[id];
  if (n.bound) return n.bound->grad;
  return n.grad;
}

Graph::Id Graph::leaf(Tensor t, bool requires_grad) {
  Node n;
  n.value = std::move(t);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Graph::Id Graph::param(ParamTensor& p) {
  auto it = param_ids_.find(&p);
  if (it != param_ids_.end()) return it->second;
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.bound = &p;
  nodes_.push_back(std::move(n));
  Id id = nodes_.size() - 1;
  param_ids_.emplace(&p, id);
  return id;
}

void Graph::backward(Id loss) {
  if (nodes_[loss].value.numel() != 1)
    throw ContractError("backward: loss must be scalar, got shape " +
                        nodes_[loss].value.shape_str());
  // Fresh pass over internal node grads; bound parameter grads accumulate.
  for (Node& n : nodes_)
    if (!n.bound) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
  if (!nodes_[loss].requires_grad) return;  // nothing trainable feeds the loss
  grad_sink(loss).data[0] += 1.0;
  for (size_t i = loss + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backprop) continue;
    if (n.grad.data.empty()) continue;  // never received gradient
    n.backprop(*this, i);
  }
}

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

Graph::Id Graph::add(Id a, Id b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "add");
  Tensor out = ta;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
  return add_node(std::move(out), {a, b}, [](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Id pa = g.nodes_[self].parents[0], pb = g.nodes_[self].parents[1];
    if (g.wants_grad(pa)) {
      Tensor& da = g.grad_sink(pa);
      for (size_t i = 0; i < gy.data.size(); ++i) da.data[i] += gy.data[i];
    }
    if (g.wants_grad(pb)) {
      Tensor& db = g.grad_sink(pb);
      for (size_t i = 0; i < gy.data.size(); ++i) db.data[i] += gy.data[i];
    }
  });
}

Graph::Id Graph::sub(Id a, Id b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "sub");
  Tensor out = ta;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
  return add_node(std::move(out), {a, b}, [](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Id pa = g.nodes_[self].parents[0], pb = g.nodes_[self].parents[1];
    if (g.wants_grad(pa)) {
      Tensor& da = g.grad_sink(pa);
      for (size_t i = 0; i < gy.data.size(); ++i) da.data[i] += gy.data[i];
    }
    if (g.wants_grad(pb)) {
      Tensor& db = g.grad_sink(pb);
      for (size_t i = 0; i < gy.data.size(); ++i) db.data[i] -= gy.data[i];
    }
  });
}

Graph::Id Graph::mul(Id a, Id b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "mul");
  Tensor out = ta;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
  return add_node(std::move(out), {a, b}, [](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Id pa = g.nodes_[self].parents[0], pb = g.nodes_[self].parents[1];
    const Tensor& va = g.value(pa);
    const Tensor& vb = g.value(pb);
    if (g.wants_grad(pa)) {
      Tensor& da = g.grad_sink(pa);
      for (size_t i = 0; i < gy.data.size(); ++i) da.data[i] += gy.data[i] * vb.data[i];
    }
    if (g.wants_grad(pb)) {
      Tensor& db = g.grad_sink(pb);
      for (size_t i = 0; i < gy.data.size(); ++i) db.data[i] += gy.data[i] * va.data[i];
    }
  });
}

Graph::Id Graph::scale(Id a, double s) {
  Tensor out = value(a);
  for (double& v : out.data) v *= s;
  return add_node(std::move(out), {a}, [s](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Id pa = g.nodes_[self].parents[0];
    Tensor& da = g.grad_sink(pa);
    for (size_t i = 0; i < gy.data.size(); ++i) da.data[i] += s * gy.data[i];
  });
}

Graph::Id Graph::add_scalar(Id a, double c) {
  Tensor out = value(a);
  for (double& v : out.data) v += c;
  return add_node(std::move(out), {a}, [](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Tensor& da = g.grad_sink(g.nodes_[self].parents[0]);
    for (size_t i = 0; i < gy.data.size(); ++i) da.data[i] += gy.data[i];
  });
}

Graph::Id Graph::relu(Id a) {
  Tensor out = value(a);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return add_node(std::move(out), {a}, [](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Id pa = g.nodes_[self].parents[0];
    const Tensor& va = g.value(pa);
    Tensor& da = g.grad_sink(pa);
    for (size_t i = 0; i < gy.data.size(); ++i)
      if (va.data[i] > 0.0) da.data[i] += gy.data[i];
  });
}

Graph::Id Graph::sigmoid(Id a) {
  Tensor out = value(a);
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return add_node(std::move(out), {a}, [](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    const Tensor& y = g.value(self);
    Tensor& da = g.grad_sink(g.nodes_[self].parents[0]);
    for (size_t i = 0; i < gy.data.size(); ++i)
      da.data[i] += gy.data[i] * y.data[i] * (1.0 - y.data[i]);
  });
}

Graph::Id Graph::exp(Id a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::exp(v);
  return add_node(std::move(out), {a}, [](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    const Tensor& y = g.value(self);
    Tensor& da = g.grad_sink(g.nodes_[self].parents[0]);
    for (size_t i = 0; i < gy.data.size(); ++i) da.data[i] += gy.data[i] * y.data[i];
  });
}

Graph::Id Graph::smooth_l1(Id a) {
  const Tensor& ta = value(a);
  Tensor out = ta;
  for (double& v : out.data) {
    double x = std::fabs(v);
    v = x < 1.0 ? 0.5 * v * v : x - 0.5;
  }
  return add_node(std::move(out), {a}, [](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Id pa = g.nodes_[self].parents[0];
    const Tensor& va = g.value(pa);
    Tensor& da = g.grad_sink(pa);
    for (size_t i = 0; i < gy.data.size(); ++i) {
      double x = va.data[i];
      double d = std::fabs(x) < 1.0 ? x : (x > 0.0 ? 1.0 : -1.0);
      da.data[i] += gy.data[i] * d;
    }
  });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Graph::Id Graph::matmul(Id a, Id b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows())
    throw DimensionError("matmul: incompatible shapes " + ta.shape_str() + " vs " +
                         tb.shape_str());
  size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
  Tensor out({m, n});
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (size_t t = 0; t < k; ++t) acc += ta.at2(i, t) * tb.at2(t, j);
      out.at2(i, j) = acc;
    }
  return add_node(std::move(out), {a, b}, [m, k, n](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Id pa = g.nodes_[self].parents[0], pb = g.nodes_[self].parents[1];
    const Tensor& va = g.value(pa);
    const Tensor& vb = g.value(pb);
    if (g.wants_grad(pa)) {
      Tensor& da = g.grad_sink(pa);  // dA = dC * B^T
      for (size_t i = 0; i < m; ++i)
        for (size_t t = 0; t < k; ++t) {
          double acc = 0.0;
          for (size_t j = 0; j < n; ++j) acc += gy.data[i * n + j] * vb.at2(t, j);
          da.data[i * k + t] += acc;
        }
    }
    if (g.wants_grad(pb)) {
      Tensor& db = g.grad_sink(pb);  // dB = A^T * dC
      for (size_t t = 0; t < k; ++t)
        for (size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (size_t i = 0; i < m; ++i) acc += va.at2(i, t) * gy.data[i * n + j];
          db.data[t * n + j] += acc;
        }
    }
  });
}

Graph::Id Graph::add_bias(Id x, Id bias) {
  const Tensor& tx = value(x);
  const Tensor& tb = value(bias);
  if (tx.rank() != 2 || tb.rank() != 1 || tb.shape[0] != tx.cols())
    throw DimensionError("add_bias: shapes " + tx.shape_str() + " vs " + tb.shape_str());
  size_t r = tx.rows(), c = tx.cols();
  Tensor out = tx;
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) out.at2(i, j) += tb.data[j];
  return add_node(std::move(out), {x, bias}, [r, c](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Id px = g.nodes_[self].parents[0], pb = g.nodes_[self].parents[1];
    if (g.wants_grad(px)) {
      Tensor& dx = g.grad_sink(px);
      for (size_t i = 0; i < gy.data.size(); ++i) dx.data[i] += gy.data[i];
    }
    if (g.wants_grad(pb)) {
      Tensor& db = g.grad_sink(pb);
      for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) db.data[j] += gy.data[i * c + j];
    }
  });
}

Graph::Id Graph::conv1d(Id x, Id kernel, int dilation, int stride, int padding) {
  const Tensor& tx = value(x);
  const Tensor& tk = value(kernel);
  if (tx.rank() != 2 || tk.rank() != 3)
    throw DimensionError("conv1d: want x TxCin and kernel kxCinxCout, got " + tx.shape_str() +
                         " and " + tk.shape_str());
  if (dilation < 1 || stride < 1 || padding < 0)
    throw ConfigError("conv1d: dilation/stride must be >=1, padding >=0");
  size_t T = tx.shape[0], cin = tx.shape[1];
  size_t k = tk.shape[0], cout = tk.shape[2];
  if (tk.shape[1] != cin)
    throw DimensionError("conv1d: kernel input channels " + std::to_string(tk.shape[1]) +
                         " != x channels " + std::to_string(cin));
  long eff = static_cast<long>(k - 1) * dilation + 1;
  long padded = static_cast<long>(T) + 2L * padding;
  if (eff > padded)
    throw DegenerateInputError("conv1d: effective kernel extent " + std::to_string(eff) +
                               " exceeds padded length " + std::to_string(padded));
  size_t tout = static_cast<size_t>((padded - eff) / stride) + 1;
  Tensor out({tout, cout});
  for (size_t to = 0; to < tout; ++to)
    for (size_t j = 0; j < k; ++j) {
      long ti = static_cast<long>(to) * stride + static_cast<long>(j) * dilation - padding;
      if (ti < 0 || ti >= static_cast<long>(T)) continue;  // zero padding
      for (size_t ci = 0; ci < cin; ++ci) {
        double xv = tx.at2(static_cast<size_t>(ti), ci);
        if (xv == 0.0) continue;
        const double* krow = &tk.data[(j * cin + ci) * cout];
        double* orow = &out.data[to * cout];
        for (size_t co = 0; co < cout; ++co) orow[co] += xv * krow[co];
      }
    }
  return add_node(std::move(out), {x, kernel},
                  [T, cin, k, cout, tout, dilation, stride, padding](Graph& g, Id self) {
                    const Tensor& gy = g.nodes_[self].grad;
                    Id px = g.nodes_[self].parents[0], pk = g.nodes_[self].parents[1];
                    const Tensor& vx = g.value(px);
                    const Tensor& vk = g.value(pk);
                    bool wx = g.wants_grad(px), wk = g.wants_grad(pk);
                    Tensor* dx = wx ? &g.grad_sink(px) : nullptr;
                    Tensor* dk = wk ? &g.grad_sink(pk) : nullptr;
                    for (size_t to = 0; to < tout; ++to)
                      for (size_t j = 0; j < k; ++j) {
                        long ti = static_cast<long>(to) * stride +
                                  static_cast<long>(j) * dilation - padding;
                        if (ti < 0 || ti >= static_cast<long>(T)) continue;
                        for (size_t ci = 0; ci < cin; ++ci) {
                          const double* gyrow = &gy.data[to * cout];
                          if (wx) {
                            const double* krow = &vk.data[(j * cin + ci) * cout];
                            double acc = 0.0;
                            for (size_t co = 0; co < cout; ++co) acc += gyrow[co] * krow[co];
                            dx->data[static_cast<size_t>(ti) * cin + ci] += acc;
                          }
                          if (wk) {
                            double xv = vx.at2(static_cast<size_t>(ti), ci);
                            double* krow = &dk->data[(j * cin + ci) * cout];
                            for (size_t co = 0; co < cout; ++co) krow[co] += xv * gyrow[co];
                          }
                        }
                      }
                  });
}

Graph::Id Graph::softmax(Id x, int axis, double scale_div) {
  const Tensor& tx = value(x);
  if (scale_div <= 0.0) throw ContractError("softmax: scale must be positive");
  size_t r, c;
  if (tx.rank() == 1) {
    r = 1;
    c = tx.shape[0];
    if (axis != 0) throw DimensionError("softmax: axis out of range for rank-1");
  } else if (tx.rank() == 2) {
    r = tx.shape[0];
    c = tx.shape[1];
    if (axis != 0 && axis != 1) throw DimensionError("softmax: axis out of range for rank-2");
  } else {
    throw DimensionError("softmax: rank must be 1 or 2");
  }
  bool row_axis = (tx.rank() == 1) || axis == 1;  // reduce along columns of each row
  size_t outer = row_axis ? r : c;
  size_t inner = row_axis ? c : r;
  auto idx = [row_axis, c](size_t o, size_t i) { return row_axis ? o * c + i : i * c + o; };
  Tensor out = tx;
  std::vector<double> buf;
  for (size_t o = 0; o < outer; ++o) {
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < inner; ++i) mx = std::max(mx, tx.data[idx(o, i)]);
    buf.clear();
    for (size_t i = 0; i < inner; ++i) {
      double e = std::exp((tx.data[idx(o, i)] - mx) / scale_div);
      out.data[idx(o, i)] = e;
      buf.push_back(e);
    }
    double denom = sorted_sum(buf);
    for (size_t i = 0; i < inner; ++i) out.data[idx(o, i)] /= denom;
  }
  return add_node(std::move(out), {x},
                  [outer, inner, idx, scale_div](Graph& g, Id self) {
                    const Tensor& gy = g.nodes_[self].grad;
                    const Tensor& y = g.value(self);
                    Tensor& dx = g.grad_sink(g.nodes_[self].parents[0]);
                    for (size_t o = 0; o < outer; ++o) {
                      double dot = 0.0;
                      for (size_t i = 0; i < inner; ++i)
                        dot += gy.data[idx(o, i)] * y.data[idx(o, i)];
                      for (size_t i = 0; i < inner; ++i) {
                        size_t p = idx(o, i);
                        dx.data[p] += y.data[p] * (gy.data[p] - dot) / scale_div;
                      }
                    }
                  });
}

Graph::Id Graph::layer_norm(Id x, Id gain, Id bias, double eps) {
  const Tensor& tx = value(x);
  const Tensor& tg = value(gain);
  const Tensor& tb = value(bias);
  if (eps <= 0.0) throw ContractError("layer_norm: eps must be positive");
  if (tx.rank() != 2) throw DimensionError("layer_norm: want rank-2 input");
  size_t r = tx.rows(), c = tx.cols();
  if (tg.numel() != c || tb.numel() != c)
    throw DimensionError("layer_norm: gain/bias length must equal channels");
  Tensor out({r, c});
  Tensor xhat({r, c});
  std::vector<double> inv_sigma(r);
  for (size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (size_t j = 0; j < c; ++j) mean += tx.at2(i, j);
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (size_t j = 0; j < c; ++j) {
      double d = tx.at2(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[i] = is;
    for (size_t j = 0; j < c; ++j) {
      double xh = (tx.at2(i, j) - mean) * is;
      xhat.at2(i, j) = xh;
      out.at2(i, j) = xh * tg.data[j] + tb.data[j];
    }
  }
  return add_node(
      std::move(out), {x, gain, bias},
      [r, c, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Graph& g, Id self) {
        const Tensor& gy = g.nodes_[self].grad;
        Id px = g.nodes_[self].parents[0];
        Id pg = g.nodes_[self].parents[1];
        Id pb = g.nodes_[self].parents[2];
        const Tensor& vg = g.value(pg);
        if (g.wants_grad(px)) {
          Tensor& dx = g.grad_sink(px);
          for (size_t i = 0; i < r; ++i) {
            double mean_gyg = 0.0, mean_gyg_xh = 0.0;
            for (size_t j = 0; j < c; ++j) {
              double t = gy.at2(i, j) * vg.data[j];
              mean_gyg += t;
              mean_gyg_xh += t * xhat.at2(i, j);
            }
            mean_gyg /= static_cast<double>(c);
            mean_gyg_xh /= static_cast<double>(c);
            for (size_t j = 0; j < c; ++j) {
              double t = gy.at2(i, j) * vg.data[j];
              dx.at2(i, j) += (t - mean_gyg - xhat.at2(i, j) * mean_gyg_xh) * inv_sigma[i];
            }
          }
        }
        if (g.wants_grad(pg)) {
          Tensor& dg = g.grad_sink(pg);
          for (size_t i = 0; i < r; ++i)
            for (size_t j = 0; j < c; ++j) dg.data[j] += gy.at2(i, j) * xhat.at2(i, j);
        }
        if (g.wants_grad(pb)) {
          Tensor& db = g.grad_sink(pb);
          for (size_t i = 0; i < r; ++i)
            for (size_t j = 0; j < c; ++j) db.data[j] += gy.at2(i, j);
        }
      });
}

Graph::Id Graph::global_avg_pool(Id x) {
  const Tensor& tx = value(x);
  if (tx.rank() != 2) throw DimensionError("global_avg_pool: want rank-2 input");
  size_t r = tx.rows(), c = tx.cols();
  if (r == 0) throw DegenerateInputError("global_avg_pool: empty time axis");
  Tensor out({c});
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) out.data[j] += tx.at2(i, j);
  for (size_t j = 0; j < c; ++j) out.data[j] /= static_cast<double>(r);
  return add_node(std::move(out), {x}, [r, c](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Tensor& dx = g.grad_sink(g.nodes_[self].parents[0]);
    double inv = 1.0 / static_cast<double>(r);
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < c; ++j) dx.data[i * c + j] += gy.data[j] * inv;
  });
}

Graph::Id Graph::sum(Id x) {
  const Tensor& tx = value(x);
  double acc = 0.0;
  for (double v : tx.data) acc += v;
  return add_node(Tensor::scalar(acc), {x}, [](Graph& g, Id self) {
    double gy = g.nodes_[self].grad.data[0];
    Tensor& dx = g.grad_sink(g.nodes_[self].parents[0]);
    for (double& v : dx.data) v += gy;
  });
}

Graph::Id Graph::at(Id x, size_t flat_index) {
  const Tensor& tx = value(x);
  if (flat_index >= tx.numel()) throw DimensionError("at: index out of range");
  return add_node(Tensor::scalar(tx.data[flat_index]), {x}, [flat_index](Graph& g, Id self) {
    double gy = g.nodes_[self].grad.data[0];
    g.grad_sink(g.nodes_[self].parents[0]).data[flat_index] += gy;
  });
}

Graph::Id Graph::slice_cols(Id x, size_t c0, size_t c1) {
  const Tensor& tx = value(x);
  if (tx.rank() != 2 || c0 >= c1 || c1 > tx.cols())
    throw DimensionError("slice_cols: bad range for shape " + tx.shape_str());
  size_t r = tx.rows(), c = tx.cols(), w = c1 - c0;
  Tensor out({r, w});
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < w; ++j) out.at2(i, j) = tx.at2(i, c0 + j);
  return add_node(std::move(out), {x}, [r, c, c0, w](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Tensor& dx = g.grad_sink(g.nodes_[self].parents[0]);
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < w; ++j) dx.data[i * c + c0 + j] += gy.data[i * w + j];
  });
}

Graph::Id Graph::concat_cols(const std::vector<Id>& xs) {
  if (xs.empty()) throw DimensionError("concat_cols: no inputs");
  size_t r = value(xs[0]).rows();
  size_t total = 0;
  for (Id id : xs) {
    const Tensor& t = value(id);
    if (t.rank() != 2 || t.rows() != r)
      throw DimensionError("concat_cols: row mismatch at " + t.shape_str());
    total += t.cols();
  }
  Tensor out({r, total});
  size_t off = 0;
  for (Id id : xs) {
    const Tensor& t = value(id);
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < t.cols(); ++j) out.at2(i, off + j) = t.at2(i, j);
    off += t.cols();
  }
  return add_node(std::move(out), xs, [r, total](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    size_t off = 0;
    for (Id p : g.nodes_[self].parents) {
      size_t w = g.value(p).cols();
      if (g.wants_grad(p)) {
        Tensor& dp = g.grad_sink(p);
        for (size_t i = 0; i < r; ++i)
          for (size_t j = 0; j < w; ++j) dp.data[i * w + j] += gy.data[i * total + off + j];
      }
      off += w;
    }
  });
}

Graph::Id Graph::as_row(Id x) {
  const Tensor& tx = value(x);
  if (tx.rank() != 1) throw DimensionError("as_row: want rank-1 input");
  Tensor out = tx;
  out.shape = {1, tx.shape[0]};
  return add_node(std::move(out), {x}, [](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Tensor& dx = g.grad_sink(g.nodes_[self].parents[0]);
    for (size_t i = 0; i < gy.data.size(); ++i) dx.data[i] += gy.data[i];
  });
}

Graph::Id Graph::concat_rows(const std::vector<Id>& xs) {
  if (xs.empty()) throw DimensionError("concat_rows: no inputs");
  size_t c = value(xs[0]).cols();
  size_t total = 0;
  for (Id id : xs) {
    const Tensor& t = value(id);
    if (t.rank() != 2 || t.cols() != c)
      throw DimensionError("concat_rows: column mismatch at " + t.shape_str());
    total += t.rows();
  }
  Tensor out({total, c});
  size_t off = 0;
  for (Id id : xs) {
    const Tensor& t = value(id);
    std::copy(t.data.begin(), t.data.end(), out.data.begin() + off * c);
    off += t.rows();
  }
  return add_node(std::move(out), xs, [c](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    size_t off = 0;
    for (Id p : g.nodes_[self].parents) {
      size_t rr = g.value(p).rows();
      if (g.wants_grad(p)) {
        Tensor& dp = g.grad_sink(p);
        for (size_t i = 0; i < rr * c; ++i) dp.data[i] += gy.data[off * c + i];
      }
      off += rr;
    }
  });
}

}  // namespace tal
