#include <algorithm>
#include <cmath>
#include <limits>

#include "tal/errors.hpp"
#include "tal/graph.hpp"

// Windowed and full-sequence attention cores plus the row-level sampling and
// masking ops used by the boundary models. Reductions over the time axis use
// sorted_sum so that permuting the input positions permutes the outputs
// bit-exactly, and so that a full-width masked window reproduces the global
// path bit-exactly.

namespace tal {

static void check_qk(const Tensor& q, const Tensor& k, const char* op) {
  if (q.rank() != 2 || k.rank() != 2 || q.rows() != k.rows() || q.cols() != k.cols())
    throw DimensionError(std::string(op) + ": q/k shape mismatch " + q.shape_str() + " vs " +
                         k.shape_str());
}

Graph::Id Graph::local_scores(Id q, Id k, size_t window, bool masked) {
  const Tensor& tq = value(q);
  const Tensor& tk = value(k);
  check_qk(tq, tk, "local_scores");
  if (window % 2 == 0 || window == 0) throw ConfigError("local_scores: window must be odd");
  size_t T = tq.rows(), c = tq.cols();
  long half = static_cast<long>(window / 2);
  Tensor out({T, window});
  for (size_t i = 0; i < T; ++i)
    for (size_t j = 0; j < window; ++j) {
      long src = static_cast<long>(i) - half + static_cast<long>(j);
      if (src < 0 || src >= static_cast<long>(T)) {
        // zero-padded key row: zero logit, or -inf when the padded slots are masked
        out.at2(i, j) = masked ? -std::numeric_limits<double>::infinity() : 0.0;
        continue;
      }
      double acc = 0.0;
      for (size_t t = 0; t < c; ++t) acc += tq.at2(i, t) * tk.at2(static_cast<size_t>(src), t);
      out.at2(i, j) = acc;
    }
  return add_node(std::move(out), {q, k}, [T, c, window, half](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Id pq = g.nodes_[self].parents[0], pk = g.nodes_[self].parents[1];
    const Tensor& vq = g.value(pq);
    const Tensor& vk = g.value(pk);
    bool wq = g.wants_grad(pq), wk = g.wants_grad(pk);
    Tensor* dq = wq ? &g.grad_sink(pq) : nullptr;
    Tensor* dk = wk ? &g.grad_sink(pk) : nullptr;
    for (size_t i = 0; i < T; ++i)
      for (size_t j = 0; j < window; ++j) {
        long src = static_cast<long>(i) - half + static_cast<long>(j);
        if (src < 0 || src >= static_cast<long>(T)) continue;
        double gs = gy.at2(i, j);
        if (gs == 0.0) continue;
        for (size_t t = 0; t < c; ++t) {
          if (wq) dq->at2(i, t) += gs * vk.at2(static_cast<size_t>(src), t);
          if (wk) dk->at2(static_cast<size_t>(src), t) += gs * vq.at2(i, t);
        }
      }
  });
}

Graph::Id Graph::local_apply(Id w, Id v, size_t window) {
  const Tensor& tw = value(w);
  const Tensor& tv = value(v);
  if (tw.rank() != 2 || tv.rank() != 2 || tw.cols() != window || tw.rows() != tv.rows())
    throw DimensionError("local_apply: shapes " + tw.shape_str() + " vs " + tv.shape_str());
  size_t T = tv.rows(), c = tv.cols();
  long half = static_cast<long>(window / 2);
  Tensor out({T, c});
  std::vector<double> buf(window);
  for (size_t i = 0; i < T; ++i)
    for (size_t t = 0; t < c; ++t) {
      buf.clear();
      for (size_t j = 0; j < window; ++j) {
        long src = static_cast<long>(i) - half + static_cast<long>(j);
        double vv = (src < 0 || src >= static_cast<long>(T))
                        ? 0.0
                        : tv.at2(static_cast<size_t>(src), t);
        buf.push_back(tw.at2(i, j) * vv);
      }
      out.at2(i, t) = sorted_sum(buf);
    }
  return add_node(std::move(out), {w, v}, [T, c, window, half](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Id pw = g.nodes_[self].parents[0], pv = g.nodes_[self].parents[1];
    const Tensor& vw = g.value(pw);
    const Tensor& vv = g.value(pv);
    bool ww = g.wants_grad(pw), wv = g.wants_grad(pv);
    Tensor* dw = ww ? &g.grad_sink(pw) : nullptr;
    Tensor* dv = wv ? &g.grad_sink(pv) : nullptr;
    for (size_t i = 0; i < T; ++i)
      for (size_t j = 0; j < window; ++j) {
        long src = static_cast<long>(i) - half + static_cast<long>(j);
        if (src < 0 || src >= static_cast<long>(T)) continue;
        size_t s = static_cast<size_t>(src);
        for (size_t t = 0; t < c; ++t) {
          double go = gy.at2(i, t);
          if (ww) dw->at2(i, j) += go * vv.at2(s, t);
          if (wv) dv->at2(s, t) += go * vw.at2(i, j);
        }
      }
  });
}

Graph::Id Graph::global_scores(Id q, Id k) {
  const Tensor& tq = value(q);
  const Tensor& tk = value(k);
  check_qk(tq, tk, "global_scores");
  size_t T = tq.rows(), c = tq.cols();
  Tensor out({T, T});
  for (size_t i = 0; i < T; ++i)
    for (size_t j = 0; j < T; ++j) {
      double acc = 0.0;
      for (size_t t = 0; t < c; ++t) acc += tq.at2(i, t) * tk.at2(j, t);
      out.at2(i, j) = acc;
    }
  return add_node(std::move(out), {q, k}, [T, c](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Id pq = g.nodes_[self].parents[0], pk = g.nodes_[self].parents[1];
    const Tensor& vq = g.value(pq);
    const Tensor& vk = g.value(pk);
    if (g.wants_grad(pq)) {
      Tensor& dq = g.grad_sink(pq);
      for (size_t i = 0; i < T; ++i)
        for (size_t t = 0; t < c; ++t) {
          double acc = 0.0;
          for (size_t j = 0; j < T; ++j) acc += gy.at2(i, j) * vk.at2(j, t);
          dq.at2(i, t) += acc;
        }
    }
    if (g.wants_grad(pk)) {
      Tensor& dk = g.grad_sink(pk);
      for (size_t j = 0; j < T; ++j)
        for (size_t t = 0; t < c; ++t) {
          double acc = 0.0;
          for (size_t i = 0; i < T; ++i) acc += gy.at2(i, j) * vq.at2(i, t);
          dk.at2(j, t) += acc;
        }
    }
  });
}

Graph::Id Graph::global_apply(Id w, Id v) {
  const Tensor& tw = value(w);
  const Tensor& tv = value(v);
  if (tw.rank() != 2 || tv.rank() != 2 || tw.cols() != tv.rows() || tw.rows() != tv.rows())
    throw DimensionError("global_apply: shapes " + tw.shape_str() + " vs " + tv.shape_str());
  size_t T = tv.rows(), c = tv.cols();
  Tensor out({T, c});
  std::vector<double> buf(T);
  for (size_t i = 0; i < T; ++i)
    for (size_t t = 0; t < c; ++t) {
      buf.clear();
      for (size_t j = 0; j < T; ++j) buf.push_back(tw.at2(i, j) * tv.at2(j, t));
      out.at2(i, t) = sorted_sum(buf);
    }
  return add_node(std::move(out), {w, v}, [T, c](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Id pw = g.nodes_[self].parents[0], pv = g.nodes_[self].parents[1];
    const Tensor& vw = g.value(pw);
    const Tensor& vv = g.value(pv);
    if (g.wants_grad(pw)) {
      Tensor& dw = g.grad_sink(pw);
      for (size_t i = 0; i < T; ++i)
        for (size_t j = 0; j < T; ++j) {
          double acc = 0.0;
          for (size_t t = 0; t < c; ++t) acc += gy.at2(i, t) * vv.at2(j, t);
          dw.at2(i, j) += acc;
        }
    }
    if (g.wants_grad(pv)) {
      Tensor& dv = g.grad_sink(pv);
      for (size_t j = 0; j < T; ++j)
        for (size_t t = 0; t < c; ++t) {
          double acc = 0.0;
          for (size_t i = 0; i < T; ++i) acc += vw.at2(i, j) * gy.at2(i, t);
          dv.at2(j, t) += acc;
        }
    }
  });
}

Graph::Id Graph::linear_resample(Id x, std::vector<double> positions) {
  const Tensor& tx = value(x);
  if (tx.rank() != 2) throw DimensionError("linear_resample: want rank-2 input");
  size_t T = tx.rows(), c = tx.cols();
  size_t L = positions.size();
  if (L == 0) throw DegenerateInputError("linear_resample: no sample positions");
  // Each sample blends the two nearest rows; row i is anchored at coordinate
  // i + 0.5, everything outside [0, T] reads as a zero vector.
  struct Tap {
    long i0;
    double w0, w1;
  };
  std::vector<Tap> taps(L);
  Tensor out({L, c});
  for (size_t s = 0; s < L; ++s) {
    double u = positions[s] - 0.5;
    long i0 = static_cast<long>(std::floor(u));
    double frac = u - static_cast<double>(i0);
    taps[s] = {i0, 1.0 - frac, frac};
    const bool in0 = i0 >= 0 && i0 < static_cast<long>(T);
    const bool in1 = i0 + 1 >= 0 && i0 + 1 < static_cast<long>(T);
    for (size_t t = 0; t < c; ++t) {
      double v = 0.0;
      if (in0) v += taps[s].w0 * tx.at2(static_cast<size_t>(i0), t);
      if (in1) v += taps[s].w1 * tx.at2(static_cast<size_t>(i0 + 1), t);
      out.at2(s, t) = v;
    }
  }
  return add_node(std::move(out), {x}, [T, c, L, taps = std::move(taps)](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Tensor& dx = g.grad_sink(g.nodes_[self].parents[0]);
    for (size_t s = 0; s < L; ++s) {
      long i0 = taps[s].i0;
      for (size_t t = 0; t < c; ++t) {
        double go = gy.at2(s, t);
        if (i0 >= 0 && i0 < static_cast<long>(T))
          dx.at2(static_cast<size_t>(i0), t) += taps[s].w0 * go;
        if (i0 + 1 >= 0 && i0 + 1 < static_cast<long>(T))
          dx.at2(static_cast<size_t>(i0 + 1), t) += taps[s].w1 * go;
      }
    }
  });
}

Graph::Id Graph::zero_rows(Id x, std::vector<uint8_t> row_mask) {
  const Tensor& tx = value(x);
  if (tx.rank() != 2 || row_mask.size() != tx.rows())
    throw DimensionError("zero_rows: mask length must equal row count");
  size_t T = tx.rows(), c = tx.cols();
  Tensor out = tx;
  for (size_t i = 0; i < T; ++i)
    if (row_mask[i])
      for (size_t t = 0; t < c; ++t) out.at2(i, t) = 0.0;
  return add_node(std::move(out), {x}, [T, c, mask = std::move(row_mask)](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Tensor& dx = g.grad_sink(g.nodes_[self].parents[0]);
    for (size_t i = 0; i < T; ++i)
      if (!mask[i])
        for (size_t t = 0; t < c; ++t) dx.at2(i, t) += gy.at2(i, t);
  });
}

Graph::Id Graph::max2(Id a, Id b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb))
    throw DimensionError("max2: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::max(ta.data[i], tb.data[i]);
  return add_node(std::move(out), {a, b}, [](Graph& g, Id self) {
    const Tensor& gy = g.nodes_[self].grad;
    Id pa = g.nodes_[self].parents[0], pb = g.nodes_[self].parents[1];
    const Tensor& va = g.value(pa);
    const Tensor& vb = g.value(pb);
    bool wa = g.wants_grad(pa), wb = g.wants_grad(pb);
    Tensor* da = wa ? &g.grad_sink(pa) : nullptr;
    Tensor* db = wb ? &g.grad_sink(pb) : nullptr;
    for (size_t i = 0; i < gy.data.size(); ++i) {
      if (va.data[i] >= vb.data[i]) {  // ties route to the first argument
        if (wa) da->data[i] += gy.data[i];
      } else if (wb) {
        db->data[i] += gy.data[i];
      }
    }
  });
}

}  // namespace tal
