#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "tal/params.hpp"
#include "tal/tensor.hpp"

namespace tal {

// Define-by-run computation graph. Every op computes its forward result
// eagerly and records a closure that propagates gradients to its parents.
// backward() traverses the node list in exact reverse recording order.
//
// Recording and backward are single-threaded per graph; forward evaluation of
// independent graphs with frozen parameters may run in parallel.
class Graph {
 public:
  using Id = size_t;

  // leaves -----------------------------------------------------------------
  Id leaf(Tensor t, bool requires_grad = false);
  Id param(ParamTensor& p);  // gradient accumulates into p.grad across backward() calls
  Id constant(double v) { return leaf(Tensor::scalar(v)); }

  // elementwise ------------------------------------------------------------
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale(Id a, double s);
  Id add_scalar(Id a, double c);
  Id relu(Id a);
  Id sigmoid(Id a);
  Id exp(Id a);
  Id smooth_l1(Id a);  // per element: x^2/2 if |x|<1 else |x|-1/2

  // linear algebra ---------------------------------------------------------
  Id matmul(Id a, Id b);        // [m x k] * [k x n]
  Id add_bias(Id x, Id bias);   // rows of x + bias vector
  Id conv1d(Id x, Id kernel, int dilation, int stride, int padding);  // x: TxCin, k: kxCinxCout
  Id softmax(Id x, int axis, double scale);
  Id layer_norm(Id x, Id gain, Id bias, double eps);  // per row over channels
  Id global_avg_pool(Id x);  // TxC -> C
  Id sum(Id x);              // scalar
  Id at(Id x, size_t flat_index);  // scalar pick
  Id slice_cols(Id x, size_t c0, size_t c1);
  Id concat_cols(const std::vector<Id>& xs);
  Id concat_rows(const std::vector<Id>& xs);
  Id as_row(Id x);  // vector -> 1 x n matrix

  // attention cores ----------------------------------------------------------
  // scores[i][j] = dot(q[i], k[i - w/2 + j]); out-of-range slots are zero
  // logits, or -inf when masked.
  Id local_scores(Id q, Id k, size_t window, bool masked);
  // out[i] = sum_j w[i][j] * v[i - window/2 + j], zero rows out of range.
  Id local_apply(Id w, Id v, size_t window);
  Id global_scores(Id q, Id k);  // q * k^T
  Id global_apply(Id w, Id v);   // w * v with order-invariant accumulation

  // sampling / masking -------------------------------------------------------
  // Rows gathered at fractional snippet coordinates (feature i sits at i+0.5);
  // samples outside [0, T] fade to zero vectors.
  Id linear_resample(Id x, std::vector<double> positions);
  Id zero_rows(Id x, std::vector<uint8_t> row_mask);  // mask==1 -> row zeroed
  Id max2(Id a, Id b);

  // losses -------------------------------------------------------------------
  Id bce_mean(Id probs, std::vector<double> labels);  // mean binary cross-entropy
  // Outer-inner contrast on a 1-D activation track (soft fractional bins):
  // mean over the ring [S,s)u(e,E] minus mean over the inner [s,e].
  // full_interval switches the outer term from the ring to the whole [S,E].
  Id oic(Id cas, Id s, Id e, Id outer_s, Id outer_e, bool full_interval = false);
  // Biased V-statistic MMD with a sum of Gaussian kernels over bandwidths.
  Id mmd_gaussian(Id x, Id y, std::vector<double> bandwidths);

  // control ------------------------------------------------------------------
  void backward(Id loss);  // loss must be scalar; accumulates into bound params

  const Tensor& value(Id id) const { return nodes_[id].value; }
  const Tensor& grad(Id id) const;
  size_t size() const { return nodes_.size(); }

 private:
  friend struct GraphOps;
  struct Node {
    Tensor value;
    Tensor grad;  // lazily sized at backward()
    bool requires_grad = false;
    ParamTensor* bound = nullptr;
    std::vector<Id> parents;
    std::function<void(Graph&, Id)> backprop;  // null for leaves
  };

  Id add_node(Tensor value, std::vector<Id> parents, std::function<void(Graph&, Id)> backprop);
  bool any_parent_requires(const std::vector<Id>& parents) const;
  // Gradient accumulation target for a node (param grad slot for bound leaves).
  Tensor& grad_sink(Id id);
  bool wants_grad(Id id) const { return nodes_[id].requires_grad; }

  std::vector<Node> nodes_;
  std::unordered_map<const ParamTensor*, Id> param_ids_;
};

}  // namespace tal
