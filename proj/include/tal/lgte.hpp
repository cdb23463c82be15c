#pragma once

#include <string>
#include <vector>

#include "tal/graph.hpp"
#include "tal/params.hpp"
#include "tal/rng.hpp"

namespace tal {

// Channel-grouped local/global encoder layer. The input is projected by three
// full CxC matrices, split into N channel groups; the first A groups run
// windowed attention, the rest attend over the whole sequence. Output is
// recombined through W_o, then LayerNorm(x)+x and LayerNorm(FFN(x)+x).
struct LgteConfig {
  size_t channels = 0;      // C
  size_t groups = 8;        // N
  size_t local_groups = 4;  // A, 0..N
  size_t window = 9;        // odd
  size_t ffn_hidden = 0;    // 0 -> 2*channels
  size_t layers = 2;
  bool mask_padding = false;        // -inf logits on out-of-range window slots
  bool literal_global_scale = false;  // softmax divisor sqrt(C) instead of sqrt(C/N)

  size_t group_width() const { return channels / groups; }
  size_t hidden() const { return ffn_hidden ? ffn_hidden : 2 * channels; }
  double attn_scale() const;
  void validate() const;
};

struct LgteLayerParams {
  ParamTensor* gamma;  // query projection, CxC
  ParamTensor* rho;    // key projection, CxC
  ParamTensor* phi;    // value projection, CxC
  ParamTensor* w_o;    // output mix, CxC
  ParamTensor* ffn_w1;
  ParamTensor* ffn_b1;
  ParamTensor* ffn_w2;
  ParamTensor* ffn_b2;
  ParamTensor* ln1_gain;
  ParamTensor* ln1_bias;
  ParamTensor* ln2_gain;
  ParamTensor* ln2_bias;
};

// Small standalone encoders over a single channel group (own projections).
struct AttnProjections {
  ParamTensor* gamma;
  ParamTensor* rho;
  ParamTensor* phi;
};

LgteLayerParams register_lgte_layer(ParamStore& store, const std::string& prefix,
                                    const LgteConfig& cfg, Rng& rng);
LgteLayerParams bind_lgte_layer(ParamStore& store, const std::string& prefix);
std::vector<LgteLayerParams> register_lgte_stack(ParamStore& store, const LgteConfig& cfg,
                                                 Rng& rng);
std::vector<LgteLayerParams> bind_lgte_stack(ParamStore& store, const LgteConfig& cfg);

AttnProjections register_attn_projections(ParamStore& store, const std::string& prefix,
                                          size_t width, Rng& rng);

// Windowed attention over an already-projected group: q/k/v are x times the
// three projections; positions outside the window never influence position i.
Graph::Id lte_forward(Graph& g, Graph::Id x, const AttnProjections& p, size_t window,
                      double scale, bool masked = false);
// Full-sequence counterpart.
Graph::Id gte_forward(Graph& g, Graph::Id x, const AttnProjections& p, double scale);

Graph::Id lgte_forward(Graph& g, Graph::Id x, const LgteLayerParams& p, const LgteConfig& cfg);
Graph::Id lgte_stack(Graph& g, Graph::Id x, const std::vector<LgteLayerParams>& layers,
                     const LgteConfig& cfg);

}  // namespace tal
