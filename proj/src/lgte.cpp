#include "tal/lgte.hpp"

#include <cmath>

#include "tal/errors.hpp"

namespace tal {

double LgteConfig::attn_scale() const {
  return std::sqrt(static_cast<double>(literal_global_scale ? channels : group_width()));
}

void LgteConfig::validate() const {
  if (channels == 0) throw ConfigError("lgte: channels must be positive");
  if (groups == 0 || channels % groups != 0)
    throw ConfigError("lgte: channels (" + std::to_string(channels) +
                      ") must divide evenly into groups (" + std::to_string(groups) + ")");
  if (local_groups > groups) throw ConfigError("lgte: local_groups must be <= groups");
  if (window % 2 == 0 || window == 0) throw ConfigError("lgte: window must be odd");
  if (layers == 0) throw ConfigError("lgte: layers must be >= 1");
}

LgteLayerParams register_lgte_layer(ParamStore& store, const std::string& prefix,
                                    const LgteConfig& cfg, Rng& rng) {
  cfg.validate();
  size_t c = cfg.channels, h = cfg.hidden();
  LgteLayerParams p;
  p.gamma = &store.add_uniform(prefix + "gamma", {c, c}, c, rng);
  p.rho = &store.add_uniform(prefix + "rho", {c, c}, c, rng);
  p.phi = &store.add_uniform(prefix + "phi", {c, c}, c, rng);
  p.w_o = &store.add_uniform(prefix + "w_o", {c, c}, c, rng);
  p.ffn_w1 = &store.add_uniform(prefix + "ffn_w1", {c, h}, c, rng);
  p.ffn_b1 = &store.add_constant(prefix + "ffn_b1", {h}, 0.0);
  p.ffn_w2 = &store.add_uniform(prefix + "ffn_w2", {h, c}, h, rng);
  p.ffn_b2 = &store.add_constant(prefix + "ffn_b2", {c}, 0.0);
  p.ln1_gain = &store.add_constant(prefix + "ln1_gain", {c}, 1.0);
  p.ln1_bias = &store.add_constant(prefix + "ln1_bias", {c}, 0.0);
  p.ln2_gain = &store.add_constant(prefix + "ln2_gain", {c}, 1.0);
  p.ln2_bias = &store.add_constant(prefix + "ln2_bias", {c}, 0.0);
  return p;
}

LgteLayerParams bind_lgte_layer(ParamStore& store, const std::string& prefix) {
  LgteLayerParams p;
  p.gamma = &store.at(prefix + "gamma");
  p.rho = &store.at(prefix + "rho");
  p.phi = &store.at(prefix + "phi");
  p.w_o = &store.at(prefix + "w_o");
  p.ffn_w1 = &store.at(prefix + "ffn_w1");
  p.ffn_b1 = &store.at(prefix + "ffn_b1");
  p.ffn_w2 = &store.at(prefix + "ffn_w2");
  p.ffn_b2 = &store.at(prefix + "ffn_b2");
  p.ln1_gain = &store.at(prefix + "ln1_gain");
  p.ln1_bias = &store.at(prefix + "ln1_bias");
  p.ln2_gain = &store.at(prefix + "ln2_gain");
  p.ln2_bias = &store.at(prefix + "ln2_bias");
  return p;
}

static std::string layer_prefix(size_t i) { return "lgte.layer" + std::to_string(i) + "."; }

std::vector<LgteLayerParams> register_lgte_stack(ParamStore& store, const LgteConfig& cfg,
                                                 Rng& rng) {
  std::vector<LgteLayerParams> layers;
  for (size_t i = 0; i < cfg.layers; ++i)
    layers.push_back(register_lgte_layer(store, layer_prefix(i), cfg, rng));
  return layers;
}

std::vector<LgteLayerParams> bind_lgte_stack(ParamStore& store, const LgteConfig& cfg) {
  std::vector<LgteLayerParams> layers;
  for (size_t i = 0; i < cfg.layers; ++i) layers.push_back(bind_lgte_layer(store, layer_prefix(i)));
  return layers;
}

AttnProjections register_attn_projections(ParamStore& store, const std::string& prefix,
                                          size_t width, Rng& rng) {
  AttnProjections p;
  p.gamma = &store.add_uniform(prefix + "gamma", {width, width}, width, rng);
  p.rho = &store.add_uniform(prefix + "rho", {width, width}, width, rng);
  p.phi = &store.add_uniform(prefix + "phi", {width, width}, width, rng);
  return p;
}

// attention cores over already-projected q/k/v --------------------------------

static Graph::Id local_attention(Graph& g, Graph::Id q, Graph::Id k, Graph::Id v, size_t window,
                                 double scale, bool masked) {
  auto scores = g.local_scores(q, k, window, masked);
  auto weights = g.softmax(scores, 1, scale);
  return g.local_apply(weights, v, window);
}

static Graph::Id global_attention(Graph& g, Graph::Id q, Graph::Id k, Graph::Id v, double scale) {
  auto scores = g.global_scores(q, k);
  auto weights = g.softmax(scores, 1, scale);
  return g.global_apply(weights, v);
}

Graph::Id lte_forward(Graph& g, Graph::Id x, const AttnProjections& p, size_t window, double scale,
                      bool masked) {
  auto q = g.matmul(x, g.param(*p.gamma));
  auto k = g.matmul(x, g.param(*p.rho));
  auto v = g.matmul(x, g.param(*p.phi));
  return local_attention(g, q, k, v, window, scale, masked);
}

Graph::Id gte_forward(Graph& g, Graph::Id x, const AttnProjections& p, double scale) {
  auto q = g.matmul(x, g.param(*p.gamma));
  auto k = g.matmul(x, g.param(*p.rho));
  auto v = g.matmul(x, g.param(*p.phi));
  return global_attention(g, q, k, v, scale);
}

Graph::Id lgte_forward(Graph& g, Graph::Id x, const LgteLayerParams& p, const LgteConfig& cfg) {
  cfg.validate();
  if (g.value(x).cols() != cfg.channels)
    throw DimensionError("lgte_forward: input has " + std::to_string(g.value(x).cols()) +
                         " channels, config says " + std::to_string(cfg.channels));
  const size_t gw = cfg.group_width();
  const double scale = cfg.attn_scale();

  auto q = g.matmul(x, g.param(*p.gamma));
  auto k = g.matmul(x, g.param(*p.rho));
  auto v = g.matmul(x, g.param(*p.phi));

  std::vector<Graph::Id> outs;
  for (size_t grp = 0; grp < cfg.groups; ++grp) {
    size_t c0 = grp * gw, c1 = c0 + gw;
    auto qg = g.slice_cols(q, c0, c1);
    auto kg = g.slice_cols(k, c0, c1);
    auto vg = g.slice_cols(v, c0, c1);
    if (grp < cfg.local_groups)
      outs.push_back(local_attention(g, qg, kg, vg, cfg.window, scale, cfg.mask_padding));
    else
      outs.push_back(global_attention(g, qg, kg, vg, scale));
  }
  auto mixed = g.matmul(g.concat_cols(outs), g.param(*p.w_o));

  // f_b = LayerNorm(f_a) + f_a, as printed (norm-then-residual)
  auto fb = g.add(g.layer_norm(mixed, g.param(*p.ln1_gain), g.param(*p.ln1_bias), 1e-6), mixed);
  // f' = LayerNorm(FFN(f_b) + f_b)
  auto h = g.relu(g.add_bias(g.matmul(fb, g.param(*p.ffn_w1)), g.param(*p.ffn_b1)));
  auto ffn = g.add_bias(g.matmul(h, g.param(*p.ffn_w2)), g.param(*p.ffn_b2));
  return g.layer_norm(g.add(ffn, fb), g.param(*p.ln2_gain), g.param(*p.ln2_bias), 1e-6);
}

Graph::Id lgte_stack(Graph& g, Graph::Id x, const std::vector<LgteLayerParams>& layers,
                     const LgteConfig& cfg) {
  if (layers.empty()) throw ConfigError("lgte_stack: needs at least one layer");
  Graph::Id cur = x;
  for (const auto& layer : layers) cur = lgte_forward(g, cur, layer, cfg);
  return cur;
}

}  // namespace tal
