#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "tal/errors.hpp"
#include "tal/gradcheck.hpp"
#include "tal/lgte.hpp"
#include "tal/rng.hpp"

using namespace tal;

namespace {

Tensor random_tensor(std::vector<size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

// Straight-line re-implementation of the encoder layer with plain loops,
// independent of the graph engine. Zero-padded (unmasked) windows.
struct PlainLgte {
  size_t T, C, N, A, w;
  double scale;
  std::vector<std::vector<double>> project(const std::vector<std::vector<double>>& x,
                                           const Tensor& m) const {
    std::vector<std::vector<double>> out(T, std::vector<double>(C, 0.0));
    for (size_t i = 0; i < T; ++i)
      for (size_t j = 0; j < C; ++j)
        for (size_t k = 0; k < C; ++k) out[i][j] += x[i][k] * m.at2(k, j);
    return out;
  }
  static std::vector<double> softmax_plain(const std::vector<double>& s, double scale) {
    double mx = s[0];
    for (double v : s) mx = std::max(mx, v);
    std::vector<double> e(s.size());
    double sum = 0;
    for (size_t i = 0; i < s.size(); ++i) {
      e[i] = std::exp((s[i] - mx) / scale);
      sum += e[i];
    }
    for (double& v : e) v /= sum;
    return e;
  }
  std::vector<std::vector<double>> forward(const std::vector<std::vector<double>>& x,
                                           const LgteLayerParams& p) const {
    auto q = project(x, p.gamma->value);
    auto k = project(x, p.rho->value);
    auto v = project(x, p.phi->value);
    size_t gw = C / N;
    long half = static_cast<long>(w / 2);
    std::vector<std::vector<double>> cat(T, std::vector<double>(C, 0.0));
    for (size_t grp = 0; grp < N; ++grp) {
      size_t c0 = grp * gw;
      for (size_t i = 0; i < T; ++i) {
        if (grp < A) {
          std::vector<double> s(w, 0.0);
          for (size_t j = 0; j < w; ++j) {
            long src = static_cast<long>(i) - half + static_cast<long>(j);
            if (src < 0 || src >= static_cast<long>(T)) continue;  // zero-pad: zero logit
            for (size_t t = 0; t < gw; ++t)
              s[j] += q[i][c0 + t] * k[static_cast<size_t>(src)][c0 + t];
          }
          auto wt = softmax_plain(s, scale);
          for (size_t j = 0; j < w; ++j) {
            long src = static_cast<long>(i) - half + static_cast<long>(j);
            if (src < 0 || src >= static_cast<long>(T)) continue;
            for (size_t t = 0; t < gw; ++t)
              cat[i][c0 + t] += wt[j] * v[static_cast<size_t>(src)][c0 + t];
          }
        } else {
          std::vector<double> s(T, 0.0);
          for (size_t j = 0; j < T; ++j)
            for (size_t t = 0; t < gw; ++t) s[j] += q[i][c0 + t] * k[j][c0 + t];
          auto wt = softmax_plain(s, scale);
          for (size_t j = 0; j < T; ++j)
            for (size_t t = 0; t < gw; ++t) cat[i][c0 + t] += wt[j] * v[j][c0 + t];
        }
      }
    }
    auto mixed = project(cat, p.w_o->value);
    auto lnorm = [&](const std::vector<std::vector<double>>& m, const Tensor& gain,
                     const Tensor& bias) {
      std::vector<std::vector<double>> out(T, std::vector<double>(C, 0.0));
      for (size_t i = 0; i < T; ++i) {
        double mean = 0, var = 0;
        for (size_t j = 0; j < C; ++j) mean += m[i][j];
        mean /= static_cast<double>(C);
        for (size_t j = 0; j < C; ++j) var += (m[i][j] - mean) * (m[i][j] - mean);
        var /= static_cast<double>(C);
        double inv = 1.0 / std::sqrt(var + 1e-6);
        for (size_t j = 0; j < C; ++j)
          out[i][j] = (m[i][j] - mean) * inv * gain.data[j] + bias.data[j];
      }
      return out;
    };
    auto fb = lnorm(mixed, p.ln1_gain->value, p.ln1_bias->value);
    for (size_t i = 0; i < T; ++i)
      for (size_t j = 0; j < C; ++j) fb[i][j] += mixed[i][j];
    size_t H = p.ffn_w1->value.cols();
    std::vector<std::vector<double>> hid(T, std::vector<double>(H, 0.0));
    for (size_t i = 0; i < T; ++i)
      for (size_t h = 0; h < H; ++h) {
        double acc = p.ffn_b1->value.data[h];
        for (size_t j = 0; j < C; ++j) acc += fb[i][j] * p.ffn_w1->value.at2(j, h);
        hid[i][h] = std::max(0.0, acc);
      }
    std::vector<std::vector<double>> ffn(T, std::vector<double>(C, 0.0));
    for (size_t i = 0; i < T; ++i)
      for (size_t j = 0; j < C; ++j) {
        double acc = p.ffn_b2->value.data[j];
        for (size_t h = 0; h < H; ++h) acc += hid[i][h] * p.ffn_w2->value.at2(h, j);
        ffn[i][j] = acc + fb[i][j];
      }
    return lnorm(ffn, p.ln2_gain->value, p.ln2_bias->value);
  }
};

}  // namespace

TEST_CASE("lte with window 1 applies only the value projection") {
  Rng rng(2);
  ParamStore ps;
  auto p = register_attn_projections(ps, "lte.", 4, rng);
  Tensor x = random_tensor({6, 4}, rng);
  Graph g;
  auto xid = g.leaf(x);
  auto y = lte_forward(g, xid, p, 1, 2.0);
  auto want = g.matmul(xid, g.param(*p.phi));
  CHECK(bit_equal(g.value(y), g.value(want)));
}

TEST_CASE("lte constant input, interior positions give phi(c)") {
  Rng rng(4);
  ParamStore ps;
  auto p = register_attn_projections(ps, "lte.", 3, rng);
  Tensor x({7, 3});
  for (size_t i = 0; i < 7; ++i)
    for (size_t j = 0; j < 3; ++j) x.at2(i, j) = 0.3 * static_cast<double>(j) - 0.2;
  Graph g;
  auto y = lte_forward(g, g.leaf(x), p, 3, std::sqrt(3.0));
  // phi(c) for the constant row
  Graph g2;
  auto pc = g2.matmul(g2.leaf(Tensor::row_major(1, 3, {-0.2, 0.1, 0.4})), g2.param(*p.phi));
  for (size_t i = 1; i + 1 < 7; ++i)  // interior: full window in range
    for (size_t j = 0; j < 3; ++j)
      CHECK(g.value(y).at2(i, j) == doctest::Approx(g2.value(pc).data[j]).epsilon(1e-12));
}

TEST_CASE("lte locality: out-of-window perturbations leave outputs bit-identical") {
  Rng rng(8);
  ParamStore ps;
  auto p = register_attn_projections(ps, "lte.", 5, rng);
  const size_t T = 12, w = 5;
  const long half = w / 2;
  Tensor x = random_tensor({T, 5}, rng);
  Graph g;
  auto base = lte_forward(g, g.leaf(x), p, w, std::sqrt(5.0));
  for (int trial = 0; trial < 100; ++trial) {
    size_t i = static_cast<size_t>(rng.uniform_int(0, T - 1));
    size_t j = static_cast<size_t>(rng.uniform_int(0, T - 1));
    if (std::llabs(static_cast<long>(j) - static_cast<long>(i)) <= half) continue;
    Tensor pert = x;
    for (size_t t = 0; t < 5; ++t) pert.at2(j, t) += rng.uniform(-3.0, 3.0);
    Graph g2;
    auto out = lte_forward(g2, g2.leaf(pert), p, w, std::sqrt(5.0));
    for (size_t t = 0; t < 5; ++t) {
      double a = g.value(base).at2(i, t);
      double b = g2.value(out).at2(i, t);
      CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
    }
  }
}

TEST_CASE("gte trivial cases") {
  Rng rng(16);
  ParamStore ps;
  auto p = register_attn_projections(ps, "gte.", 4, rng);
  // T = 1: output is phi(f1)
  Tensor x1 = random_tensor({1, 4}, rng);
  Graph g;
  auto xid = g.leaf(x1);
  auto y = gte_forward(g, xid, p, 2.0);
  auto want = g.matmul(xid, g.param(*p.phi));
  for (size_t j = 0; j < 4; ++j)
    CHECK(g.value(y).data[j] == doctest::Approx(g.value(want).data[j]).epsilon(1e-12));

  // constant input: uniform weights, output = phi(c) at every position
  Tensor xc({5, 4});
  for (size_t i = 0; i < 5; ++i)
    for (size_t j = 0; j < 4; ++j) xc.at2(i, j) = 0.1 * static_cast<double>(j + 1);
  Graph g2;
  auto y2 = gte_forward(g2, g2.leaf(xc), p, 2.0);
  Graph g3;
  auto pc = g3.matmul(g3.leaf(Tensor::row_major(1, 4, {0.1, 0.2, 0.3, 0.4})), g3.param(*p.phi));
  for (size_t i = 0; i < 5; ++i)
    for (size_t j = 0; j < 4; ++j)
      CHECK(g2.value(y2).at2(i, j) == doctest::Approx(g3.value(pc).data[j]).epsilon(1e-12));
}

TEST_CASE("gte equals full-width masked lte") {
  Rng rng(32);
  for (size_t T : {2, 3, 5, 8}) {
    ParamStore ps;
    auto p = register_attn_projections(ps, "x.", 4, rng);
    Tensor x = random_tensor({T, 4}, rng);
    Graph g;
    auto a = gte_forward(g, g.leaf(x), p, std::sqrt(4.0));
    auto b = lte_forward(g, g.leaf(x), p, 2 * T - 1, std::sqrt(4.0), /*masked=*/true);
    CHECK(bit_equal(g.value(a), g.value(b)));
  }
}

TEST_CASE("gte is exactly permutation-equivariant") {
  Rng rng(64);
  for (int trial = 0; trial < 20; ++trial) {
    const size_t T = 3 + static_cast<size_t>(rng.uniform_int(0, 6));
    ParamStore ps;
    auto p = register_attn_projections(ps, "x.", 6, rng);
    Tensor x = random_tensor({T, 6}, rng);
    std::vector<size_t> perm(T);
    for (size_t i = 0; i < T; ++i) perm[i] = i;
    rng.shuffle(perm);
    Tensor xp({T, 6});
    for (size_t i = 0; i < T; ++i)
      for (size_t j = 0; j < 6; ++j) xp.at2(perm[i], j) = x.at2(i, j);
    Graph g;
    auto y = gte_forward(g, g.leaf(x), p, std::sqrt(6.0));
    Graph g2;
    auto yp = gte_forward(g2, g2.leaf(xp), p, std::sqrt(6.0));
    for (size_t i = 0; i < T; ++i)
      for (size_t j = 0; j < 6; ++j) {
        double a = g.value(y).at2(i, j);
        double b = g2.value(yp).at2(perm[i], j);
        CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
      }
  }
}

TEST_CASE("pure-gte lgte is sensitive to every position") {
  Rng rng(77);
  LgteConfig cfg;
  cfg.channels = 8;
  cfg.groups = 2;
  cfg.local_groups = 0;  // pure GTE
  cfg.window = 3;
  cfg.ffn_hidden = 12;
  cfg.layers = 1;
  ParamStore ps;
  auto layer = register_lgte_layer(ps, "lgte.layer0.", cfg, rng);
  const size_t T = 6;
  Tensor x = random_tensor({T, 8}, rng);
  Graph g;
  auto base = lgte_forward(g, g.leaf(x), layer, cfg);
  int changed = 0, trials = 0;
  for (int trial = 0; trial < 100; ++trial) {
    size_t i = static_cast<size_t>(rng.uniform_int(0, T - 1));
    size_t j = static_cast<size_t>(rng.uniform_int(0, T - 1));
    if (i == j) continue;
    ++trials;
    Tensor pert = x;
    for (size_t t = 0; t < 8; ++t) pert.at2(j, t) += rng.uniform(0.5, 1.5);
    Graph g2;
    auto out = lgte_forward(g2, g2.leaf(pert), layer, cfg);
    bool row_changed = false;
    for (size_t t = 0; t < 8; ++t)
      if (g.value(base).at2(i, t) != g2.value(out).at2(i, t)) row_changed = true;
    if (row_changed) ++changed;
  }
  CHECK(trials > 0);
  CHECK(changed == trials);  // observed frequency 1
}

TEST_CASE("lgte output shape and transliteration oracle") {
  Rng rng(123);
  LgteConfig cfg;
  cfg.channels = 4;
  cfg.groups = 2;
  cfg.local_groups = 1;
  cfg.window = 3;
  cfg.ffn_hidden = 6;
  cfg.layers = 1;
  ParamStore ps;
  auto layer = register_lgte_layer(ps, "lgte.layer0.", cfg, rng);
  Tensor x = random_tensor({4, 4}, rng);
  Graph g;
  auto y = lgte_forward(g, g.leaf(x), layer, cfg);
  CHECK(g.value(y).shape == std::vector<size_t>{4, 4});

  PlainLgte oracle{4, 4, 2, 1, 3, cfg.attn_scale()};
  std::vector<std::vector<double>> xin(4, std::vector<double>(4));
  for (size_t i = 0; i < 4; ++i)
    for (size_t j = 0; j < 4; ++j) xin[i][j] = x.at2(i, j);
  auto want = oracle.forward(xin, layer);
  for (size_t i = 0; i < 4; ++i)
    for (size_t j = 0; j < 4; ++j)
      CHECK(g.value(y).at2(i, j) == doctest::Approx(want[i][j]).epsilon(1e-9));
}

TEST_CASE("degenerate grouping reduces to the pure LTE path") {
  Rng rng(321);
  LgteConfig cfg;
  cfg.channels = 4;
  cfg.groups = 1;
  cfg.local_groups = 1;
  cfg.window = 3;
  cfg.ffn_hidden = 8;
  cfg.layers = 1;
  ParamStore ps;
  auto layer = register_lgte_layer(ps, "lgte.layer0.", cfg, rng);
  Tensor x = random_tensor({5, 4}, rng);
  Graph g;
  auto y = lgte_forward(g, g.leaf(x), layer, cfg);
  PlainLgte oracle{5, 4, 1, 1, 3, cfg.attn_scale()};
  std::vector<std::vector<double>> xin(5, std::vector<double>(4));
  for (size_t i = 0; i < 5; ++i)
    for (size_t j = 0; j < 4; ++j) xin[i][j] = x.at2(i, j);
  auto want = oracle.forward(xin, layer);
  for (size_t i = 0; i < 5; ++i)
    for (size_t j = 0; j < 4; ++j)
      CHECK(g.value(y).at2(i, j) == doctest::Approx(want[i][j]).epsilon(1e-9));
}

TEST_CASE("lgte config validation") {
  LgteConfig cfg;
  cfg.channels = 6;
  cfg.groups = 4;  // 6 % 4 != 0
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.groups = 3;
  cfg.local_groups = 5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.local_groups = 1;
  cfg.window = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("lgte stack: single layer equals lgte_forward, shapes preserved, gradients pass") {
  Rng rng(55);
  LgteConfig cfg;
  cfg.channels = 4;
  cfg.groups = 2;
  cfg.local_groups = 1;
  cfg.window = 3;
  cfg.ffn_hidden = 6;
  cfg.layers = 2;
  ParamStore ps;
  auto layers = register_lgte_stack(ps, cfg, rng);
  Tensor x = random_tensor({5, 4}, rng);

  Graph g;
  auto one = lgte_stack(g, g.leaf(x), {layers[0]}, cfg);
  auto direct = lgte_forward(g, g.leaf(x), layers[0], cfg);
  CHECK(bit_equal(g.value(one), g.value(direct)));

  LgteConfig cfg3 = cfg;
  cfg3.layers = 3;
  ParamStore ps3;
  Rng rng3(56);
  auto layers3 = register_lgte_stack(ps3, cfg3, rng3);
  Graph g3;
  auto y3 = lgte_stack(g3, g3.leaf(x), layers3, cfg3);
  CHECK(g3.value(y3).shape == std::vector<size_t>{5, 4});

  // finite-difference check through two stacked layers
  auto f = [&cfg, &layers](ParamStore& p) {
    (void)p;
    Graph gg;
    Rng local(9);
    Tensor xin = random_tensor({5, 4}, local);
    auto out = lgte_stack(gg, gg.leaf(xin), layers, cfg);
    auto loss = gg.sum(gg.mul(out, out));
    gg.backward(loss);
    return gg.value(loss).item();
  };
  auto res = check_gradients(f, ps, 1e-4, 1e-3);
  INFO(res.summary());
  CHECK(res.pass());
}
