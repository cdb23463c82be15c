#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tal/errors.hpp"
#include "tal/eval.hpp"
#include "tal/gradcheck.hpp"
#include "tal/rng.hpp"
#include "tal/tbr.hpp"

using namespace tal;

namespace {

Tensor random_tensor(std::vector<size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// straight-line oracle for the fused decode (independent arithmetic)
void decode_oracle(double sp, double ep, double ds, double de, double dx, double dw, double tau,
                   double& s_out, double& e_out) {
  double wp = ep - sp;
  double s1 = sp - ds * wp;
  double e1 = ep - de * wp;
  double x2 = (sp + ep) / 2.0 - dx * wp;
  double w2 = wp * std::exp(dw);
  s_out = tau * s1 + (1.0 - tau) * (x2 - w2 / 2.0);
  e_out = tau * e1 + (1.0 - tau) * (x2 + w2 / 2.0);
}

void zero_all(ParamStore& ps) {
  for (auto& [name, p] : ps) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
}

}  // namespace

TEST_CASE("sample_contexts extents and fixed lengths") {
  // feature value == snippet coordinate (row t holds t + 0.5), so resampled
  // rows read back their sample positions exactly
  const size_t T = 32;
  Tensor feats({T, 2});
  for (size_t t = 0; t < T; ++t)
    for (size_t c = 0; c < 2; ++c) feats.at2(t, c) = static_cast<double>(t) + 0.5;
  Graph g;
  Proposal p{"v", 4.0, 12.0, 1.0, -1, true};
  auto ctx = sample_contexts(g, g.leaf(feats), p);
  const Tensor& fs = g.value(ctx.f_start);
  const Tensor& fc = g.value(ctx.f_center);
  const Tensor& fe = g.value(ctx.f_end);
  CHECK(fs.shape == std::vector<size_t>{8, 2});
  CHECK(fc.shape == std::vector<size_t>{16, 2});
  CHECK(fe.shape == std::vector<size_t>{8, 2});
  // F_s covers [2, 6]: midpoints 2.25, 2.75, ..., 5.75
  for (size_t i = 0; i < 8; ++i)
    CHECK(fs.at2(i, 0) == doctest::Approx(2.25 + 0.5 * static_cast<double>(i)).epsilon(1e-12));
  // F_c covers [4, 12]: midpoints 4.25 .. 11.75
  for (size_t i = 0; i < 16; ++i)
    CHECK(fc.at2(i, 0) == doctest::Approx(4.25 + 0.5 * static_cast<double>(i)).epsilon(1e-12));
  // F_e covers [10, 14]
  for (size_t i = 0; i < 8; ++i)
    CHECK(fe.at2(i, 0) == doctest::Approx(10.25 + 0.5 * static_cast<double>(i)).epsilon(1e-12));

  // constant features -> constant contexts
  Graph g2;
  auto ctx2 = sample_contexts(g2, g2.leaf(Tensor({T, 3}, 2.5)), p);
  for (double v : g2.value(ctx2.f_center).data) CHECK(v == doctest::Approx(2.5));

  Proposal degenerate{"v", 5.0, 5.0, 1.0, -1, true};
  Graph g3;
  auto feats3 = g3.leaf(feats);
  CHECK_THROWS_AS(sample_contexts(g3, feats3, degenerate), DegenerateInputError);
}

TEST_CASE("zero-parameter regressors emit identity offsets and 0.5 confidence") {
  TbrConfig cfg;
  cfg.hidden = 8;
  Rng rng0(1);
  ParamStore ps;
  TbrStageParams sp = register_tbr_stage(ps, "tbr.stage0.", 4, cfg, rng0);
  zero_all(ps);
  Rng rng(3);
  Tensor feats = random_tensor({20, 4}, rng);
  Graph g;
  Proposal p{"v", 5.0, 11.0, 1.0, -1, true};
  auto ctx = sample_contexts(g, g.leaf(feats), p);
  auto [ds, de] = frame_level_regress(g, ctx, sp);
  CHECK(g.value(ds).item() == 0.0);
  CHECK(g.value(de).item() == 0.0);
  auto seg = segment_level_regress(g, ctx, sp);
  CHECK(g.value(seg.dx).item() == 0.0);
  CHECK(g.value(seg.dw).item() == 0.0);
  CHECK(g.value(seg.conf).item() == doctest::Approx(0.5));
  // concatenated context has 32 rows
  auto fa = g.concat_rows({ctx.f_start, ctx.f_center, ctx.f_end});
  CHECK(g.value(fa).rows() == 32);
}

TEST_CASE("decode_and_fuse worked example and properties") {
  Proposal p{"v", 10.0, 20.0, 0.7, -1, true};
  // offsets: ds=0.1, de=-0.1, dx=0, dw=ln2, tau=0.5 -> routes (9,21), (5,25), fused (7,23)
  Proposal out = decode_and_fuse(p, 0.1, -0.1, 0.0, std::log(2.0), 0.5, 100.0);
  CHECK(std::fabs(out.s - 7.0) <= 1e-12);
  CHECK(std::fabs(out.e - 23.0) <= 1e-12);

  // identity offsets reproduce the input exactly, any tau
  for (double tau : {0.0, 0.3, 0.5, 1.0}) {
    Proposal id = decode_and_fuse(p, 0, 0, 0, 0, tau, 100.0);
    CHECK(id.s == doctest::Approx(10.0).epsilon(1e-15));
    CHECK(id.e == doctest::Approx(20.0).epsilon(1e-15));
  }

  // tau endpoints select the individual routes
  Proposal t1 = decode_and_fuse(p, 0.1, -0.1, 0.0, std::log(2.0), 1.0, 100.0);
  CHECK(t1.s == doctest::Approx(9.0));
  CHECK(t1.e == doctest::Approx(21.0));
  Proposal t0 = decode_and_fuse(p, 0.1, -0.1, 0.0, std::log(2.0), 0.0, 100.0);
  CHECK(t0.s == doctest::Approx(5.0));
  CHECK(t0.e == doctest::Approx(25.0));

  // both boundaries clamp to 0: degenerate, flagged invalid with score 0
  Proposal bad = decode_and_fuse(p, 3.0, 3.0, 0.0, 0.0, 1.0, 100.0);
  CHECK_FALSE(bad.valid);
  CHECK(bad.score == 0.0);
  CHECK(bad.s <= bad.e);
}

TEST_CASE("decode matches straight-line oracle on random inputs") {
  Rng rng(17);
  const double video_len = 200.0;
  for (int i = 0; i < 200; ++i) {
    double sp = rng.uniform(0, 50);
    double ep = sp + rng.uniform(0.5, 30);
    double ds = rng.uniform(-0.4, 0.4), de = rng.uniform(-0.4, 0.4);
    double dx = rng.uniform(-0.4, 0.4), dw = rng.uniform(-0.7, 0.7);
    double tau = rng.uniform(0, 1);
    Proposal p{"v", sp, ep, 1.0, -1, true};
    Proposal got = decode_and_fuse(p, ds, de, dx, dw, tau, video_len);
    double ws, we;
    decode_oracle(sp, ep, ds, de, dx, dw, tau, ws, we);

    // convex combination bounds hold pre-clamp
    double s1 = sp - ds * (ep - sp), e1 = ep - de * (ep - sp);
    double x2 = (sp + ep) / 2 - dx * (ep - sp), w2 = (ep - sp) * std::exp(dw);
    CHECK(ws >= std::min(s1, x2 - w2 / 2) - 1e-12);
    CHECK(ws <= std::max(s1, x2 - w2 / 2) + 1e-12);
    CHECK(we >= std::min(e1, x2 + w2 / 2) - 1e-12);
    CHECK(we <= std::max(e1, x2 + w2 / 2) + 1e-12);

    // oracle applies the same clamp-and-reorder rule
    ws = std::clamp(ws, 0.0, video_len);
    we = std::clamp(we, 0.0, video_len);
    if (ws >= we) std::swap(ws, we);
    CHECK(std::fabs(got.s - ws) <= 1e-12);
    CHECK(std::fabs(got.e - we) <= 1e-12);

    // scale equivariance away from clamping: lambda-scaled inputs scale outputs
    if (ws > 0.0 && we < video_len && got.valid) {
      double lam = 3.5;
      Proposal ps2{"v", lam * sp, lam * ep, 1.0, -1, true};
      Proposal scaled = decode_and_fuse(ps2, ds, de, dx, dw, tau, lam * video_len);
      CHECK(scaled.s == doctest::Approx(lam * got.s).epsilon(1e-12));
      CHECK(scaled.e == doctest::Approx(lam * got.e).epsilon(1e-12));
    }
  }
}

TEST_CASE("tape decode equals plain decode") {
  Rng rng(23);
  Proposal p{"v", 8.0, 19.0, 1.0, -1, true};
  Graph g;
  auto ds = g.leaf(Tensor::scalar(0.12));
  auto de = g.leaf(Tensor::scalar(-0.05));
  auto dx = g.leaf(Tensor::scalar(0.07));
  auto dw = g.leaf(Tensor::scalar(0.25));
  auto d = decode_and_fuse_tape(g, p, ds, de, dx, dw, 0.5);
  Proposal plain = decode_and_fuse(p, 0.12, -0.05, 0.07, 0.25, 0.5, 1e9);
  CHECK(g.value(d.s).item() == doctest::Approx(plain.s).epsilon(1e-15));
  CHECK(g.value(d.e).item() == doctest::Approx(plain.e).epsilon(1e-15));
}

TEST_CASE("fixed-seed stage forward equals transliteration of the conv stacks") {
  // independent plain-loop implementation of conv(k3,p1)+bias, relu, conv, GAP
  TbrConfig cfg;
  cfg.hidden = 6;
  Rng rng(91);
  ParamStore ps;
  auto sp = register_tbr_stage(ps, "tbr.stage0.", 3, cfg, rng);
  Tensor feats = random_tensor({24, 3}, rng);
  Proposal p{"v", 6.0, 14.0, 1.0, -1, true};
  Graph g;
  auto ctx = sample_contexts(g, g.leaf(feats), p);
  auto [ds, de] = frame_level_regress(g, ctx, sp);

  auto plain_conv = [](const Tensor& x, const Tensor& k, const Tensor& b) {
    size_t T = x.rows(), cin = x.cols(), cout = k.shape[2];
    Tensor out({T, cout});
    for (size_t t = 0; t < T; ++t)
      for (size_t co = 0; co < cout; ++co) {
        double acc = b.data[co];
        for (size_t j = 0; j < 3; ++j) {
          long src = static_cast<long>(t) + static_cast<long>(j) - 1;
          if (src < 0 || src >= static_cast<long>(T)) continue;
          for (size_t ci = 0; ci < cin; ++ci)
            acc += x.at2(static_cast<size_t>(src), ci) * k.data[(j * cin + ci) * cout + co];
        }
        out.at2(t, co) = acc;
      }
    return out;
  };
  auto pool_scalar = [](const Tensor& x) {
    double acc = 0;
    for (double v : x.data) acc += v;
    return acc / static_cast<double>(x.rows());
  };
  Tensor fs = g.value(ctx.f_start);
  Tensor h = plain_conv(fs, sp.frame_k1->value, sp.frame_b1->value);
  for (double& v : h.data) v = std::max(0.0, v);
  Tensor o = plain_conv(h, sp.frame_k2->value, sp.frame_b2->value);
  CHECK(g.value(ds).item() == doctest::Approx(pool_scalar(o)).epsilon(1e-12));
  CHECK(g.value(de).item() != doctest::Approx(g.value(ds).item()));  // different contexts
}

TEST_CASE("tbr gradient check") {
  TbrConfig cfg;
  cfg.hidden = 4;
  Rng rng(7);
  ParamStore ps;
  auto sp = register_tbr_stage(ps, "tbr.stage0.", 3, cfg, rng);
  Tensor feats = random_tensor({18, 3}, rng);
  Proposal p{"v", 4.0, 12.0, 1.0, -1, true};
  GtInstance gt{"v", 0, 5.0, 11.0};
  // realized-tIoU confidence target is a stop-gradient; freeze it so the
  // finite-difference oracle sees the same differentiable function
  double frozen_target;
  {
    Graph g;
    auto fwd = tbr_stage_forward(g, g.leaf(feats), p, sp, cfg, 18.0);
    frozen_target = tiou(fwd.refined.s, fwd.refined.e, gt.s, gt.e);
  }
  auto f = [&](ParamStore& store) {
    (void)store;
    Graph g;
    auto fid = g.leaf(feats);
    auto fwd = tbr_stage_forward(g, fid, p, sp, cfg, 18.0);
    auto loss = tbr_loss(g, fwd, p, gt, 18.0, frozen_target);
    g.backward(loss);
    return g.value(loss).item();
  };
  auto res = check_gradients(f, ps, 1e-4, 1e-3);
  INFO(res.summary());
  CHECK(res.pass());
}

TEST_CASE("tbr_loss closed forms") {
  // refined == gt with p_conf == 1 -> loss 0; offsets all zero so both routes hit gt
  TbrConfig cfg;
  cfg.hidden = 4;
  Graph g;
  Proposal p{"v", 5.0, 11.0, 1.0, -1, true};
  TbrStageForward fwd;
  auto zero = g.leaf(Tensor::scalar(0.0));
  fwd.decoded = decode_and_fuse_tape(g, p, zero, zero, zero, zero, cfg.tau);
  fwd.conf = g.leaf(Tensor::scalar(1.0));
  fwd.refined = p;
  GtInstance gt{"v", 0, 5.0, 11.0};
  auto loss = tbr_loss(g, fwd, p, gt, 100.0);
  CHECK(g.value(loss).item() == doctest::Approx(0.0));

  // p_conf equal to realized tIoU: confidence term vanishes
  Graph g2;
  TbrStageForward fwd2;
  auto zero2 = g2.leaf(Tensor::scalar(0.0));
  fwd2.decoded = decode_and_fuse_tape(g2, p, zero2, zero2, zero2, zero2, cfg.tau);
  GtInstance gt2{"v", 0, 6.0, 11.0};
  double realized = tiou(5, 11, 6, 11);
  fwd2.conf = g2.leaf(Tensor::scalar(realized));
  fwd2.refined = p;
  auto loss2 = tbr_loss(g2, fwd2, p, gt2, 100.0);
  // only the smooth-l1 route terms remain
  double expect = 0.0;
  auto sl1 = [](double d) { return std::fabs(d) < 1 ? 0.5 * d * d : std::fabs(d) - 0.5; };
  expect += 2 * sl1((5.0 - 6.0) / 6.0);  // both routes start at 5 vs gt 6
  CHECK(g2.value(loss2).item() == doctest::Approx(expect).epsilon(1e-9));

  // unmatched: only p_conf with target 0
  Graph g3;
  TbrStageForward fwd3;
  auto zero3 = g3.leaf(Tensor::scalar(0.0));
  fwd3.decoded = decode_and_fuse_tape(g3, p, zero3, zero3, zero3, zero3, cfg.tau);
  fwd3.conf = g3.leaf(Tensor::scalar(0.3));
  fwd3.refined = p;
  auto loss3 = tbr_loss(g3, fwd3, p, std::nullopt, 100.0);
  CHECK(g3.value(loss3).item() == doctest::Approx(0.09).epsilon(1e-12));
}

TEST_CASE("zero-parameter refinement is a fixed point for boundaries") {
  TbrConfig cfg;
  cfg.hidden = 8;
  cfg.stages = 3;
  Rng rng(5);
  ParamStore ps;
  std::vector<TbrStageParams> stages;
  for (size_t i = 0; i < cfg.stages; ++i)
    stages.push_back(register_tbr_stage(ps, "tbr.stage" + std::to_string(i) + ".", 4, cfg, rng));
  zero_all(ps);
  Tensor feats = random_tensor({30, 4}, rng);
  std::vector<Proposal> props = {{"v", 3.0, 9.0, 0.8, -1, true}, {"v", 12.0, 25.0, 0.6, -1, true}};
  auto out = tbr_refine(feats, props, stages, cfg);
  REQUIRE(out.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(out[i].s == props[i].s);
    CHECK(out[i].e == props[i].e);
    // score: input x sigmoid(0) of the last stage
    CHECK(out[i].score == doctest::Approx(props[i].score * 0.5).epsilon(1e-12));
  }
}

TEST_CASE("training smoke: loss decreases on a fixed synthetic batch") {
  TbrConfig cfg;
  cfg.hidden = 8;
  cfg.stages = 1;
  Rng rng(31);
  ParamStore ps;
  auto sp = register_tbr_stage(ps, "tbr.stage0.", 4, cfg, rng);
  const size_t T = 40;
  // boxcar signal on channel 0 between 12 and 28
  Tensor feats({T, 4});
  for (size_t t = 0; t < T; ++t) {
    feats.at2(t, 0) = (t >= 12 && t < 28) ? 1.0 : 0.0;
    for (size_t c = 1; c < 4; ++c) feats.at2(t, c) = rng.normal(0.0, 0.1);
  }
  GtInstance gt{"v", 0, 12.0, 28.0};
  std::vector<Proposal> batch = {{"v", 10.0, 26.0, 1, -1, true},
                                 {"v", 14.0, 30.0, 1, -1, true},
                                 {"v", 13.0, 25.0, 1, -1, true}};
  double first = 0, last = 0;
  for (int it = 0; it < 60; ++it) {
    ps.zero_grads();
    Graph g;
    auto fid = g.leaf(feats);
    Graph::Id total = g.constant(0.0);
    for (const auto& p : batch) {
      auto fwd = tbr_stage_forward(g, fid, p, sp, cfg, static_cast<double>(T));
      total = g.add(total, tbr_loss(g, fwd, p, gt, static_cast<double>(T)));
    }
    g.backward(total);
    ps.clip_grads(5.0);
    ps.sgd_step(0.05);
    double v = g.value(total).item();
    if (it == 0) first = v;
    last = v;
  }
  CHECK(last < first);
}
