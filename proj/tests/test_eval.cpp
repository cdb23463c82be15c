#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/reference_eval.hpp"
#include "tal/errors.hpp"
#include "tal/eval.hpp"
#include "tal/rng.hpp"

using namespace tal;

TEST_CASE("tiou basics") {
  CHECK(tiou(3, 9, 3, 9) == doctest::Approx(1.0));
  CHECK(tiou(0, 1, 5, 6) == 0.0);
  CHECK(tiou(0, 10, 5, 15) == doctest::Approx(5.0 / 15.0).epsilon(1e-12));
  // symmetry and bounds
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    double a = rng.uniform(0, 50), b = a + rng.uniform(0.1, 20);
    double c = rng.uniform(0, 50), d = c + rng.uniform(0.1, 20);
    double v1 = tiou(a, b, c, d), v2 = tiou(c, d, a, b);
    CHECK(v1 == v2);
    CHECK(v1 >= 0.0);
    CHECK(v1 <= 1.0);
    CHECK((v1 == 1.0) == (a == c && b == d));
  }
}

TEST_CASE("average_map hand-traced fixtures") {
  // perfect detections: one exact segment per gt
  std::vector<GtInstance> gts = {{"v1", 0, 2, 8}, {"v1", 1, 10, 14}, {"v2", 0, 1, 5}};
  std::vector<Detection> perfect;
  for (const auto& g : gts) perfect.push_back({g.video_id, g.class_id, g.s, g.e, 0.9});
  auto res = average_map(perfect, gts);
  for (double m : res.map_per_threshold) CHECK(m == doctest::Approx(1.0));
  CHECK(res.average_map == doctest::Approx(1.0));

  // empty detections -> 0
  auto res0 = average_map({}, gts);
  CHECK(res0.average_map == 0.0);

  // 1 gt (0,10); TP at 0.9 then disjoint FP at 0.8; threshold 0.5 -> AP 1.0
  std::vector<GtInstance> g1 = {{"v1", 0, 0, 10}};
  std::vector<Detection> d1 = {{"v1", 0, 0, 10, 0.9}, {"v1", 0, 20, 30, 0.8}};
  auto res1 = average_map(d1, g1, {0.5});
  CHECK(res1.average_map == doctest::Approx(1.0));
}

TEST_CASE("average_map skips classes without ground truth") {
  std::vector<GtInstance> gts = {{"v1", 0, 0, 10}};
  std::vector<Detection> dets = {{"v1", 0, 0, 10, 0.9}, {"v1", 7, 0, 10, 0.9}};  // class 7 has no gt
  auto res = average_map(dets, gts, {0.5});
  CHECK(res.average_map == doctest::Approx(1.0));
  CHECK(res.class_average_ap.count(7) == 0);
}

TEST_CASE("average_map equals brute-force reference on randomized instances") {
  Rng rng(99);
  auto grid = default_tiou_grid();
  for (int inst = 0; inst < 50; ++inst) {
    int n_videos = 1 + static_cast<int>(rng.uniform_int(0, 4));
    int n_classes = 1 + static_cast<int>(rng.uniform_int(0, 3));
    std::vector<GtInstance> gts;
    std::vector<Detection> dets;
    for (int v = 0; v < n_videos; ++v) {
      std::string vid = "v" + std::to_string(v);
      int n_gt = 1 + static_cast<int>(rng.uniform_int(0, 2));
      for (int i = 0; i < n_gt; ++i) {
        double s = rng.uniform(0, 40);
        gts.push_back({vid, static_cast<int>(rng.uniform_int(0, n_classes - 1)), s,
                       s + rng.uniform(1, 12)});
      }
      int n_det = static_cast<int>(rng.uniform_int(0, 10));
      for (int i = 0; i < n_det; ++i) {
        double s = rng.uniform(0, 45);
        dets.push_back({vid, static_cast<int>(rng.uniform_int(0, n_classes - 1)), s,
                        s + rng.uniform(0.5, 14), rng.uniform(0.01, 1.0)});
      }
    }
    auto mine = average_map(dets, gts, grid);
    double ref = refeval::reference_average_map(dets, gts, grid);
    CHECK(std::fabs(mine.average_map - ref) <= 1e-9);
  }
}

TEST_CASE("nms basics and invariants") {
  std::vector<Detection> two = {{"v", 0, 5, 10, 0.9}, {"v", 0, 5, 10, 0.8}};
  CHECK(nms(two, 0.5).size() == 1);

  std::vector<Detection> disjoint = {{"v", 0, 0, 5, 0.9}, {"v", 0, 10, 15, 0.8},
                                     {"v", 0, 20, 25, 0.7}};
  CHECK(nms(disjoint, 0.5).size() == 3);

  // three nested segments, all pairwise above threshold: only the best survives
  std::vector<Detection> nested = {{"v", 0, 0, 100, 0.9}, {"v", 0, 5, 95, 0.8},
                                   {"v", 0, 10, 90, 0.7}};
  auto kept = nms(nested, 0.5);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);

  // survivors are a subset; no same-class pair above threshold
  Rng rng(7);
  std::vector<Detection> pool;
  for (int i = 0; i < 60; ++i) {
    double s = rng.uniform(0, 60);
    pool.push_back({"v" + std::to_string(rng.uniform_int(0, 1)),
                    static_cast<int>(rng.uniform_int(0, 2)), s, s + rng.uniform(1, 15),
                    rng.uniform(0, 1)});
  }
  auto out = nms(pool, 0.4);
  CHECK(out.size() <= pool.size());
  for (size_t i = 0; i < out.size(); ++i)
    for (size_t j = i + 1; j < out.size(); ++j) {
      if (out[i].video_id != out[j].video_id || out[i].class_id != out[j].class_id) continue;
      CHECK(tiou(out[i].s, out[i].e, out[j].s, out[j].e) <= 0.4);
    }
}

TEST_CASE("ensemble_fuse weighting") {
  std::vector<Detection> a = {{"v", 0, 0, 10, 0.6}};
  std::vector<Detection> b = {{"v", 0, 20, 30, 0.9}};
  // weights 2/3 and 1/3
  auto fused = ensemble_fuse({a, b}, {2.0, 1.0}, 0.5);
  REQUIRE(fused.size() == 2);
  double w1 = 2.0 / 3.0, w2 = 1.0 / 3.0;
  CHECK(w1 + w2 == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& d : fused) {
    if (d.s == 0.0) CHECK(d.score == doctest::Approx(0.6 * w1).epsilon(1e-12));
    else CHECK(d.score == doctest::Approx(0.9 * w2).epsilon(1e-12));
  }

  // single set: unchanged up to nms; equal scores reduce to uniform pooling
  auto single = ensemble_fuse({a}, {3.0}, 0.5);
  REQUIRE(single.size() == 1);
  CHECK(single[0].score == doctest::Approx(0.6).epsilon(1e-12));

  CHECK_THROWS_AS(ensemble_fuse({a, b}, {1.0}, 0.5), DimensionError);
  CHECK_THROWS_AS(ensemble_fuse({a}, {0.0}, 0.5), ConfigError);
}

TEST_CASE("average recall helper") {
  std::vector<GtInstance> gts = {{"v", 0, 10, 20}, {"v", 1, 30, 40}};
  std::vector<Proposal> props;
  props.push_back({"v", 10, 20, 0.9, -1, true});
  props.push_back({"v", 31, 41, 0.8, -1, true});
  double ar = average_recall_at(props, gts, {0.5}, 100);
  CHECK(ar == doctest::Approx(1.0));
}
