#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "tal/config.hpp"
#include "tal/data.hpp"
#include "tal/errors.hpp"
#include "tal/rng.hpp"
#include "tal/synth.hpp"

using namespace tal;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("feature file round-trip is bit-exact") {
  auto dir = temp_dir("tal_data_feat");
  FeatureSequence fsq;
  fsq.t = 7;
  fsq.c = 3;
  fsq.frame_rate = 30.0;
  fsq.stride = 8;
  Rng rng(5);
  fsq.data.resize(21);
  for (double& v : fsq.data) v = rng.normal();
  fsq.data[0] = -0.0;
  fsq.data[1] = 1e-300;
  save_features(dir / "a.feat", fsq);
  auto back = load_features(dir / "a.feat");
  CHECK(back.t == 7);
  CHECK(back.c == 3);
  CHECK(back.frame_rate == 30.0);
  CHECK(back.stride == 8);
  CHECK(std::memcmp(back.data.data(), fsq.data.data(), fsq.data.size() * sizeof(double)) == 0);
  fs::remove_all(dir);
}

TEST_CASE("malformed feature files are rejected before computation") {
  auto dir = temp_dir("tal_data_bad");
  {
    std::ofstream os(dir / "bad_magic.feat", std::ios::binary);
    os << "NOPE!" << std::string(64, '\0');
  }
  CHECK_THROWS_AS(load_features(dir / "bad_magic.feat"), IoError);

  FeatureSequence fsq;
  fsq.t = 4;
  fsq.c = 2;
  fsq.data.assign(8, 1.0);
  save_features(dir / "trunc.feat", fsq);
  fs::resize_file(dir / "trunc.feat", fs::file_size(dir / "trunc.feat") - 12);
  CHECK_THROWS_AS(load_features(dir / "trunc.feat"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("annotation round-trip and validation") {
  auto dir = temp_dir("tal_data_ann");
  DatasetAnnotations ds;
  ds.classes = {"c00", "c01"};
  VideoAnnotation v;
  v.id = "v0";
  v.duration = 40;
  v.labels = {1};
  v.segments.push_back({"v0", 1, 5, 15});
  ds.videos.push_back(v);
  save_annotations(dir / "a.json", ds, false);
  auto back = load_annotations(dir / "a.json");
  REQUIRE(back.videos.size() == 1);
  CHECK(back.videos[0].segments.size() == 1);
  CHECK(back.videos[0].segments[0].e == 15);

  save_annotations(dir / "w.json", ds, true);
  auto weak = load_annotations(dir / "w.json");
  CHECK(weak.videos[0].segments.empty());  // weak records carry no segments
  CHECK(weak.videos[0].labels == std::vector<int>{1});

  // segment outside duration rejected
  ds.videos[0].segments[0].e = 99;
  save_annotations(dir / "bad.json", ds, false);
  CHECK_THROWS_AS(load_annotations(dir / "bad.json"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("proposal and detection text round-trip") {
  auto dir = temp_dir("tal_data_txt");
  std::vector<Proposal> ps = {{"v1", 1.25, 8.5, 0.75, -1, true}, {"v2", 0.0, 3.0, 1.0, -1, true}};
  save_proposals(dir / "p.txt", ps);
  auto pb = load_proposals(dir / "p.txt");
  REQUIRE(pb.size() == 2);
  CHECK(pb[0].s == doctest::Approx(1.25));
  CHECK(pb[0].score == doctest::Approx(0.75));

  std::vector<Detection> dsv = {{"v1", 3, 2.0, 9.0, 0.5}};
  save_detections(dir / "d.txt", dsv);
  auto db = load_detections(dir / "d.txt");
  REQUIRE(db.size() == 1);
  CHECK(db[0].class_id == 3);

  {
    std::ofstream os(dir / "garbled.txt");
    os << "v1 not_a_number 3 4\n";
  }
  CHECK_THROWS_AS(load_proposals(dir / "garbled.txt"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("synthetic generator is deterministic and structurally sound") {
  SynthConfig cfg;
  cfg.classes = 4;
  cfg.videos = 8;
  cfg.channels = 6;
  cfg.t_min = 40;
  cfg.t_max = 50;
  auto dir1 = temp_dir("tal_synth_1");
  auto dir2 = temp_dir("tal_synth_2");
  auto ds1 = generate_synthetic(cfg, 42);
  auto ds2 = generate_synthetic(cfg, 42);
  write_synthetic(ds1, dir1);
  write_synthetic(ds2, dir2);
  // byte-identical regeneration under a fixed seed
  for (const auto& entry : fs::recursive_directory_iterator(dir1)) {
    if (!entry.is_regular_file()) continue;
    auto rel = fs::relative(entry.path(), dir1);
    CHECK(slurp(entry.path()) == slurp(dir2 / rel));
  }

  // different seed differs
  auto ds3 = generate_synthetic(cfg, 43);
  CHECK(ds3.video_features[0].data != ds1.video_features[0].data);

  // trimmed clip lengths equal their source segment lengths
  size_t ci = 0;
  for (size_t vi = 0; vi < ds1.untrimmed.videos.size(); ++vi)
    for (const auto& seg : ds1.untrimmed.videos[vi].segments) {
      CHECK(ds1.clips.videos[ci].duration == seg.e - seg.s);
      CHECK(ds1.clip_features[ci].t == static_cast<uint32_t>(seg.e - seg.s));
      ++ci;
    }

  // segments stay inside [0, duration] and are non-overlapping per video
  for (const auto& v : ds1.untrimmed.videos) {
    for (const auto& s : v.segments) {
      CHECK(s.s >= 0);
      CHECK(s.e <= v.duration);
    }
    for (size_t a = 0; a < v.segments.size(); ++a)
      for (size_t b = a + 1; b < v.segments.size(); ++b) {
        bool disjoint = v.segments[a].e <= v.segments[b].s || v.segments[b].e <= v.segments[a].s;
        CHECK(disjoint);
      }
  }
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("high snr makes planted segments separable by signature projection") {
  SynthConfig cfg;
  cfg.classes = 3;
  cfg.videos = 4;
  cfg.channels = 12;
  cfg.snr = 100.0;
  cfg.noise_std = 0.25;
  cfg.flank_amp = 0.5;
  cfg.confusers_per_video = 0;
  cfg.two_mode_classes = false;
  auto ds = generate_synthetic(cfg, 7);
  for (size_t vi = 0; vi < ds.untrimmed.videos.size(); ++vi) {
    const auto& v = ds.untrimmed.videos[vi];
    const auto& f = ds.video_features[vi];
    // detection statistic: per-snippet feature norm
    std::vector<double> stat(f.t, 0.0);
    for (size_t t = 0; t < f.t; ++t)
      for (size_t c = 0; c < f.c; ++c) stat[t] += f.data[t * f.c + c] * f.data[t * f.c + c];
    double min_in = 1e18, max_out = -1e18;
    for (size_t t = 0; t < f.t; ++t) {
      bool inside = false;
      for (const auto& s : v.segments)
        if (t >= s.s && t < s.e) inside = true;
      if (inside) min_in = std::min(min_in, stat[t]);
      else max_out = std::max(max_out, stat[t]);
    }
    CHECK(min_in > max_out);  // a single threshold separates planted frames
  }
}

TEST_CASE("config round-trip, defaults, and validation") {
  RunConfig cfg;
  cfg.finalize();
  CHECK(cfg.lgte.channels == cfg.channels);
  CHECK(cfg.lgte.ffn_hidden == 2 * cfg.channels);
  CHECK(cfg.mdcm.dilation_rates == std::vector<int>{1, 2, 3, 5});
  CHECK(cfg.brm.scales == std::vector<double>{4, 8, 16, 32});
  CHECK(cfg.tbr.tau == 0.5);
  CHECK(cfg.eval_thresholds.size() == 10);

  std::string text = config_to_json(cfg);
  RunConfig back = config_from_json(text);
  CHECK(config_to_json(back) == text);

  // override via partial JSON
  RunConfig over = config_from_json(R"({"channels": 16, "lgte": {"groups": 4, "window": 5}})");
  CHECK(over.channels == 16);
  CHECK(over.lgte.groups == 4);
  CHECK(over.lgte.window == 5);
  CHECK(over.lgte.ffn_hidden == 32);

  CHECK_THROWS_AS(config_from_json(R"({"channels": 30, "lgte": {"groups": 8}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json("{nonsense"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"tbr": {"tau": 1.5}})"), ConfigError);
}
