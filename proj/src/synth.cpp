#include "tal/synth.hpp"

#include <algorithm>
#include <cmath>

#include "tal/errors.hpp"
#include "tal/rng.hpp"

namespace tal {

void SynthConfig::validate() const {
  if (classes == 0 || videos == 0 || channels == 0) throw ConfigError("synth: empty dimensions");
  if (t_min < seg_len_max * segments_per_video + 4)
    throw ConfigError("synth: t_min too small for the requested segments");
  if (t_max < t_min) throw ConfigError("synth: t_max < t_min");
  if (seg_len_min < 4 || seg_len_max < seg_len_min) throw ConfigError("synth: bad segment lengths");
  if (flank_fraction < 0.0 || flank_fraction >= 0.5) throw ConfigError("synth: flank_fraction");
  if (val_fraction <= 0.0 || val_fraction >= 1.0) throw ConfigError("synth: val_fraction");
  if (snr <= 0.0 || noise_std < 0.0) throw ConfigError("synth: snr/noise");
}

namespace {

std::vector<double> unit_signature(size_t channels, Rng& rng) {
  std::vector<double> v(channels);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= (norm > 0 ? norm : 1.0);
  return v;
}

std::string zero_pad(size_t n, int width) {
  std::string s = std::to_string(n);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

SynthDataset generate_synthetic(const SynthConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);

  // two signature modes per class
  std::vector<std::vector<double>> sig0, sig1;
  for (size_t k = 0; k < cfg.classes; ++k) {
    sig0.push_back(unit_signature(cfg.channels, rng));
    sig1.push_back(unit_signature(cfg.channels, rng));
  }

  SynthDataset ds;
  for (size_t k = 0; k < cfg.classes; ++k) ds.untrimmed.classes.push_back("c" + zero_pad(k, 2));
  ds.clips.classes = ds.untrimmed.classes;

  size_t train_count = cfg.videos - static_cast<size_t>(std::floor(
                                        static_cast<double>(cfg.videos) * cfg.val_fraction));
  for (size_t vi = 0; vi < cfg.videos; ++vi) {
    size_t T = cfg.t_min + static_cast<size_t>(rng.uniform_int(
                               0, static_cast<int64_t>(cfg.t_max - cfg.t_min)));
    int k = static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(cfg.classes) - 1));

    VideoAnnotation va;
    va.id = "v" + zero_pad(vi, 4);
    va.duration = static_cast<double>(T);
    va.split = vi < train_count ? "train" : "val";
    va.labels = {k};

    // place non-overlapping integer segments
    std::vector<std::pair<size_t, size_t>> placed;
    for (size_t si = 0; si < cfg.segments_per_video; ++si) {
      size_t len = cfg.seg_len_min + static_cast<size_t>(rng.uniform_int(
                                         0, static_cast<int64_t>(cfg.seg_len_max - cfg.seg_len_min)));
      for (int attempt = 0; attempt < 64; ++attempt) {
        size_t start = static_cast<size_t>(rng.uniform_int(1, static_cast<int64_t>(T - len - 1)));
        bool clash = false;
        for (auto [ps, pe] : placed)
          if (!(start + len + 2 <= ps || pe + 2 <= start)) clash = true;
        if (clash) continue;
        placed.emplace_back(start, start + len);
        break;
      }
    }
    std::sort(placed.begin(), placed.end());

    FeatureSequence fs;
    fs.t = static_cast<uint32_t>(T);
    fs.c = static_cast<uint32_t>(cfg.channels);
    fs.frame_rate = cfg.frame_rate;
    fs.stride = cfg.snippet_stride;
    fs.data.assign(static_cast<size_t>(T) * cfg.channels, 0.0);
    for (double& v : fs.data) v = rng.normal(0.0, cfg.noise_std);

    for (size_t si = 0; si < placed.size(); ++si) {
      auto [s0, e0] = placed[si];
      double amp = cfg.snr * (si == 0 ? 1.0 : cfg.second_amp);
      const auto& sig =
          (si > 0 && cfg.two_mode_classes) ? sig1[static_cast<size_t>(k)] : sig0[static_cast<size_t>(k)];
      size_t len = e0 - s0;
      size_t flank = static_cast<size_t>(std::floor(cfg.flank_fraction * static_cast<double>(len)));
      for (size_t t = s0; t < e0; ++t) {
        bool core = t >= s0 + flank && t < e0 - flank;
        double a = amp * (core ? 1.0 : cfg.flank_amp);
        for (size_t c = 0; c < cfg.channels; ++c)
          fs.data[t * cfg.channels + c] += a * sig[c];
      }
      va.segments.push_back({va.id, k, static_cast<double>(s0), static_cast<double>(e0)});

      // trimmed clip excised from the (clean) planted rows
      VideoAnnotation clip;
      clip.id = va.id + "_s" + std::to_string(si);
      clip.duration = static_cast<double>(len);
      clip.trimmed = true;
      clip.split = va.split;
      clip.labels = {k};
      clip.segments.push_back({clip.id, k, 0.0, static_cast<double>(len)});
      FeatureSequence cf;
      cf.t = static_cast<uint32_t>(len);
      cf.c = fs.c;
      cf.frame_rate = fs.frame_rate;
      cf.stride = fs.stride;
      cf.data.assign(fs.data.begin() + static_cast<long>(s0 * cfg.channels),
                     fs.data.begin() + static_cast<long>(e0 * cfg.channels));
      ds.clips.videos.push_back(std::move(clip));
      ds.clip_features.push_back(std::move(cf));
    }

    // background confuser bursts of other classes, outside the true segments
    for (size_t ci = 0; ci < cfg.confusers_per_video; ++ci) {
      size_t len = cfg.confuser_len_min +
                   static_cast<size_t>(rng.uniform_int(
                       0, static_cast<int64_t>(cfg.confuser_len_max - cfg.confuser_len_min)));
      int other = static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(cfg.classes) - 1));
      if (other == k) other = (other + 1) % static_cast<int>(cfg.classes);
      for (int attempt = 0; attempt < 64; ++attempt) {
        size_t start = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(T - len)));
        bool clash = false;
        for (auto [ps, pe] : placed)
          if (!(start + len <= ps || pe <= start)) clash = true;
        if (clash) continue;
        for (size_t t = start; t < start + len; ++t)
          for (size_t c = 0; c < cfg.channels; ++c)
            fs.data[t * cfg.channels + c] +=
                cfg.snr * cfg.confuser_amp * sig0[static_cast<size_t>(other)][c];
        break;
      }
    }

    ds.untrimmed.videos.push_back(std::move(va));
    ds.video_features.push_back(std::move(fs));
  }
  return ds;
}

void write_synthetic(const SynthDataset& ds, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "features");
  fs::create_directories(out_dir / "clips");
  for (size_t i = 0; i < ds.untrimmed.videos.size(); ++i)
    save_features(out_dir / "features" / (ds.untrimmed.videos[i].id + ".feat"),
                  ds.video_features[i]);
  for (size_t i = 0; i < ds.clips.videos.size(); ++i)
    save_features(out_dir / "clips" / (ds.clips.videos[i].id + ".feat"), ds.clip_features[i]);
  save_annotations(out_dir / "annotations.json", ds.untrimmed, /*weak=*/false);
  save_annotations(out_dir / "weak_annotations.json", ds.untrimmed, /*weak=*/true);
  save_annotations(out_dir / "clips_annotations.json", ds.clips, /*weak=*/false);
}

}  // namespace tal
