// Command-line driver: synthetic data generation, training for both tracks,
// proposal refinement, weak localization, evaluation, gradient checking and
// CAS export.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "tal/config.hpp"
#include "tal/data.hpp"
#include "tal/errors.hpp"
#include "tal/eval.hpp"
#include "tal/synth.hpp"
#include "tal/train.hpp"

namespace fs = std::filesystem;
using namespace tal;

namespace {

RunConfig resolve_config(const std::string& config_path, const std::string& model_path,
                         uint64_t seed_override, bool has_seed) {
  RunConfig cfg;
  if (!config_path.empty()) {
    cfg = load_config(config_path);
  } else if (!model_path.empty() && fs::exists(model_path + ".config.json")) {
    cfg = load_config(model_path + ".config.json");
  } else {
    cfg.finalize();
  }
  if (has_seed) cfg.seed = seed_override;
  cfg.finalize();
  return cfg;
}

std::map<std::string, std::vector<Proposal>> group_proposals(const std::vector<Proposal>& ps) {
  std::map<std::string, std::vector<Proposal>> by_video;
  for (const auto& p : ps) by_video[p.video_id].push_back(p);
  return by_video;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal action localization toolkit on snippet features"};
  app.require_subcommand(0, 1);
  app.fallthrough();  // global --config/--print-config usable after a subcommand

  bool print_config = false;
  app.add_flag("--print-config", print_config, "dump the full configuration as JSON and exit");
  std::string global_config;
  app.add_option("--config", global_config, "configuration JSON file");

  uint64_t seed = 0;
  bool has_seed = false;

  // gen-synth -----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-synth", "generate the synthetic benchmark dataset");
  std::string gen_out;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", seed, "seed override")->each([&](const std::string&) { has_seed = true; });

  // train-tcanet ---------------------------------------------------------------
  auto* tt = app.add_subcommand("train-tcanet", "train the supervised proposal refiner");
  std::string tt_data, tt_out;
  tt->add_option("--data", tt_data, "dataset directory")->required();
  tt->add_option("--out", tt_out, "output checkpoint path")->required();
  tt->add_option("--seed", seed, "seed override")->each([&](const std::string&) { has_seed = true; });

  // train-mgfn ----------------------------------------------------------------
  auto* tm = app.add_subcommand("train-mgfn", "train the weakly-supervised localizer");
  std::string tm_data, tm_out;
  tm->add_option("--data", tm_data, "dataset directory")->required();
  tm->add_option("--out", tm_out, "output checkpoint path")->required();
  tm->add_option("--seed", seed, "seed override")->each([&](const std::string&) { has_seed = true; });

  // refine ----------------------------------------------------------------
  auto* rf = app.add_subcommand("refine", "refine proposals with a trained supervised model");
  std::string rf_data, rf_model, rf_props, rf_out;
  size_t rf_stages = 0;
  rf->add_option("--data", rf_data, "dataset directory")->required();
  rf->add_option("--model", rf_model, "checkpoint path")->required();
  rf->add_option("--proposals", rf_props, "input proposals file")->required();
  rf->add_option("--out", rf_out, "output proposals file")->required();
  rf->add_option("--stages", rf_stages, "number of refinement stages (default: all)");

  // localize ----------------------------------------------------------------
  auto* lc = app.add_subcommand("localize", "detect action segments with a trained weak model");
  std::string lc_data, lc_model, lc_out, lc_split = "val", lc_track = "weak";
  lc->add_option("--data", lc_data, "dataset directory")->required();
  lc->add_option("--model", lc_model, "checkpoint path")->required();
  lc->add_option("--out", lc_out, "output detections file")->required();
  lc->add_option("--split", lc_split, "video split to run on (train/val/all)");
  lc->add_option("--track", lc_track, "track selector (weak)");

  // eval ----------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "evaluate detections against ground truth");
  std::string ev_gt, ev_out, ev_split;
  std::vector<std::string> ev_dets;
  std::vector<double> ev_val_scores;
  ev->add_option("--gt", ev_gt, "annotations JSON")->required();
  ev->add_option("--dets", ev_dets, "detection file(s); several fuse by --val-scores")->required();
  ev->add_option("--val-scores", ev_val_scores, "per-set validation scores for fusion weights");
  ev->add_option("--split", ev_split, "restrict ground truth to a split");
  ev->add_option("--out", ev_out, "metrics JSON output path");

  // grad-check ----------------------------------------------------------------
  auto* gc = app.add_subcommand("grad-check", "finite-difference oracle over all modules");
  gc->add_option("--seed", seed, "seed override")->each([&](const std::string&) { has_seed = true; });

  // export-cas ----------------------------------------------------------------
  auto* ec = app.add_subcommand("export-cas", "write activation tracks for one video");
  std::string ec_data, ec_model, ec_out, ec_video;
  ec->add_option("--data", ec_data, "dataset directory")->required();
  ec->add_option("--model", ec_model, "checkpoint path")->required();
  ec->add_option("--video", ec_video, "video id")->required();
  ec->add_option("--out", ec_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (print_config) {
      RunConfig cfg = resolve_config(global_config, "", seed, has_seed);
      std::cout << config_to_json(cfg) << "\n";
      return 0;
    }

    if (gen->parsed()) {
      RunConfig cfg = resolve_config(global_config, "", seed, has_seed);
      auto ds = generate_synthetic(cfg.synth, cfg.seed);
      write_synthetic(ds, gen_out);
      save_config(fs::path(gen_out) / "config.json", cfg);
      std::cout << "wrote " << ds.untrimmed.videos.size() << " videos, "
                << ds.clips.videos.size() << " clips to " << gen_out << "\n";
      return 0;
    }

    if (tt->parsed()) {
      RunConfig cfg = resolve_config(global_config, "", seed, has_seed);
      auto data = load_dataset(tt_data, "full");
      auto model = build_tcanet(cfg);
      train_tcanet(*model, data, &std::cout);
      save_model(*model, tt_out);
      save_config(tt_out + ".config.json", cfg);
      std::cout << "saved " << tt_out << "\n";
      return 0;
    }

    if (tm->parsed()) {
      RunConfig cfg = resolve_config(global_config, "", seed, has_seed);
      auto weak = load_dataset(tm_data, "weak");
      auto clips = load_dataset(tm_data, "clips");
      auto model = build_mgfn(cfg);
      train_mgfn(*model, weak, clips, &std::cout);
      save_model(*model, tm_out);
      save_config(tm_out + ".config.json", cfg);
      std::cout << "saved " << tm_out << "\n";
      return 0;
    }

    if (rf->parsed()) {
      RunConfig cfg = resolve_config(global_config, rf_model, seed, has_seed);
      auto model = build_tcanet(cfg);
      load_model(*model, rf_model);
      auto props = load_proposals(rf_props);
      size_t stages = rf_stages == 0 ? cfg.tbr.stages : rf_stages;
      std::vector<Proposal> refined;
      for (auto& [vid, ps] : group_proposals(props)) {
        auto feats = load_features(fs::path(rf_data) / "features" / (vid + ".feat")).tensor();
        auto out = refine_proposals(*model, feats, ps, stages);
        refined.insert(refined.end(), out.begin(), out.end());
      }
      save_proposals(rf_out, refined);
      std::cout << "refined " << refined.size() << " proposals -> " << rf_out << "\n";
      return 0;
    }

    if (lc->parsed()) {
      if (lc_track != "weak")
        throw ConfigError("localize drives the weak track; supervised refinement runs via 'refine'");
      RunConfig cfg = resolve_config(global_config, lc_model, seed, has_seed);
      auto model = build_mgfn(cfg);
      load_model(*model, lc_model);
      auto weak = load_dataset(lc_data, "weak");
      std::vector<Detection> all;
      for (const auto& v : weak.ann.videos) {
        if (lc_split != "all" && v.split != lc_split) continue;
        auto dets = mgfn_localize(*model, weak.features.at(v.id), v.id);
        all.insert(all.end(), dets.begin(), dets.end());
      }
      std::sort(all.begin(), all.end(), detection_order);
      save_detections(lc_out, all);
      std::cout << "wrote " << all.size() << " detections -> " << lc_out << "\n";
      return 0;
    }

    if (ev->parsed()) {
      RunConfig cfg = resolve_config(global_config, "", seed, has_seed);
      auto ann = load_annotations(ev_gt);
      auto gts = collect_instances(ann, ev_split);
      std::vector<Detection> dets;
      if (ev_dets.size() == 1) {
        dets = load_detections(ev_dets[0]);
      } else {
        if (ev_val_scores.size() != ev_dets.size())
          throw ConfigError("eval: need one --val-scores entry per --dets file");
        std::vector<std::vector<Detection>> sets;
        for (const auto& f : ev_dets) sets.push_back(load_detections(f));
        dets = ensemble_fuse(sets, ev_val_scores, cfg.detect.nms_tiou);
      }
      auto res = average_map(dets, gts, cfg.eval_thresholds);
      std::cout << res.table();
      if (!ev_out.empty()) {
        nlohmann::ordered_json j;
        j["thresholds"] = res.thresholds;
        j["map_per_threshold"] = res.map_per_threshold;
        j["average_map"] = res.average_map;
        for (const auto& [k, ap] : res.class_average_ap)
          j["class_average_ap"][std::to_string(k)] = ap;
        atomic_write_text(ev_out, j.dump(2) + "\n");
      }
      return 0;
    }

    if (gc->parsed()) {
      RunConfig cfg = resolve_config(global_config, "", seed, has_seed);
      auto checks = run_all_gradient_checks(cfg.seed);
      bool ok = true;
      for (const auto& c : checks) {
        std::cout << c.name << ": " << c.result.summary() << "\n";
        for (const auto& line : c.result.failing) std::cout << "    " << line << "\n";
        ok = ok && c.result.pass();
      }
      std::cout << (ok ? "grad-check PASS" : "grad-check FAIL") << "\n";
      return ok ? 0 : 1;
    }

    if (ec->parsed()) {
      RunConfig cfg = resolve_config(global_config, ec_model, seed, has_seed);
      auto model = build_mgfn(cfg);
      load_model(*model, ec_model);
      auto weak = load_dataset(ec_data, "weak");
      if (!weak.features.count(ec_video)) throw ConfigError("export-cas: unknown video " + ec_video);
      auto variants = export_cas_variants(*model, weak.features.at(ec_video));
      fs::create_directories(ec_out);
      save_cas_matrix(fs::path(ec_out) / (ec_video + "_simple.cas"), variants.simple,
                      weak.ann.classes);
      save_cas_matrix(fs::path(ec_out) / (ec_video + "_mdcm.cas"), variants.mdcm,
                      weak.ann.classes);
      save_cas_matrix(fs::path(ec_out) / (ec_video + "_cascade.cas"), variants.cascade,
                      weak.ann.classes);
      std::cout << "wrote activation tracks for " << ec_video << " -> " << ec_out << "\n";
      return 0;
    }

    std::cout << app.help();
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}
