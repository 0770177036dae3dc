// lcadapt command-line driver: synthesize shifted domains, pre-train on the
// labeled source, adapt to the unlabeled target, run stitched inference, and
// evaluate against sealed truth.  Logs go to stderr, data to files; stdout
// carries machine-readable key=value summaries only.
#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lcadapt/lcadapt.hpp"

using namespace lcadapt;

namespace {

void logf(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  std::vfprintf(stderr, fmt, ap);
  va_end(ap);
  std::fputc('\n', stderr);
}

// Keys shared by train-source and adapt, documented once for --help.
const char* kTrainKeyHelp =
    "Config keys (key = value, one per line, '#' comments; a line\n"
    "'include <path>' pulls in another file, later assignments win):\n"
    "  epochs        total epochs; also the horizon for the LR schedule and\n"
    "                the pseudo-label budget ramp (default 100)\n"
    "  batch         tiles per optimizer step, per branch (default 16)\n"
    "  base_lr       initial learning rate of the polynomial decay (default 0.001)\n"
    "  lr_power      polynomial decay exponent (default 0.9)\n"
    "  momentum      SGD momentum (default 0.9)\n"
    "  weight_decay  L2 penalty folded into the gradient (default 1e-5)\n"
    "  lambda        ceiling fraction of target pixels eligible for pseudo-\n"
    "                labels at the final epoch; the per-epoch budget ramps\n"
    "                linearly up to it (default 0.5; 0 disables the target\n"
    "                branch entirely)\n"
    "  val_fraction  share of source tiles held out for the val_mIOU column\n"
    "                (default 0.2)\n"
    "  aug_hflip, aug_vflip, aug_rot90\n"
    "                dihedral source-tile augmentations (default all true)\n"
    "  seed          run seed; splits, shuffles and augmentation draws all\n"
    "                derive from it (default 1)\n"
    "  classes, depth, base_width\n"
    "                network shape (train-source only; defaults 24/3/8 —\n"
    "                adapt and infer rebuild the net from the checkpoint)\n";

const char* kSynthKeyHelp =
    "Config keys:\n"
    "  classes         number of land-cover classes, 2..24 (default 24)\n"
    "  tile            square tile edge in pixels, even (default 32)\n"
    "  freq            comma list of class frequencies summing to 1\n"
    "                  (default uniform)\n"
    "  freq_jitter     per-tile log-normal wobble of the class quotas\n"
    "                  (default 0.15)\n"
    "  shape_rect, shape_blob, shape_strip\n"
    "                  mix of painted region shapes (default 0.4/0.4/0.2)\n"
    "  classN_mean     four band means in [0,1] for class N (default: drawn\n"
    "                  from the seed)\n"
    "  spectral_noise  per-pixel Gaussian noise sigma (default 0.03)\n"
    "  shift_gain      target-domain per-band gain, 1 or 4 values (default 1)\n"
    "  shift_offset    target-domain per-band offset, 1 or 4 values (default 0)\n"
    "  shift_noise     extra target-domain noise sigma (default 0)\n"
    "  freq_skew       target class frequencies ~ freq^skew, renormalized\n"
    "                  (default 1)\n"
    "  seed            generator seed (default 1)\n";

UNetConfig net_config_from(const Config& cfg, uint64_t seed) {
  UNetConfig nc;
  nc.in_channels = RasterScene::kBands;
  nc.num_classes = static_cast<int>(cfg.get_int("classes", nc.num_classes));
  nc.depth = static_cast<int>(cfg.get_int("depth", nc.depth));
  nc.base_width = static_cast<int>(cfg.get_int("base_width", nc.base_width));
  nc.init_seed = mix_seed({seed, tag_hash("init")});
  nc.validate();
  return nc;
}

UNet load_checkpoint_or_advise(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw DataError(strf("checkpoint %s not found; run train-source first",
                         path.c_str()));
  return load_checkpoint(path);
}

// Per-epoch stderr progress plus optional on-disk DPA snapshots.
class CliObserver : public TrainObserver {
 public:
  CliObserver(std::string run_dir, bool dump_dpa, bool record_pseudo,
              const DomainSet* sealed_truth)
      : run_dir_(std::move(run_dir)),
        dump_dpa_(dump_dpa),
        record_pseudo_(record_pseudo),
        truth_(sealed_truth) {}

  void on_epoch(const EpochRow& row, const UNet& model) override {
    (void)model;
    logf("epoch %d  lr %.6f  loss_S %.4f  loss_T %.4f  n_pseudo %lld  val_mIOU %.2f",
         row.epoch, row.lr, row.loss_s, row.loss_t,
         static_cast<long long>(row.n_pseudo), row.val_miou);
    if (record_pseudo_) {
      accuracy_rows_.push_back({row.epoch, epoch_pseudo_, epoch_correct_});
      epoch_pseudo_ = epoch_correct_ = 0;
    }
  }

  void on_pseudo_labels(int epoch, int tile_index, const PseudoLabelSet& set,
                        const EntropyMap& em) override {
    if (truth_ && truth_->tiles[static_cast<size_t>(tile_index)].has_labels) {
      const LabelMap& truth = truth_->tiles[static_cast<size_t>(tile_index)].labels;
      for (const auto& e : set.entries) {
        ++epoch_pseudo_;
        epoch_correct_ += (truth.at(e.y, e.x) == e.label);
      }
    } else {
      epoch_pseudo_ += static_cast<int64_t>(set.entries.size());
    }
    if (dump_dpa_) {
      const std::string dir = run_dir_ + strf("/dpa/epoch_%04d", epoch);
      std::filesystem::create_directories(dir);
      save_entropy_png(em, dir + strf("/tile_%05d_entropy.png", tile_index));
      save_label_png(pseudo_label_map(set, em.h, em.w),
                     dir + strf("/tile_%05d_pseudo.png", tile_index));
    }
  }

  // epoch,n_pseudo,n_correct,accuracy (accuracy blank without sealed truth)
  void write_accuracy_csv(const std::string& path) const {
    if (accuracy_rows_.empty()) return;
    std::ofstream os(path);
    os << "epoch,n_pseudo,n_correct,accuracy\n";
    for (const auto& r : accuracy_rows_) {
      os << r.epoch << ',' << r.n << ',' << r.correct << ',';
      if (truth_ && r.n > 0)
        os << strf("%.17g", static_cast<double>(r.correct) / static_cast<double>(r.n));
      os << '\n';
    }
  }

 private:
  struct Row {
    int epoch;
    int64_t n;
    int64_t correct;
  };
  std::string run_dir_;
  bool dump_dpa_;
  bool record_pseudo_;
  const DomainSet* truth_;
  int64_t epoch_pseudo_ = 0;
  int64_t epoch_correct_ = 0;
  std::vector<Row> accuracy_rows_;
};

void write_history(const std::string& run_dir, const std::vector<EpochRow>& hist) {
  std::ofstream os(run_dir + "/history.csv");
  if (!os) throw DataError(strf("cannot write %s/history.csv", run_dir.c_str()));
  write_history_csv(os, hist);
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& config_path, const std::string& out_dir,
              int n_source, int n_target, bool keep_target_labels) {
  Config cfg = Config::from_file(config_path);
  const SynthSpec spec = SynthSpec::from_config(cfg);
  logf("synth: %d classes, %dx%d tiles, seed %llu", spec.num_classes, spec.tile,
       spec.tile, static_cast<unsigned long long>(spec.seed));

  const DomainSet source = generate_domain(spec, n_source, DomainRole::source);
  DomainSet target = generate_domain(spec, n_target, DomainRole::target);
  save_domain(source, out_dir + "/source");
  // target truth stays on disk as a sealed side-channel for eval unless the
  // operator strips it
  if (!keep_target_labels) target = strip_labels(target);
  save_domain(target, out_dir + "/target");

  std::vector<const LabelMap*> labels;
  for (const auto& t : source.tiles) labels.push_back(&t.labels);
  std::vector<std::string> names;
  for (int k = 1; k <= spec.num_classes; ++k) names.push_back(strf("class%02d", k));
  const ClassStats stats = count_labels(labels, spec.num_classes, &names);
  save_class_stats(stats, out_dir + "/class_stats.txt");

  std::printf("source_dir=%s\n", (out_dir + "/source").c_str());
  std::printf("target_dir=%s\n", (out_dir + "/target").c_str());
  std::printf("class_stats=%s\n", (out_dir + "/class_stats.txt").c_str());
  const double total = static_cast<double>(stats.total());
  for (int k = 0; k < spec.num_classes; ++k)
    std::printf("proportion,%d,%s,%.6f\n", k + 1, names[static_cast<size_t>(k)].c_str(),
                static_cast<double>(stats.counts[static_cast<size_t>(k)]) / total);
  return 0;
}

int cmd_train_source(const std::string& config_path, const std::string& source_dir,
                     const std::string& run_dir) {
  Config cfg = Config::from_file(config_path);
  const TrainConfig tc = TrainConfig::from_config(cfg);
  const UNetConfig nc = net_config_from(cfg, tc.seed);

  const DomainSet source = load_domain(source_dir, DomainRole::source);
  logf("train-source: %zu tiles from %s", source.tiles.size(), source_dir.c_str());

  UNet model(nc);
  logf("model: %d classes, depth %d, width %d, %lld parameters", nc.num_classes,
       nc.depth, nc.base_width, static_cast<long long>(model.param_count()));

  CliObserver obs(run_dir, false, false, nullptr);
  std::filesystem::create_directories(run_dir);
  const std::vector<EpochRow> hist = pretrain_source(model, source, tc, &obs);

  RunManifest m;
  m.command = "train-source";
  m.run_id = run_id_for(m.command, cfg.resolved_text(), tc.seed, {source_dir});
  m.seed = tc.seed;
  m.created = iso_utc_now();
  m.add_path("source", source_dir);
  m.add_path("checkpoint", run_dir + "/model.ckpt");
  m.add_path("history", run_dir + "/history.csv");
  m.save(run_dir, cfg);
  write_history(run_dir, hist);
  save_checkpoint(model, run_dir + "/model.ckpt");

  std::printf("run_id=%s\n", m.run_id.c_str());
  std::printf("checkpoint=%s\n", (run_dir + "/model.ckpt").c_str());
  std::printf("final_loss_S=%.17g\n", hist.back().loss_s);
  if (hist.back().val_miou >= 0.0)
    std::printf("final_val_mIOU=%.17g\n", hist.back().val_miou);
  return 0;
}

int cmd_adapt(const std::string& config_path, const std::string& checkpoint,
              const std::string& source_dir, const std::string& target_dir,
              const std::string& run_dir, bool dump_dpa) {
  Config cfg = Config::from_file(config_path);
  const TrainConfig tc = TrainConfig::from_config(cfg);

  UNet model = load_checkpoint_or_advise(checkpoint);
  const DomainSet source = load_domain(source_dir, DomainRole::source);
  const DomainSet target_raw = load_domain(target_dir, DomainRole::target);
  const DomainSet target = strip_labels(target_raw);  // training never sees truth
  bool sealed = false;
  for (const auto& t : target_raw.tiles) sealed = sealed || t.has_labels;
  logf("adapt: %zu source + %zu target tiles, lambda %.3f%s", source.tiles.size(),
       target.tiles.size(), tc.lambda,
       sealed ? " (sealed truth present; logging pseudo-label accuracy)" : "");

  std::filesystem::create_directories(run_dir);
  CliObserver obs(run_dir, dump_dpa, true, sealed ? &target_raw : nullptr);
  const std::vector<EpochRow> hist = adapt(model, source, target, tc, &obs);

  RunManifest m;
  m.command = "adapt";
  m.run_id = run_id_for(m.command, cfg.resolved_text(), tc.seed,
                        {checkpoint, source_dir, target_dir});
  m.seed = tc.seed;
  m.created = iso_utc_now();
  m.add_path("pretrained", checkpoint);
  m.add_path("source", source_dir);
  m.add_path("target", target_dir);
  m.add_path("checkpoint", run_dir + "/model.ckpt");
  m.add_path("history", run_dir + "/history.csv");
  m.save(run_dir, cfg);
  write_history(run_dir, hist);
  obs.write_accuracy_csv(run_dir + "/pseudo_accuracy.csv");
  save_checkpoint(model, run_dir + "/model.ckpt");

  std::printf("run_id=%s\n", m.run_id.c_str());
  std::printf("checkpoint=%s\n", (run_dir + "/model.ckpt").c_str());
  std::printf("final_loss_S=%.17g\n", hist.back().loss_s);
  std::printf("final_loss_T=%.17g\n", hist.back().loss_t);
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& scene_path,
              const std::string& out_prefix, int64_t tile, double overlap) {
  const UNet model = load_checkpoint_or_advise(checkpoint);
  const RasterScene scene = load_scene(scene_path);
  logf("infer: %s (%lldx%lld), tile %lld, overlap %.2f", scene_path.c_str(),
       static_cast<long long>(scene.h), static_cast<long long>(scene.w),
       static_cast<long long>(tile), overlap);

  const ClassMap pred = stitch_inference(model, scene, tile, overlap);

  RasterScene out = scene;
  out.has_labels = true;
  out.labels = to_label_map(pred);
  out.geo_id = scene.geo_id + "#pred";
  save_scene(out, out_prefix + ".msr");
  save_classmap_png(pred, out_prefix + ".png");

  std::printf("labels=%s.msr\n", out_prefix.c_str());
  std::printf("png=%s.png\n", out_prefix.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& truth_dir,
             const std::string& out_csv, const std::vector<std::string>& region_files,
             int64_t tile, double overlap, const std::string& stats_path) {
  const UNet model = load_checkpoint_or_advise(checkpoint);
  const DomainSet truth = load_domain(truth_dir, DomainRole::target);
  for (const auto& t : truth.tiles)
    if (!t.has_labels)
      throw DataError(strf("eval: tile %s carries no truth labels", t.geo_id.c_str()));

  std::vector<std::string> names;
  if (!stats_path.empty()) {
    names = load_class_stats(stats_path).names;
  } else {
    for (int k = 1; k <= model.config().num_classes; ++k)
      names.push_back(strf("class%02d", k));
  }
  if (static_cast<int>(names.size()) != model.config().num_classes)
    throw DataError(strf("eval: %zu class names for %d classes", names.size(),
                         model.config().num_classes));

  // predict each tile once, then tally per evaluation mode
  std::vector<ClassMap> preds;
  for (const auto& t : truth.tiles) {
    preds.push_back(stitch_inference(model, t, tile, overlap));
    logf("eval: predicted %s", t.geo_id.c_str());
  }

  struct ModeEval {
    std::string name;
    EvalRegionSet regions;
  };
  std::vector<ModeEval> modes;
  if (region_files.empty()) {
    modes.push_back({"dense", EvalRegionSet{}});  // empty set = every pixel
  } else {
    for (const std::string& rf : region_files) {
      EvalRegionSet rs = EvalRegionSet::load(rf);
      modes.push_back({eval_mode_name(rs.mode), std::move(rs)});
    }
  }

  std::ofstream os(out_csv);
  if (!os) throw DataError(strf("cannot write %s", out_csv.c_str()));
  bool first = true;
  for (const auto& me : modes) {
    ConfusionMatrix cm(model.config().num_classes);
    for (size_t i = 0; i < truth.tiles.size(); ++i) {
      const auto& t = truth.tiles[i];
      const std::vector<uint8_t> mask =
          me.regions.mask_for(static_cast<int>(i), t.h, t.w);
      accumulate(cm, t.labels, preds[i], &mask);
    }
    const MetricsReport rep = metrics(cm);
    if (first) {
      write_report_csv(os, me.name, rep, names);
      first = false;
    } else {
      std::ostringstream body;  // append without repeating the header
      write_report_csv(body, me.name, rep, names);
      const std::string s = body.str();
      os << s.substr(s.find('\n') + 1);
    }
    print_report(std::cerr, me.name, rep, names);
    std::printf("mode=%s oa=%.17g mf1=%.17g miou=%.17g\n", me.name.c_str(), rep.oa,
                rep.mf1, rep.miou);
  }
  std::printf("report=%s\n", out_csv.c_str());
  return 0;
}

int cmd_export_png(const std::string& scene_path, const std::string& out_png,
                   const std::string& what) {
  const RasterScene scene = load_scene(scene_path);
  if (what == "labels" || (what == "auto" && scene.has_labels)) {
    if (!scene.has_labels)
      throw DataError(strf("export-png: %s carries no labels", scene_path.c_str()));
    save_label_png(scene.labels, out_png);
  } else {
    save_scene_png(scene, out_png);
  }
  std::printf("png=%s\n", out_png.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "lcadapt — land-cover domain adaptation for 4-band rasters.\n"
      "Pipeline: synth -> train-source -> adapt -> infer/eval.\n"
      "Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric error."};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads,
                 "cap worker threads (default: all logical cores)");

  // synth ------------------------------------------------------------------
  auto* synth = app.add_subcommand(
      "synth", "Generate a labeled source domain and a shifted target domain");
  synth->footer(kSynthKeyHelp);
  std::string sy_config, sy_out;
  int sy_source = 60, sy_target = 20;
  bool sy_keep = false;
  synth->add_option("--config", sy_config, "synthesis config file")->required();
  synth->add_option("--out", sy_out, "output directory")->required();
  synth->add_option("--source", sy_source, "source tile count (default 60)");
  synth->add_option("--target", sy_target, "target tile count (default 20)");
  synth->add_flag("--keep-target-labels", sy_keep,
                  "write target truth into the tiles (sealed; eval-only)");

  // train-source -------------------------------------------------------------
  auto* train = app.add_subcommand(
      "train-source", "Pre-train the segmentation net on the labeled source");
  train->footer(kTrainKeyHelp);
  std::string tr_config, tr_source, tr_run;
  train->add_option("--config", tr_config, "training config file")->required();
  train->add_option("--source", tr_source, "source domain directory")->required();
  train->add_option("--run", tr_run, "run directory to create")->required();

  // adapt --------------------------------------------------------------------
  auto* adapt_cmd = app.add_subcommand(
      "adapt",
      "Adapt a pre-trained net to an unlabeled target domain (two branches, "
      "shared weights, entropy-ranked pseudo-labels)");
  adapt_cmd->footer(kTrainKeyHelp);
  std::string ad_config, ad_ckpt, ad_source, ad_target, ad_run;
  bool ad_dump = false;
  adapt_cmd->add_option("--config", ad_config, "training config file")->required();
  adapt_cmd->add_option("--checkpoint", ad_ckpt, "pre-training checkpoint")->required();
  adapt_cmd->add_option("--source", ad_source, "source domain directory")->required();
  adapt_cmd->add_option("--target", ad_target, "target domain directory")->required();
  adapt_cmd->add_option("--run", ad_run, "run directory to create")->required();
  adapt_cmd->add_flag("--dump-dpa", ad_dump,
                      "write per-epoch entropy and pseudo-label PNGs");

  // infer ----------------------------------------------------------------
  auto* infer = app.add_subcommand(
      "infer", "Stitched sliding-window inference over one scene");
  std::string in_ckpt, in_scene, in_out;
  int64_t in_tile = 32;
  double in_overlap = 0.5;
  infer->add_option("--checkpoint", in_ckpt, "model checkpoint")->required();
  infer->add_option("--scene", in_scene, "input .msr scene")->required();
  infer->add_option("--out", in_out, "output prefix (.msr and .png appended)")
      ->required();
  infer->add_option("--tile", in_tile, "window edge in pixels (default 32)");
  infer->add_option("--overlap", in_overlap,
                    "window overlap fraction in [0,1) (default 0.5)");

  // eval -----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand(
      "eval", "Evaluate a checkpoint against a truth-bearing domain directory");
  std::string ev_ckpt, ev_truth, ev_out, ev_stats;
  std::vector<std::string> ev_regions;
  int64_t ev_tile = 32;
  double ev_overlap = 0.5;
  eval_cmd->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--truth", ev_truth, "domain directory with sealed truth")
      ->required();
  eval_cmd->add_option("--out", ev_out, "report CSV path")->required();
  eval_cmd->add_option("--regions", ev_regions,
                       "evaluation region file(s): 'mode sparse|dense' then "
                       "'region tile y0 x0 h w' lines; omit to evaluate every "
                       "labeled pixel as dense");
  eval_cmd->add_option("--stats", ev_stats,
                       "class statistics file ('id name count' lines) supplying "
                       "class names for the report");
  eval_cmd->add_option("--tile", ev_tile, "window edge in pixels (default 32)");
  eval_cmd->add_option("--overlap", ev_overlap,
                       "window overlap fraction in [0,1) (default 0.5)");

  // export-png ---------------------------------------------------------------
  auto* expng = app.add_subcommand("export-png",
                                   "Render an .msr scene to a PNG image");
  std::string ex_scene, ex_out, ex_what = "auto";
  expng->add_option("--scene", ex_scene, "input .msr scene")->required();
  expng->add_option("--out", ex_out, "output PNG path")->required();
  expng->add_option("--what", ex_what,
                    "'labels' (palette map), 'bands' (RGB composite) or 'auto'")
      ->check(CLI::IsMember({"labels", "bands", "auto"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    if (threads > 0) omp_set_num_threads(threads);
    if (synth->parsed())
      return cmd_synth(sy_config, sy_out, sy_source, sy_target, sy_keep);
    if (train->parsed()) return cmd_train_source(tr_config, tr_source, tr_run);
    if (adapt_cmd->parsed())
      return cmd_adapt(ad_config, ad_ckpt, ad_source, ad_target, ad_run, ad_dump);
    if (infer->parsed())
      return cmd_infer(in_ckpt, in_scene, in_out, in_tile, in_overlap);
    if (eval_cmd->parsed())
      return cmd_eval(ev_ckpt, ev_truth, ev_out, ev_regions, ev_tile, ev_overlap,
                      ev_stats);
    if (expng->parsed()) return cmd_export_png(ex_scene, ex_out, ex_what);
    std::fprintf(stderr, "error: no subcommand\n");
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: config: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: data: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: numeric: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
