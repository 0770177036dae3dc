#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "lcadapt/config.hpp"
#include "lcadapt/dpa.hpp"
#include "lcadapt/losses.hpp"
#include "lcadapt/metrics.hpp"
#include "lcadapt/optim.hpp"
#include "lcadapt/raster.hpp"
#include "lcadapt/unet.hpp"

namespace lcadapt {

struct TrainConfig {
  int epochs = 100;
  int batch = 16;  // tiles per branch per step
  double base_lr = 0.001;
  double lr_power = 0.9;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  double lambda = 0.5;  // pseudo-label budget ceiling fraction
  double val_fraction = 0.20;
  bool aug_hflip = true;
  bool aug_vflip = true;
  bool aug_rot90 = true;
  uint64_t seed = 1;

  static TrainConfig from_config(const Config& cfg) {
    TrainConfig t;
    t.epochs = static_cast<int>(cfg.get_int("epochs", t.epochs));
    t.batch = static_cast<int>(cfg.get_int("batch", t.batch));
    t.base_lr = cfg.get_double("base_lr", t.base_lr);
    t.lr_power = cfg.get_double("lr_power", t.lr_power);
    t.momentum = cfg.get_double("momentum", t.momentum);
    t.weight_decay = cfg.get_double("weight_decay", t.weight_decay);
    t.lambda = cfg.get_double("lambda", t.lambda);
    t.val_fraction = cfg.get_double("val_fraction", t.val_fraction);
    t.aug_hflip = cfg.get_bool("aug_hflip", t.aug_hflip);
    t.aug_vflip = cfg.get_bool("aug_vflip", t.aug_vflip);
    t.aug_rot90 = cfg.get_bool("aug_rot90", t.aug_rot90);
    t.seed = static_cast<uint64_t>(cfg.get_int("seed", 1));
    t.validate();
    return t;
  }

  void validate() const {
    if (epochs < 1 || batch < 1)
      throw ConfigError(strf("train: epochs %d / batch %d must be positive", epochs, batch));
    if (!(base_lr > 0.0))
      throw ConfigError(strf("train: base_lr %g must be positive", base_lr));
    if (!(lambda >= 0.0) || lambda > 1.0)
      throw ConfigError(strf("train: lambda %g outside [0, 1]", lambda));
    if (!(val_fraction >= 0.0) || val_fraction >= 1.0)
      throw ConfigError(strf("train: val_fraction %g outside [0, 1)", val_fraction));
  }
};

struct EpochRow {
  int epoch = 0;
  double lr = 0.0;
  double loss_s = 0.0;   // mean source-branch loss per step
  double loss_t = 0.0;   // mean target-branch loss per step (0 when inactive)
  int64_t n_pseudo = 0;  // pseudo-labels assigned this epoch
  double val_miou = -1.0;  // -1 when there is no validation split
};

// Hooks for logging, checkpoint cadence and pseudo-label inspection; all
// optional.  `on_pseudo_labels` fires once per target tile per epoch.
struct TrainObserver {
  virtual void on_epoch(const EpochRow& row, const UNet& model) {
    (void)row;
    (void)model;
  }
  virtual void on_pseudo_labels(int epoch, int tile_index,
                                const PseudoLabelSet& set, const EntropyMap& em) {
    (void)epoch;
    (void)tile_index;
    (void)set;
    (void)em;
  }
  virtual ~TrainObserver() = default;
};

namespace detail {

// Dihedral tile augmentation: counterclockwise quarter turns, then optional
// flips.  Bands and labels move together so labels stay valid.
struct AugVariant {
  int rot = 0;  // quarter turns, CCW
  bool hflip = false;
  bool vflip = false;
};

inline std::vector<AugVariant> aug_variants(const TrainConfig& cfg) {
  std::vector<int> rots = {0};
  if (cfg.aug_rot90) rots = {0, 1, 2, 3};
  std::vector<std::pair<bool, bool>> flips = {{false, false}};
  if (cfg.aug_hflip) flips.push_back({true, false});
  if (cfg.aug_vflip) flips.push_back({false, true});
  if (cfg.aug_hflip && cfg.aug_vflip) flips.push_back({true, true});
  std::vector<AugVariant> out;
  for (int r : rots)
    for (auto [h, v] : flips) out.push_back({r, h, v});
  return out;
}

inline RasterScene aug_apply(const RasterScene& sc, const AugVariant& av) {
  if (av.rot % 4 == 0 && !av.hflip && !av.vflip) return sc;
  if (sc.h != sc.w && av.rot % 2 != 0)
    throw ConfigError("augmentation: quarter turns need square tiles");
  const int64_t t = sc.h;
  RasterScene out(sc.h, sc.w);
  out.geo_id = sc.geo_id;
  out.tag = sc.tag;
  out.has_labels = sc.has_labels;
  if (sc.has_labels) out.labels = LabelMap(sc.h, sc.w);
  for (int64_t y = 0; y < t; ++y) {
    for (int64_t x = 0; x < t; ++x) {
      int64_t dy = y, dx = x;
      for (int r = 0; r < (av.rot % 4); ++r) {
        const int64_t ny = t - 1 - dx, nx = dy;
        dy = ny;
        dx = nx;
      }
      if (av.hflip) dx = t - 1 - dx;
      if (av.vflip) dy = t - 1 - dy;
      for (int b = 0; b < RasterScene::kBands; ++b)
        out.band(b, dy, dx) = sc.band(b, y, x);
      if (sc.has_labels) out.labels.at(dy, dx) = sc.labels.at(y, x);
    }
  }
  return out;
}

// Deterministic validation split: shuffle indices on the "valsplit" stream
// and take the head.  The same (seed, n) always yields the same split, so
// pre-training and adaptation agree on it.
inline void split_validation(int n, double val_fraction, uint64_t seed,
                             std::vector<int>* train_idx,
                             std::vector<int>* val_idx) {
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed({seed, tag_hash("valsplit")}));
  rng.shuffle(idx);
  int nv = static_cast<int>(std::llround(val_fraction * n));
  nv = std::clamp(nv, 0, n - 1);  // never swallow the whole set
  val_idx->assign(idx.begin(), idx.begin() + nv);
  train_idx->assign(idx.begin() + nv, idx.end());
  std::sort(train_idx->begin(), train_idx->end());
  std::sort(val_idx->begin(), val_idx->end());
}

inline double eval_miou(const UNet& model, const DomainSet& ds,
                        const std::vector<int>& idx) {
  if (idx.empty()) return -1.0;
  ConfusionMatrix cm(model.config().num_classes);
  for (int i : idx) {
    const RasterScene& sc = ds.tiles[static_cast<size_t>(i)];
    const Tensor logits = model.forward(to_tensor(sc));
    accumulate(cm, sc.labels, argmax_classes(logits));
  }
  if (cm.total() == 0) return -1.0;
  return metrics(cm).miou;
}

}  // namespace detail

// Mean class-weighted CE of a batch of labeled tiles under the current
// parameters; no gradients, no augmentation.  Used as the drift probe.
inline double source_probe_loss(const UNet& model,
                                const std::vector<const RasterScene*>& tiles,
                                const ClassWeights& weights) {
  if (tiles.empty()) throw ConfigError("source_probe_loss: empty probe");
  double total = 0.0;
  for (const RasterScene* sc : tiles) {
    if (!sc->has_labels) throw DataError("source_probe_loss: unlabeled probe tile");
    const Tensor probs = softmax_channels(model.forward(to_tensor(*sc)));
    std::vector<const LabelMap*> labs = {&sc->labels};
    total += weighted_ce_loss(probs, labs, weights).item();
  }
  return total / static_cast<double>(tiles.size());
}

// Single-branch prediction for one tile.
inline ClassMap infer_branch(const UNet& model, const RasterScene& sc) {
  if (model.config().in_channels != RasterScene::kBands)
    throw DataError(strf("infer: model expects %d channels, scenes carry %d",
                         model.config().in_channels, RasterScene::kBands));
  return argmax_classes(model.forward(to_tensor(sc)));
}

// Supervised pre-training on the labeled source domain: class-balanced CE,
// SGD with momentum, polynomial LR decay, dihedral augmentation, and an
// epoch-wise validation mIOU on a held-out split.
inline std::vector<EpochRow> pretrain_source(UNet& model, const DomainSet& source,
                                             const TrainConfig& cfg,
                                             TrainObserver* obs = nullptr) {
  cfg.validate();
  source.validate();
  if (source.tiles.empty()) throw ConfigError("pretrain: empty source domain");

  std::vector<int> train_idx, val_idx;
  detail::split_validation(static_cast<int>(source.tiles.size()), cfg.val_fraction,
                           cfg.seed, &train_idx, &val_idx);

  std::vector<const LabelMap*> train_labels;
  for (int i : train_idx) train_labels.push_back(&source.tiles[static_cast<size_t>(i)].labels);
  const ClassWeights weights = compute_class_weights(
      count_labels(train_labels, model.config().num_classes));

  const std::vector<detail::AugVariant> variants = detail::aug_variants(cfg);
  OptimizerState opt;
  std::vector<EpochRow> history;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = poly_lr(cfg.base_lr, epoch - 1, cfg.epochs, cfg.lr_power);

    std::vector<int> order = train_idx;
    Rng order_rng(mix_seed({cfg.seed, tag_hash("order"), static_cast<uint64_t>(epoch)}));
    order_rng.shuffle(order);
    Rng aug_rng(mix_seed({cfg.seed, tag_hash("aug-source"), static_cast<uint64_t>(epoch)}));

    double loss_sum = 0.0;
    int steps = 0;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch)) {
      const size_t end = std::min(order.size(), at + static_cast<size_t>(cfg.batch));
      std::vector<RasterScene> batch;
      for (size_t i = at; i < end; ++i) {
        const auto& av = variants[static_cast<size_t>(aug_rng.uniform_int(
            0, static_cast<int64_t>(variants.size()) - 1))];
        batch.push_back(detail::aug_apply(source.tiles[static_cast<size_t>(order[i])], av));
      }
      std::vector<const RasterScene*> ptrs;
      std::vector<const LabelMap*> labs;
      for (const auto& sc : batch) {
        ptrs.push_back(&sc);
        labs.push_back(&sc.labels);
      }
      Tape tape;
      const Tensor probs =
          softmax_channels(model.forward(batch_to_tensor(ptrs), &tape), &tape);
      const Tensor loss = weighted_ce_loss(probs, labs, weights, &tape);
      zero_grads(model.params());
      tape.backward(loss);
      sgd_step(model.params(), opt, lr, cfg.momentum, cfg.weight_decay);
      loss_sum += loss.item();
      ++steps;
    }

    EpochRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.loss_s = loss_sum / steps;
    row.val_miou = detail::eval_miou(model, source, val_idx);
    history.push_back(row);
    if (obs) obs->on_epoch(row, model);
  }
  return history;
}

// Two-branch adaptation with one shared parameter set.  Each epoch samples a
// fresh sub-source of |target| tiles (a prefix of the same shuffle stream
// pre-training uses), pairs it batch-for-batch with the target tiles, selects
// the epoch's lowest-entropy target pixels as pseudo-labels, and steps on the
// summed loss.  When the budget is zero (lambda 0 or epoch 0 sentinel) the
// target branch is skipped entirely, which makes such an epoch reproduce a
// pre-training epoch bit for bit.
inline std::vector<EpochRow> adapt(UNet& model, const DomainSet& source,
                                   const DomainSet& target, const TrainConfig& cfg,
                                   TrainObserver* obs = nullptr) {
  cfg.validate();
  source.validate();
  if (source.tiles.empty()) throw ConfigError("adapt: empty source domain");
  if (target.tiles.empty()) throw ConfigError("adapt: empty target domain");
  for (const auto& t : target.tiles) {
    if (t.h != t.w || t.h != source.tiles[0].h)
      throw DataError(strf("adapt: target tile %s is %lldx%lld, expected %lldx%lld",
                           t.geo_id.c_str(), static_cast<long long>(t.h),
                           static_cast<long long>(t.w),
                           static_cast<long long>(source.tiles[0].h),
                           static_cast<long long>(source.tiles[0].h)));
  }

  std::vector<int> train_idx, val_idx;
  detail::split_validation(static_cast<int>(source.tiles.size()), cfg.val_fraction,
                           cfg.seed, &train_idx, &val_idx);

  std::vector<const LabelMap*> train_labels;
  for (int i : train_idx) train_labels.push_back(&source.tiles[static_cast<size_t>(i)].labels);
  const ClassWeights weights = compute_class_weights(
      count_labels(train_labels, model.config().num_classes));

  const int n_target = static_cast<int>(target.tiles.size());
  const bool with_replacement = n_target > static_cast<int>(train_idx.size());
  if (with_replacement)
    warn(strf("adapt: target (%d tiles) larger than source train split (%zu); "
              "sampling sub-source with replacement",
              n_target, train_idx.size()));

  const std::vector<detail::AugVariant> variants = detail::aug_variants(cfg);
  OptimizerState opt;
  std::vector<EpochRow> history;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = poly_lr(cfg.base_lr, epoch - 1, cfg.epochs, cfg.lr_power);

    // sub-source: prefix of the shuffled train split (or uniform draws when
    // the target outnumbers it)
    Rng order_rng(mix_seed({cfg.seed, tag_hash("order"), static_cast<uint64_t>(epoch)}));
    std::vector<int> sub;
    if (with_replacement) {
      for (int i = 0; i < n_target; ++i)
        sub.push_back(train_idx[static_cast<size_t>(order_rng.uniform_int(
            0, static_cast<int64_t>(train_idx.size()) - 1))]);
    } else {
      std::vector<int> order = train_idx;
      order_rng.shuffle(order);
      sub.assign(order.begin(), order.begin() + n_target);
    }
    Rng aug_rng(mix_seed({cfg.seed, tag_hash("aug-source"), static_cast<uint64_t>(epoch)}));

    const DpaSchedule sched{cfg.lambda, cfg.epochs, epoch};
    double loss_s_sum = 0.0, loss_t_sum = 0.0;
    int64_t n_pseudo = 0;
    int steps = 0;

    for (size_t at = 0; at < sub.size(); at += static_cast<size_t>(cfg.batch)) {
      const size_t end = std::min(sub.size(), at + static_cast<size_t>(cfg.batch));

      std::vector<RasterScene> s_batch;
      for (size_t i = at; i < end; ++i) {
        const auto& av = variants[static_cast<size_t>(aug_rng.uniform_int(
            0, static_cast<int64_t>(variants.size()) - 1))];
        s_batch.push_back(detail::aug_apply(source.tiles[static_cast<size_t>(sub[i])], av));
      }
      std::vector<const RasterScene*> s_ptrs;
      std::vector<const LabelMap*> s_labs;
      for (const auto& sc : s_batch) {
        s_ptrs.push_back(&sc);
        s_labs.push_back(&sc.labels);
      }

      Tape tape;
      const Tensor probs_s =
          softmax_channels(model.forward(batch_to_tensor(s_ptrs), &tape), &tape);
      const Tensor loss_s = weighted_ce_loss(probs_s, s_labs, weights, &tape);

      const int64_t budget = selection_budget(sched, target.tiles[0].h,
                                              target.tiles[0].w);
      Tensor total = loss_s;
      double loss_t_val = 0.0;
      if (budget > 0) {
        std::vector<const RasterScene*> t_ptrs;
        for (size_t i = at; i < end; ++i)
          t_ptrs.push_back(&target.tiles[i]);
        const Tensor probs_t =
            softmax_channels(model.forward(batch_to_tensor(t_ptrs), &tape), &tape);
        std::vector<LabelMap> pseudo;
        for (size_t i = at; i < end; ++i) {
          const int64_t bi = static_cast<int64_t>(i - at);
          const EntropyMap em = entropy_map(probs_t, bi);
          const PseudoLabelSet set = assign_pseudo_labels(
              probs_t, em, budget, bi, target.tiles[i].geo_id);
          n_pseudo += static_cast<int64_t>(set.entries.size());
          if (obs) obs->on_pseudo_labels(epoch, static_cast<int>(i), set, em);
          pseudo.push_back(pseudo_label_map(set, target.tiles[i].h, target.tiles[i].w));
        }
        std::vector<const LabelMap*> t_labs;
        for (const auto& lm : pseudo) t_labs.push_back(&lm);
        const Tensor loss_t = weighted_ce_loss(probs_t, t_labs, weights, &tape);
        loss_t_val = loss_t.item();
        total = joint_loss(loss_s, loss_t, &tape);
      }

      zero_grads(model.params());
      tape.backward(total);
      sgd_step(model.params(), opt, lr, cfg.momentum, cfg.weight_decay);
      loss_s_sum += loss_s.item();
      loss_t_sum += loss_t_val;
      ++steps;
    }

    EpochRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.loss_s = loss_s_sum / steps;
    row.loss_t = loss_t_sum / steps;
    row.n_pseudo = n_pseudo;
    row.val_miou = detail::eval_miou(model, source, val_idx);
    history.push_back(row);
    if (obs) obs->on_epoch(row, model);
  }
  return history;
}

inline void write_history_csv(std::ostream& os, const std::vector<EpochRow>& rows) {
  os << "epoch,lr,loss_S,loss_T,n_pseudo,val_mIOU\n";
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const EpochRow& r : rows) {
    os << r.epoch << ',' << num(r.lr) << ',' << num(r.loss_s) << ','
       << num(r.loss_t) << ',' << r.n_pseudo << ',' << num(r.val_miou) << '\n';
  }
}

}  // namespace lcadapt
