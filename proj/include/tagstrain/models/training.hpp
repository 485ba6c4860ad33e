#pragma once

// Training loops and validation metrics for both networks. Runs are
// deterministic for a given seed: data order comes from a per-epoch shuffle,
// sample preparation writes into fixed slots, and the optimizer step is
// single-threaded.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tagstrain/dataset.hpp"
#include "tagstrain/eval.hpp"
#include "tagstrain/models/checkpoint.hpp"
#include "tagstrain/models/inputs.hpp"
#include "tagstrain/nn/adam.hpp"

namespace tagstrain {

struct TrainOptions {
  int epochs = 30;
  std::uint64_t seed = 0;
  double omega = 1.0;  // strain weight in the tracker loss
  PreprocConfig preprocess;
  Json config = Json::object();  // effective run config, echoed into the checkpoint
  std::function<void(const Json&)> on_metrics;  // called for every metrics line as it is produced
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<Json> metrics;
  std::vector<double> step_losses;  // training-mode loss of every optimizer step
  Json final_val;                   // last validation line (last train line if there is no val split)
};

class TrainingError : public DomainError {
 public:
  using DomainError::DomainError;
};

namespace detail {

inline std::vector<int> epoch_order(int n, std::uint64_t seed, int epoch) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

inline void check_finite(double loss, int epoch, int step) {
  if (!std::isfinite(loss)) {
    throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                        std::to_string(step));
  }
}

inline std::vector<const ManifestEntry*> split_or_throw(const Manifest& m, const std::string& name) {
  auto s = m.split(name);
  if (s.empty()) throw DomainError("dataset split '" + name + "' is empty");
  return s;
}

inline void emit(TrainResult& r, const TrainOptions& opt, Json line) {
  if (opt.on_metrics) opt.on_metrics(line);
  r.metrics.push_back(std::move(line));
}

}  // namespace detail

// ---------------------------------------------------------------- localizer

struct LocalizerSample {
  std::string case_id;
  LocalizerInput input;
  std::array<float, 4> target;  // tight truth box, normalised
  BoundingBox truth;            // tight truth box, original coordinates
  int width = 0, height = 0;
};

inline std::vector<LocalizerSample> localizer_samples(const std::vector<const ManifestEntry*>& entries,
                                                      const PreprocConfig& pre, int input_size) {
  std::vector<LocalizerSample> out(entries.size());
  parallel_for(static_cast<int>(entries.size()), [&](int i) {
    const ManifestEntry& e = *entries[i];
    const Cine c = read_cine(e.cine_path);
    LocalizerSample& s = out[i];
    s.case_id = e.case_id;
    s.input = localizer_input(c, pre, input_size);
    s.truth = e.bbox;
    s.target = normalized_box(e.bbox, s.input, pre.pad_to);
    s.width = c.width();
    s.height = c.height();
  });
  return out;
}

inline RTensor localizer_batch(const std::vector<LocalizerSample>& samples, const int* idx, int n, int size) {
  std::vector<float> x;
  x.reserve(static_cast<std::size_t>(n) * size * size);
  for (int i = 0; i < n; ++i) {
    const auto& p = samples[idx[i]].input.pixels;
    x.insert(x.end(), p.begin(), p.end());
  }
  return RTensor::from({n, 1, size, size}, std::move(x));
}

struct LocalizerEvaluation {
  double loss = 0.0;
  std::vector<double> iou;
  std::vector<BoundingBox> predicted;  // tight predicted boxes, original coordinates
  std::vector<bool> contained;         // truth box inside the expanded prediction
};

inline LocalizerEvaluation evaluate_localizer(Localizer& net, const std::vector<LocalizerSample>& samples,
                                              const PreprocConfig& pre) {
  LocalizerEvaluation ev;
  const int size = net.config().input_size;
  const int bs = net.config().batch_size;
  std::vector<int> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  double sq = 0.0;
  for (int start = 0; start < static_cast<int>(samples.size()); start += bs) {
    const int n = std::min(bs, static_cast<int>(samples.size()) - start);
    const RTensor out = net.predict(localizer_batch(samples, idx.data() + start, n, size));
    for (int i = 0; i < n; ++i) {
      const LocalizerSample& s = samples[start + i];
      const float* v = out.data().data() + 4 * i;
      for (int k = 0; k < 4; ++k) sq += (double(v[k]) - s.target[k]) * (double(v[k]) - s.target[k]);
      const BoundingBox b = denormalized_box(v, s.input, pre.pad_to);
      ev.predicted.push_back(b);
      const bool ok = b.valid();
      ev.iou.push_back(ok ? iou(b, s.truth) : 0.0);
      bool inside = false;
      if (ok) {
        const BoundingBox roi = expanded_roi(b, s.width, s.height, pre);
        inside = roi.x_min <= s.truth.x_min && roi.y_min <= s.truth.y_min && roi.x_max >= s.truth.x_max &&
                 roi.y_max >= s.truth.y_max;
      }
      ev.contained.push_back(inside);
    }
  }
  ev.loss = sq / (4.0 * samples.size());
  return ev;
}

inline Json localizer_metrics(const LocalizerEvaluation& ev) {
  const MeanSd m = mean_sd(ev.iou);
  int low = 0, low_uncontained = 0;
  for (std::size_t i = 0; i < ev.iou.size(); ++i) {
    if (ev.iou[i] < 0.5) {
      ++low;
      if (!ev.contained[i]) ++low_uncontained;
    }
  }
  return Json{{"loss", ev.loss},
              {"mean_iou", m.mean},
              {"sd_iou", m.sd},
              {"min_iou", *std::min_element(ev.iou.begin(), ev.iou.end())},
              {"n_iou_below_0.5", low},
              {"n_iou_below_0.5_uncontained", low_uncontained}};
}

/// Fits the localizer to the tight truth boxes of the train split. The
/// regression target is never expanded; expansion belongs to inference.
inline TrainResult train_localizer(const Manifest& manifest, const LocalizerConfig& cfg, const TrainOptions& opt) {
  cfg.validate();
  if (opt.epochs < 1) throw DomainError("train_localizer: epochs must be >= 1");
  const auto train = localizer_samples(detail::split_or_throw(manifest, "train"), opt.preprocess, cfg.input_size);
  const auto val = localizer_samples(manifest.split("val"), opt.preprocess, cfg.input_size);

  Localizer net(cfg, opt.seed);
  nn::Adam<Real> adam(net.params().trainable(), cfg.schedule);
  std::mt19937_64 dropout_rng(opt.seed ^ 0xd20u);
  TrainResult result;
  const int n = static_cast<int>(train.size());
  int step = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const auto order = detail::epoch_order(n, opt.seed, epoch);
    double sum = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size, ++step) {
      const int b = std::min(cfg.batch_size, n - start);
      std::vector<float> y;
      for (int i = 0; i < b; ++i) {
        const auto& t = train[order[start + i]].target;
        y.insert(y.end(), t.begin(), t.end());
      }
      net.params().zero_grad();
      const RTensor pred = net.forward(localizer_batch(train, order.data() + start, b, cfg.input_size), true,
                                       dropout_rng);
      RTensor loss = nn::bbox_mse_loss(pred, RTensor::from({b, 4}, std::move(y)));
      const double l = loss.item();
      detail::check_finite(l, epoch, step);
      loss.backward();
      adam.step(epoch);
      result.step_losses.push_back(l);
      sum += l * b;
    }
    detail::emit(result, opt,
                 Json{{"epoch", epoch}, {"split", "train"}, {"loss", sum / n}, {"lr", cfg.schedule.lr(epoch)}});
    if (!val.empty()) {
      Json line = localizer_metrics(evaluate_localizer(net, val, opt.preprocess));
      line["epoch"] = epoch;
      line["split"] = "val";
      line["lr"] = cfg.schedule.lr(epoch);
      detail::emit(result, opt, line);
    }
  }
  result.final_val = result.metrics.back();
  result.checkpoint = make_checkpoint(net, opt.preprocess, opt.epochs, opt.seed, adam.steps(),
                                      Json{{"provenance", provenance(opt.config)}});
  return result;
}

// ------------------------------------------------------------------ tracker

struct TrackerSample {
  std::string case_id;
  TrackerInput input;
  std::vector<float> truth_crop;  // frames x 336, crop pixels
  LandmarkSequence truth;         // original coordinates, real frames only (at most cfg.frames)
  double pixel_spacing_mm = 1.4;
};

/// Crops with the expanded truth box (teacher forcing).
inline std::vector<TrackerSample> tracker_samples(const std::vector<const ManifestEntry*>& entries,
                                                  const PreprocConfig& pre, const TrackerConfig& cfg) {
  std::vector<TrackerSample> out(entries.size());
  parallel_for(static_cast<int>(entries.size()), [&](int i) {
    const ManifestEntry& e = *entries[i];
    const Cine c = read_cine(e.cine_path);
    const LandmarkFile lf = read_landmarks(e.landmarks_path);
    TrackerSample& s = out[i];
    s.case_id = e.case_id;
    s.input = tracker_input(c, expanded_roi(e.bbox, c.width(), c.height(), pre), pre, cfg);
    s.truth_crop = crop_space_truth(lf.sequence, s.input.transform, cfg.frames);
    s.truth = lf.sequence;
    if (s.truth.size() > cfg.frames) s.truth.frames.resize(cfg.frames);
    s.pixel_spacing_mm = c.pixel_spacing_mm;
  });
  return out;
}

struct TrackerBatch {
  RTensor x;
  RTensor truth;  // crop pixels
  std::vector<double> mask;
};

inline TrackerBatch tracker_batch(const std::vector<TrackerSample>& samples, const int* idx, int n,
                                  const TrackerConfig& cfg) {
  TrackerBatch b;
  std::vector<float> x, y;
  for (int i = 0; i < n; ++i) {
    const TrackerSample& s = samples[idx[i]];
    x.insert(x.end(), s.input.pixels.begin(), s.input.pixels.end());
    y.insert(y.end(), s.truth_crop.begin(), s.truth_crop.end());
    b.mask.insert(b.mask.end(), s.input.mask.begin(), s.input.mask.end());
  }
  b.x = RTensor::from({n, cfg.frames, cfg.input_size, cfg.input_size}, std::move(x));
  b.truth = RTensor::from({n, cfg.frames, nn::kCoordsPerFrame}, std::move(y));
  return b;
}

/// Landmark sequence (original coordinates, real frames only) from one row of tracker output.
inline LandmarkSequence sequence_from_output(const float* row, const TrackerInput& in) {
  LandmarkSequence seq;
  const int frames = std::min(in.original_frames, static_cast<int>(in.mask.size()));
  for (int t = 0; t < frames; ++t) seq.frames.push_back(grid_from_output(row + t * nn::kCoordsPerFrame, in.transform));
  return seq;
}

struct TrackerEvaluation {
  nn::LossBreakdown loss;                 // averaged over cases
  std::vector<EvalCase> pred, truth;      // original coordinates
  std::vector<double> es_midwall_error;   // predicted - truth at the truth ES frame
  std::vector<double> es_radial_error;
  std::vector<double> rms_ed_mm, rms_es_mm;
};

inline TrackerEvaluation evaluate_tracker(Tracker& net, const std::vector<TrackerSample>& samples, double omega) {
  TrackerEvaluation ev;
  const TrackerConfig& cfg = net.config();
  const int n_total = static_cast<int>(samples.size());
  std::vector<int> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int start = 0; start < n_total; start += cfg.batch_size) {
    const int n = std::min(cfg.batch_size, n_total - start);
    const TrackerBatch b = tracker_batch(samples, idx.data() + start, n, cfg);
    const RTensor out = net.predict(b.x);
    {
      nn::NoGradGuard ng;
      const auto lb =
          nn::composite_tracking_loss(nn::scale(out, Real(cfg.input_size)), b.truth, omega, b.mask).breakdown;
      const double w = double(n) / n_total;
      ev.loss.total += w * lb.total;
      ev.loss.mse_position += w * lb.mse_position;
      ev.loss.radial_term += w * lb.radial_term;
      ev.loss.circ_term += w * lb.circ_term;
      ev.loss.omega = omega;
    }
    for (int i = 0; i < n; ++i) {
      const TrackerSample& s = samples[start + i];
      const float* row = out.data().data() + static_cast<std::size_t>(i) * cfg.frames * nn::kCoordsPerFrame;
      EvalCase p{s.case_id, sequence_from_output(row, s.input), s.pixel_spacing_mm, ""};
      EvalCase t{s.case_id, s.truth, s.pixel_spacing_mm, ""};
      const SliceStrainCurve tc = strain_curve(t.landmarks);
      const SliceStrainCurve pc = strain_curve(p.landmarks);
      const int es = tc.es_frame;
      ev.es_midwall_error.push_back(pc.per_frame[es].eps_C_midwall - tc.per_frame[es].eps_C_midwall);
      ev.es_radial_error.push_back(pc.per_frame[es].eps_R - tc.per_frame[es].eps_R);
      ev.rms_ed_mm.push_back(rms_position_error(p.landmarks.frames[0], t.landmarks.frames[0], s.pixel_spacing_mm));
      ev.rms_es_mm.push_back(rms_position_error(p.landmarks.frames[es], t.landmarks.frames[es], s.pixel_spacing_mm));
      ev.pred.push_back(std::move(p));
      ev.truth.push_back(std::move(t));
    }
  }
  ev.loss.omega = omega;
  return ev;
}

inline Json tracker_metrics(const TrackerEvaluation& ev) {
  const MeanSd mid = mean_sd(ev.es_midwall_error);
  return Json{{"loss", ev.loss.total},
              {"mse_position", ev.loss.mse_position},
              {"radial_term", ev.loss.radial_term},
              {"circ_term", ev.loss.circ_term},
              {"es_eps_C_midwall_bias", mid.mean},
              {"es_eps_C_midwall_sd", mid.sd},
              {"es_eps_R_bias", mean_sd(ev.es_radial_error).mean},
              {"rms_mm_ed", mean_sd(ev.rms_ed_mm).mean},
              {"rms_mm_es", mean_sd(ev.rms_es_mm).mean}};
}

inline TrainResult train_tracker(const Manifest& manifest, const TrackerConfig& cfg, const TrainOptions& opt) {
  cfg.validate();
  if (opt.epochs < 1) throw DomainError("train_tracker: epochs must be >= 1");
  PreprocConfig pre = opt.preprocess;
  pre.crop_to = cfg.input_size;
  const auto train = tracker_samples(detail::split_or_throw(manifest, "train"), pre, cfg);
  const auto val = tracker_samples(manifest.split("val"), pre, cfg);

  Tracker net(cfg, opt.seed, pre.expand_fraction);
  nn::Adam<Real> adam(net.params().trainable(), cfg.schedule);
  TrainResult result;
  const int n = static_cast<int>(train.size());
  int step = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const auto order = detail::epoch_order(n, opt.seed, epoch);
    double total = 0.0, mse = 0.0, rad = 0.0, circ = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size, ++step) {
      const int b = std::min(cfg.batch_size, n - start);
      const TrackerBatch batch = tracker_batch(train, order.data() + start, b, cfg);
      net.params().zero_grad();
      const RTensor pred = nn::scale(net.forward(batch.x, true), Real(cfg.input_size));
      auto loss = nn::composite_tracking_loss(pred, batch.truth, opt.omega, batch.mask);
      detail::check_finite(loss.breakdown.total, epoch, step);
      loss.total.backward();
      adam.step(epoch);
      result.step_losses.push_back(loss.breakdown.total);
      total += loss.breakdown.total * b;
      mse += loss.breakdown.mse_position * b;
      rad += loss.breakdown.radial_term * b;
      circ += loss.breakdown.circ_term * b;
    }
    detail::emit(result, opt,
                 Json{{"epoch", epoch},
                      {"split", "train"},
                      {"loss", total / n},
                      {"mse_position", mse / n},
                      {"radial_term", rad / n},
                      {"circ_term", circ / n},
                      {"omega", opt.omega},
                      {"lr", cfg.schedule.lr(epoch)}});
    if (!val.empty()) {
      Json line = tracker_metrics(evaluate_tracker(net, val, opt.omega));
      line["epoch"] = epoch;
      line["split"] = "val";
      line["lr"] = cfg.schedule.lr(epoch);
      detail::emit(result, opt, line);
    }
  }
  result.final_val = result.metrics.back();
  result.checkpoint = make_checkpoint(net, pre, opt.epochs, opt.seed, adam.steps(),
                                      Json{{"omega", opt.omega}, {"provenance", provenance(opt.config)}});
  return result;
}

}  // namespace tagstrain
