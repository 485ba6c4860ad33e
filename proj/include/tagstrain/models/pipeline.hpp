#pragma once

// Inference: localize on the end-diastolic frame, crop every frame with the
// expanded box, track, map back to the original image and compute strain.

#include <chrono>
#include <stdexcept>
#include <string>

#include "tagstrain/models/checkpoint.hpp"
#include "tagstrain/models/inputs.hpp"
#include "tagstrain/strain.hpp"

namespace tagstrain {

/// An error raised inside one pipeline stage; what() starts with the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& msg)
      : std::runtime_error(stage + ": " + msg), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct LocalizeResult {
  BoundingBox predicted;  // raw prediction in original coordinates (may be invalid)
  BoundingBox roi;        // expanded and clamped; the full image when degenerate
  bool degenerate = false;
};

/// Predicted box for a raw cine's first frame. A prediction with min >= max is
/// flagged and the region of interest falls back to the whole image.
inline LocalizeResult localize(Localizer& net, const PreprocConfig& pre, const Cine& raw) {
  const LocalizerInput in = localizer_input(raw, pre, net.config().input_size);
  const int s = net.config().input_size;
  const RTensor out = net.predict(RTensor::from({1, 1, s, s}, in.pixels));
  LocalizeResult r;
  r.predicted = denormalized_box(out.data().data(), in, pre.pad_to);
  r.degenerate = !r.predicted.valid();
  r.roi = r.degenerate ? BoundingBox{0.0, 0.0, double(raw.width()), double(raw.height())}
                       : expanded_roi(r.predicted, raw.width(), raw.height(), pre);
  return r;
}

/// Crop-space landmarks for every one of the tracker's frames.
inline LandmarkSequence track(Tracker& net, const TrackerInput& in) {
  const TrackerConfig& cfg = net.config();
  const std::size_t frame_px = static_cast<std::size_t>(cfg.input_size) * cfg.input_size;
  if (in.pixels.size() != frame_px * cfg.frames) {
    throw ShapeError("track: input holds " + std::to_string(in.pixels.size() / std::max<std::size_t>(frame_px, 1)) +
                     " frames, tracker expects " + std::to_string(cfg.frames));
  }
  const RTensor out = net.predict(RTensor::from({1, cfg.frames, cfg.input_size, cfg.input_size}, in.pixels));
  LandmarkSequence seq;
  const float* v = out.data().data();
  for (int t = 0; t < cfg.frames; ++t) {
    LandmarkGrid g;
    for (int i = 0; i < kLandmarks; ++i) {
      const std::size_t k = static_cast<std::size_t>(t) * nn::kCoordsPerFrame + 2 * i;
      g.points[i] = {v[k] * double(cfg.input_size), v[k + 1] * double(cfg.input_size)};
    }
    seq.frames.push_back(g);
  }
  return seq;
}

struct Models {
  Localizer localizer;
  Tracker tracker;
  PreprocConfig preprocess;  // localizer's; the tracker's differs only in crop size
};

/// Loads both checkpoints and checks that they were trained with the same
/// padding, frame count, box expansion and intensity normalisation.
inline Models load_models(const std::string& localizer_path, const std::string& tracker_path) {
  const Checkpoint lc = load_checkpoint(localizer_path);
  const Checkpoint tc = load_checkpoint(tracker_path);
  Models m{localizer_from_checkpoint(lc), tracker_from_checkpoint(tc), checkpoint_preprocess(lc)};
  const PreprocConfig tp = checkpoint_preprocess(tc);
  if (tp.pad_to != m.preprocess.pad_to || tp.expand_fraction != m.preprocess.expand_fraction ||
      tp.normalization != m.preprocess.normalization || tp.target_frames != m.preprocess.target_frames) {
    throw ConfigError("localizer and tracker checkpoints were trained with different preprocessing");
  }
  if (m.tracker.config().frames != tp.target_frames) {
    throw ConfigError("tracker frame count differs from its preprocessing target_frames");
  }
  return m;
}

struct PipelineResult {
  LocalizeResult box;
  CropTransform transform;
  LandmarkSequence landmarks;  // original coordinates, one grid per input frame (up to T)
  SliceStrainCurve strain;
  double track_seconds = 0.0;  // wall time of the tracking stage
};

inline PipelineResult full_pipeline(Models& m, const Cine& raw) {
  PipelineResult r;
  auto stage = [](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
  };
  stage("validate", [&] { raw.validate(); });
  stage("localize", [&] { r.box = localize(m.localizer, m.preprocess, raw); });
  TrackerInput in;
  stage("crop", [&] { in = tracker_input(raw, r.box.roi, m.preprocess, m.tracker.config()); });
  r.transform = in.transform;
  LandmarkSequence crop_seq;
  stage("track", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    crop_seq = track(m.tracker, in);
    r.track_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });
  stage("map", [&] {
    crop_seq.frames.resize(std::min(in.original_frames, crop_seq.size()));
    r.landmarks = in.transform.to_original(crop_seq);
  });
  stage("strain", [&] { r.strain = strain_curve(r.landmarks); });
  return r;
}

}  // namespace tagstrain
