#pragma once

// Network inputs built from raw cines. Training and inference share these so
// the two paths see identically prepared pixels.

#include <array>
#include <utility>
#include <vector>

#include "tagstrain/models/tracker.hpp"
#include "tagstrain/preprocess.hpp"

namespace tagstrain {

struct LocalizerInput {
  std::vector<float> pixels;  // input_size^2
  int pad_rows = 0;
  int pad_cols = 0;
};

/// Pads the end-diastolic (first) frame, resamples it to the network size and
/// normalises its intensities.
inline LocalizerInput localizer_input(const Cine& raw, const PreprocConfig& pre, int input_size) {
  if (raw.frame_count() < 1) throw DomainError("localizer input: cine has no frames");
  Cine ed;
  ed.frames.push_back(raw.frames.front());
  const PaddedCine padded = pad_spatial(ed, pre.pad_to);
  std::vector<Image> img{resample_bicubic(padded.cine.frames.front(), input_size, input_size)};
  normalize_intensity(img, pre.normalization);
  LocalizerInput out;
  out.pixels.assign(img.front().data.begin(), img.front().data.end());
  out.pad_rows = padded.pad_rows;
  out.pad_cols = padded.pad_cols;
  return out;
}

/// Box in original coordinates -> corners as fractions of the padded frame.
inline std::array<float, 4> normalized_box(const BoundingBox& b, const LocalizerInput& in, int pad_to) {
  const double s = 1.0 / pad_to;
  return {static_cast<float>((b.x_min + in.pad_cols) * s), static_cast<float>((b.y_min + in.pad_rows) * s),
          static_cast<float>((b.x_max + in.pad_cols) * s), static_cast<float>((b.y_max + in.pad_rows) * s)};
}

/// Inverse of normalized_box, without validity checks.
inline BoundingBox denormalized_box(const float* v, const LocalizerInput& in, int pad_to) {
  return BoundingBox{v[0] * double(pad_to) - in.pad_cols, v[1] * double(pad_to) - in.pad_rows,
                     v[2] * double(pad_to) - in.pad_cols, v[3] * double(pad_to) - in.pad_rows};
}

/// (rows on top, columns on the left) added when padding a w x h frame.
inline std::pair<int, int> pad_offsets(int w, int h, int pad_to) { return {(pad_to - h) / 2, (pad_to - w) / 2}; }

/// Expands a tight box about its centre and clamps it to the padded frame.
/// Input and output are in original coordinates.
inline BoundingBox expanded_roi(const BoundingBox& tight, int raw_w, int raw_h, const PreprocConfig& pre) {
  const auto [rows, cols] = pad_offsets(raw_w, raw_h, pre.pad_to);
  const BoundingBox shifted{tight.x_min + cols, tight.y_min + rows, tight.x_max + cols, tight.y_max + rows};
  const BoundingBox e = expand_box(shifted, pre.expand_fraction, pre.pad_to, pre.pad_to);
  return BoundingBox{e.x_min - cols, e.y_min - rows, e.x_max - cols, e.y_max - rows};
}

struct TrackerInput {
  std::vector<float> pixels;  // frames x input_size^2
  CropTransform transform;
  std::vector<double> mask;   // 1 for real frames, 0 for padding
  int original_frames = 0;
};

/// Pads, fixes the frame count, crops every frame with the region of interest
/// (original coordinates) and resamples to the tracker input size.
inline TrackerInput tracker_input(const Cine& raw, const BoundingBox& roi, const PreprocConfig& pre,
                                  const TrackerConfig& cfg) {
  PreprocConfig p = pre;
  p.crop_to = cfg.input_size;
  const PaddedCine padded = pad_spatial(raw, pre.pad_to);
  const Cine fixed = normalize_frames(padded.cine, cfg.frames);
  const BoundingBox roi_padded{roi.x_min + padded.pad_cols, roi.y_min + padded.pad_rows,
                               roi.x_max + padded.pad_cols, roi.y_max + padded.pad_rows};
  const CroppedCine crop = crop_pipeline(fixed, roi_padded, p, padded.pad_rows, padded.pad_cols);
  TrackerInput out;
  out.transform = crop.transform;
  out.original_frames = raw.frame_count();
  for (std::uint8_t m : frame_mask(raw.frame_count(), cfg.frames)) out.mask.push_back(m);
  out.pixels.reserve(static_cast<std::size_t>(cfg.frames) * cfg.input_size * cfg.input_size);
  for (const Image& f : crop.cine.frames) out.pixels.insert(out.pixels.end(), f.data.begin(), f.data.end());
  return out;
}

/// Truth landmarks in crop pixels, [frames x 336]. Frames past the end of the
/// sequence repeat its last frame (they are masked out of the loss).
inline std::vector<float> crop_space_truth(const LandmarkSequence& truth, const CropTransform& t, int frames) {
  if (truth.size() < 1) throw DomainError("tracker truth: empty landmark sequence");
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(frames) * nn::kCoordsPerFrame);
  for (int f = 0; f < frames; ++f) {
    const LandmarkGrid g = t.to_crop(truth.frames[std::min(f, truth.size() - 1)]);
    for (const Point2& p : g.points) {
      out.push_back(static_cast<float>(p.x));
      out.push_back(static_cast<float>(p.y));
    }
  }
  return out;
}

/// Network output row (normalised crop coordinates) -> landmark grid in original coordinates.
inline LandmarkGrid grid_from_output(const float* v, const CropTransform& t) {
  LandmarkGrid g;
  for (int i = 0; i < kLandmarks; ++i) {
    g.points[i] = t.to_original(Point2{v[2 * i] * double(t.crop_to), v[2 * i + 1] * double(t.crop_to)});
  }
  return g;
}

}  // namespace tagstrain
