#pragma once

// Fixed input conditioning: spatial zero-padding, temporal length
// normalisation, same-box ROI crop with bicubic resampling, and per-cine
// intensity normalisation. The CropTransform record carries everything needed
// to move landmarks between original, padded and crop coordinates.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tagstrain/geometry.hpp"
#include "tagstrain/image.hpp"
#include "tagstrain/json_util.hpp"

namespace tagstrain {

enum class Normalization { kZScore, kMinMax, kNone };

inline std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::kZScore: return "zscore";
    case Normalization::kMinMax: return "minmax";
    case Normalization::kNone: return "none";
  }
  return "none";
}

inline Normalization normalization_from_string(const std::string& s) {
  if (s == "zscore") return Normalization::kZScore;
  if (s == "minmax") return Normalization::kMinMax;
  if (s == "none") return Normalization::kNone;
  throw ConfigError("unknown normalization '" + s + "'");
}

struct PreprocConfig {
  int pad_to = 256;
  int target_frames = 20;
  int crop_to = 128;
  double expand_fraction = 0.6;
  Normalization normalization = Normalization::kZScore;
};

/// Original -> padded: add (pad_cols, pad_rows); padded -> crop: map_coords(box, crop_to).
struct CropTransform {
  BoundingBox box;  // in padded coordinates
  int crop_to = 128;
  int pad_rows = 0;
  int pad_cols = 0;

  Point2 to_crop(Point2 original) const {
    return map_coords(original + Point2{double(pad_cols), double(pad_rows)}, box, crop_to, crop_to,
                      MapDirection::kForward);
  }
  Point2 to_original(Point2 crop) const {
    return map_coords(crop, box, crop_to, crop_to, MapDirection::kInverse) -
           Point2{double(pad_cols), double(pad_rows)};
  }
  LandmarkGrid to_crop(const LandmarkGrid& g) const {
    LandmarkGrid out;
    for (int i = 0; i < kLandmarks; ++i) out.points[i] = to_crop(g.points[i]);
    return out;
  }
  LandmarkGrid to_original(const LandmarkGrid& g) const {
    LandmarkGrid out;
    for (int i = 0; i < kLandmarks; ++i) out.points[i] = to_original(g.points[i]);
    return out;
  }
  LandmarkSequence to_original(const LandmarkSequence& s) const {
    LandmarkSequence out;
    for (const auto& g : s.frames) out.frames.push_back(to_original(g));
    return out;
  }

  friend bool operator==(const CropTransform&, const CropTransform&) = default;
};

inline Json crop_transform_to_json(const CropTransform& t) {
  return Json{{"box", to_json_value(t.box)},
              {"crop_to", t.crop_to},
              {"pad_offsets", Json::array({t.pad_rows, t.pad_cols})}};
}

inline CropTransform crop_transform_from_json(const Json& j) {
  CropTransform t;
  t.box = box_from_json(j.at("box"));
  t.crop_to = j.at("crop_to").get<int>();
  t.pad_rows = j.at("pad_offsets").at(0).get<int>();
  t.pad_cols = j.at("pad_offsets").at(1).get<int>();
  return t;
}

struct PaddedCine {
  Cine cine;
  int pad_rows = 0;  // rows added on top
  int pad_cols = 0;  // columns added on the left
};

/// Zero border up to pad_to x pad_to; odd remainders put the extra pixel bottom/right.
inline PaddedCine pad_spatial(const Cine& c, int pad_to) {
  if (c.width() > pad_to || c.height() > pad_to) {
    throw DomainError("pad_spatial: input " + std::to_string(c.width()) + "x" +
                      std::to_string(c.height()) + " exceeds pad size " + std::to_string(pad_to));
  }
  PaddedCine out;
  out.pad_rows = (pad_to - c.height()) / 2;
  out.pad_cols = (pad_to - c.width()) / 2;
  out.cine.pixel_spacing_mm = c.pixel_spacing_mm;
  out.cine.case_id = c.case_id;
  for (const Image& f : c.frames) {
    Image p(pad_to, pad_to, 0.0);
    for (int y = 0; y < f.height; ++y) {
      for (int x = 0; x < f.width; ++x) p.at(x + out.pad_cols, y + out.pad_rows) = f.at(x, y);
    }
    out.cine.frames.push_back(std::move(p));
  }
  return out;
}

/// Appends all-zero frames or truncates to the first `target_frames`.
inline Cine normalize_frames(const Cine& c, int target_frames) {
  if (c.frame_count() < 1) throw DomainError("normalize_frames: cine has no frames");
  Cine out = c;
  if (out.frame_count() > target_frames) out.frames.resize(target_frames);
  while (out.frame_count() < target_frames) out.frames.emplace_back(c.width(), c.height(), 0.0);
  return out;
}

/// 1 for real frames, 0 for padded ones.
inline std::vector<std::uint8_t> frame_mask(int original_frames, int target_frames) {
  std::vector<std::uint8_t> mask(target_frames, 0);
  for (int t = 0; t < std::min(original_frames, target_frames); ++t) mask[t] = 1;
  return mask;
}

namespace detail {

// Cubic convolution kernel, a = -0.5.
inline double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

struct Taps {
  int first = 0;                // source index of weight[0]
  std::vector<double> weight;  // normalised to sum 1
};

// When shrinking (step > 1) the kernel is stretched by the step so it
// low-passes before decimating; otherwise it is the plain 4-tap kernel.
inline std::vector<Taps> cubic_taps(double origin, double step, int count) {
  const double stretch = std::max(1.0, step);
  const double support = 2.0 * stretch;
  std::vector<Taps> taps(count);
  for (int k = 0; k < count; ++k) {
    const double f = origin + (k + 0.5) * step - 0.5;
    const int lo = static_cast<int>(std::floor(f - support)) + 1;
    const int hi = static_cast<int>(std::ceil(f + support)) - 1;
    Taps& t = taps[k];
    t.first = lo;
    double sum = 0.0;
    for (int i = lo; i <= hi; ++i) {
      t.weight.push_back(cubic_kernel((f - i) / stretch));
      sum += t.weight.back();
    }
    for (double& w : t.weight) w /= sum;
  }
  return taps;
}

}  // namespace detail

/// Resamples the region `box` of `img` onto an out_w x out_h grid with
/// cubic convolution (stretched when shrinking) and edge clamping.
inline Image crop_resample(const Image& img, const BoundingBox& box, int out_w, int out_h) {
  if (img.width < 2 || img.height < 2) throw DomainError("resample needs at least a 2x2 image");
  if (out_w <= 0 || out_h <= 0) throw DomainError("resample output must be non-empty");
  const auto tx = detail::cubic_taps(box.x_min, box.width() / out_w, out_w);
  const auto ty = detail::cubic_taps(box.y_min, box.height() / out_h, out_h);
  // Horizontal pass over the source rows the vertical taps need.
  const int y_lo = ty.front().first;
  const int y_hi = ty.back().first + static_cast<int>(ty.back().weight.size()) - 1;
  std::vector<double> rows(static_cast<std::size_t>(y_hi - y_lo + 1) * out_w);
  for (int y = y_lo; y <= y_hi; ++y) {
    double* row = rows.data() + static_cast<std::size_t>(y - y_lo) * out_w;
    for (int k = 0; k < out_w; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < tx[k].weight.size(); ++j) {
        s += tx[k].weight[j] * img.clamped(tx[k].first + static_cast<int>(j), y);
      }
      row[k] = s;
    }
  }
  Image out(out_w, out_h);
  for (int l = 0; l < out_h; ++l) {
    for (int k = 0; k < out_w; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < ty[l].weight.size(); ++i) {
        s += ty[l].weight[i] * rows[static_cast<std::size_t>(ty[l].first + static_cast<int>(i) - y_lo) * out_w + k];
      }
      out.at(k, l) = s;
    }
  }
  return out;
}

inline Image resample_bicubic(const Image& img, int out_w, int out_h) {
  return crop_resample(img, BoundingBox{0.0, 0.0, double(img.width), double(img.height)}, out_w,
                       out_h);
}

/// In-place intensity normalisation with statistics over all frames jointly.
inline void normalize_intensity(std::vector<Image>& frames, Normalization mode) {
  if (mode == Normalization::kNone || frames.empty()) return;
  if (mode == Normalization::kZScore) {
    double sum = 0.0, n = 0.0;
    for (const Image& f : frames) {
      for (double v : f.data) sum += v;
      n += double(f.data.size());
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (const Image& f : frames) {
      for (double v : f.data) ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / n);
    const double inv = sd > 0.0 ? 1.0 / sd : 1.0;
    for (Image& f : frames) {
      for (double& v : f.data) v = (v - mean) * inv;
    }
    return;
  }
  double lo = frames.front().data.front(), hi = lo;
  for (const Image& f : frames) {
    for (double v : f.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double inv = hi > lo ? 1.0 / (hi - lo) : 1.0;
  for (Image& f : frames) {
    for (double& v : f.data) v = (v - lo) * inv;
  }
}

struct CroppedCine {
  Cine cine;
  CropTransform transform;
};

/// Crops every frame with the same box, resamples to crop_to x crop_to and
/// normalises intensities over the cropped cine. `box` is in the cine's own
/// coordinates; pad offsets are recorded for the original-space mapping.
inline CroppedCine crop_pipeline(const Cine& c, const BoundingBox& box, const PreprocConfig& cfg,
                                 int pad_rows = 0, int pad_cols = 0) {
  const BoundingBox image_box{0.0, 0.0, double(c.width()), double(c.height())};
  const BoundingBox clipped{std::max(box.x_min, image_box.x_min), std::max(box.y_min, image_box.y_min),
                            std::min(box.x_max, image_box.x_max), std::min(box.y_max, image_box.y_max)};
  if (!clipped.valid()) throw DomainError("crop_pipeline: box does not intersect the image");
  CroppedCine out;
  out.transform = CropTransform{clipped, cfg.crop_to, pad_rows, pad_cols};
  out.cine.pixel_spacing_mm = c.pixel_spacing_mm;
  out.cine.case_id = c.case_id;
  out.cine.frames.reserve(c.frames.size());
  for (const Image& f : c.frames) {
    out.cine.frames.push_back(crop_resample(f, clipped, cfg.crop_to, cfg.crop_to));
  }
  normalize_intensity(out.cine.frames, cfg.normalization);
  return out;
}

inline Json preproc_config_to_json(const PreprocConfig& c) {
  return Json{{"pad_to", c.pad_to},
              {"target_frames", c.target_frames},
              {"crop_to", c.crop_to},
              {"expand_fraction", c.expand_fraction},
              {"normalization", to_string(c.normalization)}};
}

inline PreprocConfig preproc_config_from_json(const Json& j, const std::string& path,
                                              PreprocConfig c = {}) {
  JsonObjectReader r(j, path);
  r.get("pad_to", c.pad_to);
  r.get("target_frames", c.target_frames);
  r.get("crop_to", c.crop_to);
  r.get("expand_fraction", c.expand_fraction);
  std::string norm = to_string(c.normalization);
  if (r.get("normalization", norm)) c.normalization = normalization_from_string(norm);
  r.finish();
  if (c.crop_to <= 0 || c.pad_to <= 0 || c.target_frames < 2) {
    throw ConfigError(path + ": sizes must be positive and target_frames >= 2");
  }
  return c;
}

}  // namespace tagstrain
