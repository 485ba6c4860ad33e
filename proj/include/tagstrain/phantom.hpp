#pragma once

// Analytic tagged-image phantom: a 2-D incompressible annulus contracting and
// twisting about its centre, imaged with a SPAMM tag grid that is attached to
// the material and fades over the cycle. Every landmark position and strain is
// known in closed form.
//
// Polar motion about the centre, for a material radius r0 at frame t:
//   r_endo(t) = r_endo * (1 - c * act(t))
//   r(r0, t)  = sqrt(r_endo(t)^2 + r0^2 - r_endo^2)      (myocardium)
//   theta     = theta0 + phi_max * act(t)
// The cavity scales linearly; beyond the epicardium the map blends back to
// the identity over `blend_width` pixels of material radius.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "tagstrain/geometry.hpp"
#include "tagstrain/image.hpp"
#include "tagstrain/json_util.hpp"
#include "tagstrain/strain.hpp"

namespace tagstrain {

struct PhantomSpec {
  int image_w = 256;
  int image_h = 256;
  double pixel_spacing_mm = 1.4;
  int frames = 20;
  AnnulusSpec annulus{};
  double peak_endo_contraction = 0.1;  // c: fractional endocardial radius loss at ES
  double peak_rotation = 0.0;          // phi_max, radians
  int es_frame = 9;
  double diastolic_residual = 0.15;  // activation left at the final frame
  double tag_spacing_mm = 6.0;
  double tag_angle = 0.0;
  double tag_depth = 0.8;
  double fade_rate = 41.0 / 850.0;  // frame interval / T1, per frame
  double noise_sigma = 0.0;
  double background_level = 1.0;  // myocardium
  double blood_level = 0.2;
  double outside_level = 0.5;
  double blend_width = 8.0;
  std::uint64_t rng_seed = 0;

  double tag_spacing_px() const { return tag_spacing_mm / pixel_spacing_mm; }

  void validate() const {
    annulus.validate();
    if (image_w < 2 || image_h < 2) throw DomainError("phantom image must be at least 2x2");
    if (!(pixel_spacing_mm > 0.0)) throw DomainError("phantom pixel spacing must be > 0");
    if (frames < 2) throw DomainError("phantom needs at least two frames");
    if (!(peak_endo_contraction >= 0.0 && peak_endo_contraction < 0.5)) {
      throw DomainError("phantom contraction must lie in [0, 0.5)");
    }
    if (es_frame <= 0 || es_frame >= frames) throw DomainError("phantom es_frame out of range");
    if (!(tag_spacing_mm > 0.0)) throw DomainError("phantom tag spacing must be > 0");
    if (!(tag_depth >= 0.0 && tag_depth <= 1.0)) throw DomainError("tag depth must be in [0, 1]");
    if (!(noise_sigma >= 0.0)) throw DomainError("noise sigma must be >= 0");
    if (!(blend_width > 0.0)) throw DomainError("blend width must be > 0");
    if (!(diastolic_residual >= 0.0 && diastolic_residual <= 1.0)) {
      throw DomainError("diastolic residual must be in [0, 1]");
    }
  }
};

/// Raised-cosine contraction profile: 0 at frame 0, 1 at ES, relaxing to
/// `diastolic_residual` at the last frame.
inline double activation(int t, const PhantomSpec& spec) {
  const double pi = std::numbers::pi;
  if (t <= 0) return 0.0;
  if (t <= spec.es_frame) return 0.5 * (1.0 - std::cos(pi * t / spec.es_frame));
  const int last = spec.frames - 1;
  if (last <= spec.es_frame) return 1.0;
  const double u = static_cast<double>(t - spec.es_frame) / (last - spec.es_frame);
  const double res = spec.diastolic_residual;
  return res + (1.0 - res) * 0.5 * (1.0 + std::cos(pi * std::min(u, 1.0)));
}

namespace detail {

struct FrameMotion {
  double r_endo0, r_epi0, r_endo_t, twist, blend;
};

inline FrameMotion frame_motion(int t, const PhantomSpec& spec) {
  const double act = activation(t, spec);
  return {spec.annulus.r_endo, spec.annulus.r_epi,
          spec.annulus.r_endo * (1.0 - spec.peak_endo_contraction * act),
          spec.peak_rotation * act, spec.blend_width};
}

inline double inner_radius_map(double r0, const FrameMotion& m) {
  if (r0 < m.r_endo0) return r0 * m.r_endo_t / m.r_endo0;
  return std::sqrt(m.r_endo_t * m.r_endo_t + r0 * r0 - m.r_endo0 * m.r_endo0);
}

/// 1 inside the epicardium, smoothstep down to 0 at r_epi + blend.
inline double blend_weight(double r0, const FrameMotion& m) {
  if (r0 <= m.r_epi0) return 1.0;
  const double s = (r0 - m.r_epi0) / m.blend;
  if (s >= 1.0) return 0.0;
  return 1.0 - s * s * (3.0 - 2.0 * s);
}

inline double radius_map(double r0, const FrameMotion& m) {
  const double w = blend_weight(r0, m);
  if (w == 1.0) return inner_radius_map(r0, m);
  return r0 + w * (inner_radius_map(r0, m) - r0);
}

inline double inverse_radius_map(double r, const FrameMotion& m) {
  if (r <= m.r_endo_t) return r * m.r_endo0 / m.r_endo_t;
  const double r_epi_t = inner_radius_map(m.r_epi0, m);
  if (r <= r_epi_t) return std::sqrt(r * r - m.r_endo_t * m.r_endo_t + m.r_endo0 * m.r_endo0);
  const double band_end = m.r_epi0 + m.blend;
  if (r >= band_end) return r;
  // radius_map is increasing on the band; bisect.
  double lo = m.r_epi0, hi = band_end;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (radius_map(mid, m) < r) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Deformed position at frame t of the material point p_ref.
inline Point2 deform(Point2 p_ref, int t, const PhantomSpec& spec) {
  const auto m = detail::frame_motion(t, spec);
  const Point2 d = p_ref - spec.annulus.center;
  const double r0 = std::hypot(d.x, d.y);
  if (r0 == 0.0) return p_ref;
  const double r = detail::radius_map(r0, m);
  const double theta = std::atan2(d.y, d.x) + detail::blend_weight(r0, m) * m.twist;
  return {spec.annulus.center.x + r * std::cos(theta), spec.annulus.center.y + r * std::sin(theta)};
}

/// Material (frame 0) position of the point seen at x in frame t.
inline Point2 undeform(Point2 x, int t, const PhantomSpec& spec) {
  const auto m = detail::frame_motion(t, spec);
  const Point2 d = x - spec.annulus.center;
  const double r = std::hypot(d.x, d.y);
  if (r == 0.0) return x;
  const double r0 = detail::inverse_radius_map(r, m);
  const double theta0 = std::atan2(d.y, d.x) - detail::blend_weight(r0, m) * m.twist;
  return {spec.annulus.center.x + r0 * std::cos(theta0),
          spec.annulus.center.y + r0 * std::sin(theta0)};
}

inline double tag_depth_at(int t, const PhantomSpec& spec) {
  return spec.tag_depth * std::exp(-spec.fade_rate * t);
}

/// Noise-free intensity at continuous position x in frame t.
inline double intensity_at(Point2 x, int t, const PhantomSpec& spec) {
  const Point2 x0 = undeform(x, t, spec);
  const double r0 = distance(x0, spec.annulus.center);
  if (r0 < spec.annulus.r_endo) return spec.blood_level;
  const double base = r0 <= spec.annulus.r_epi ? spec.background_level : spec.outside_level;
  const double a = tag_depth_at(t, spec);
  const double s = spec.tag_spacing_px();
  const double cu = std::cos(spec.tag_angle), su = std::sin(spec.tag_angle);
  const double pu = std::cos(std::numbers::pi * (cu * x0.x + su * x0.y) / s);
  const double pv = std::cos(std::numbers::pi * (-su * x0.x + cu * x0.y) / s);
  return base * (1.0 - a * pu * pu) * (1.0 - a * pv * pv);
}

namespace detail {

inline std::mt19937_64 frame_rng(const PhantomSpec& spec, int t) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.rng_seed),
                    static_cast<std::uint32_t>(spec.rng_seed >> 32),
                    static_cast<std::uint32_t>(t), 0x7a675u};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Frame t sampled at pixel centres, plus seeded Gaussian noise.
inline Image render_frame(int t, const PhantomSpec& spec) {
  Image img(spec.image_w, spec.image_h);
  for (int y = 0; y < spec.image_h; ++y) {
    for (int x = 0; x < spec.image_w; ++x) img.at(x, y) = intensity_at({x + 0.5, y + 0.5}, t, spec);
  }
  if (spec.noise_sigma > 0.0) {
    auto rng = detail::frame_rng(spec, t);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (double& v : img.data) v += noise(rng);
  }
  return img;
}

struct PhantomCase {
  Cine cine;
  LandmarkSequence truth_landmarks;
  BoundingBox truth_bbox;
  SliceStrainCurve truth_strain;
  PhantomSpec spec;
};

inline LandmarkSequence phantom_landmarks(const PhantomSpec& spec) {
  spec.validate();
  const LandmarkGrid ed = build_grid(spec.annulus);
  LandmarkSequence seq;
  seq.frames.resize(spec.frames);
  for (int t = 0; t < spec.frames; ++t) {
    for (int i = 0; i < kLandmarks; ++i) seq.frames[t].points[i] = deform(ed.points[i], t, spec);
  }
  return seq;
}

inline PhantomCase generate_case(const PhantomSpec& spec, bool render = true) {
  PhantomCase pc;
  pc.spec = spec;
  pc.truth_landmarks = phantom_landmarks(spec);
  pc.truth_bbox = landmarks_bbox(pc.truth_landmarks.frames.front());
  pc.truth_strain = strain_curve(pc.truth_landmarks);
  pc.cine.pixel_spacing_mm = spec.pixel_spacing_mm;
  if (render) {
    pc.cine.frames.reserve(spec.frames);
    for (int t = 0; t < spec.frames; ++t) pc.cine.frames.push_back(render_frame(t, spec));
  }
  return pc;
}

inline Json phantom_spec_to_json(const PhantomSpec& s) {
  return Json{{"image_w", s.image_w},
              {"image_h", s.image_h},
              {"pixel_spacing_mm", s.pixel_spacing_mm},
              {"frames", s.frames},
              {"annulus", annulus_to_json(s.annulus)},
              {"peak_endo_contraction", s.peak_endo_contraction},
              {"peak_rotation", s.peak_rotation},
              {"es_frame", s.es_frame},
              {"diastolic_residual", s.diastolic_residual},
              {"tag_spacing_mm", s.tag_spacing_mm},
              {"tag_angle", s.tag_angle},
              {"tag_depth", s.tag_depth},
              {"fade_rate", s.fade_rate},
              {"noise_sigma", s.noise_sigma},
              {"background_level", s.background_level},
              {"blood_level", s.blood_level},
              {"outside_level", s.outside_level},
              {"blend_width", s.blend_width},
              {"rng_seed", s.rng_seed}};
}

inline PhantomSpec phantom_spec_from_json(const Json& j, const std::string& path,
                                          PhantomSpec s = {}) {
  JsonObjectReader r(j, path);
  r.get("image_w", s.image_w);
  r.get("image_h", s.image_h);
  r.get("pixel_spacing_mm", s.pixel_spacing_mm);
  r.get("frames", s.frames);
  r.nested("annulus", [&](const Json& a, const std::string& p) {
    s.annulus = annulus_from_json(a, p, s.annulus);
  });
  r.get("peak_endo_contraction", s.peak_endo_contraction);
  r.get("peak_rotation", s.peak_rotation);
  r.get("es_frame", s.es_frame);
  r.get("diastolic_residual", s.diastolic_residual);
  r.get("tag_spacing_mm", s.tag_spacing_mm);
  r.get("tag_angle", s.tag_angle);
  r.get("tag_depth", s.tag_depth);
  r.get("fade_rate", s.fade_rate);
  r.get("noise_sigma", s.noise_sigma);
  r.get("background_level", s.background_level);
  r.get("blood_level", s.blood_level);
  r.get("outside_level", s.outside_level);
  r.get("blend_width", s.blend_width);
  r.get("rng_seed", s.rng_seed);
  r.finish();
  return s;
}

}  // namespace tagstrain
