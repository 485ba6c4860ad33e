#pragma once

// Green (Lagrangian) strain from landmark motion: eps = 1/2 (L_t^2 - L_0^2) / L_0^2.
// Radial strain uses the endo-to-epi chord along each spoke, circumferential
// strain the 24 wrap-around segments of a ring. Slice values are the mean of
// the per-segment strains.

#include <charconv>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "tagstrain/geometry.hpp"

namespace tagstrain {

struct SliceStrain {
  double eps_R = 0.0;
  double eps_C = 0.0;  // unweighted mean over all seven rings
  double eps_C_subendo = 0.0;
  double eps_C_midwall = 0.0;
  double eps_C_subepi = 0.0;

  friend bool operator==(const SliceStrain&, const SliceStrain&) = default;
};

struct SliceStrainCurve {
  std::vector<SliceStrain> per_frame;
  int es_frame = 0;
};

inline double green_strain(double l_ref, double l_t) {
  if (!(l_ref > 0.0)) throw DomainError("green_strain: reference length must be > 0");
  if (!(l_t >= 0.0)) throw DomainError("green_strain: length must be >= 0");
  return 0.5 * (l_t * l_t - l_ref * l_ref) / (l_ref * l_ref);
}

namespace detail {

inline double green_from_squares(double ref_sq, double cur_sq) {
  return 0.5 * (cur_sq / ref_sq - 1.0);
}

}  // namespace detail

inline double radial_strain(const LandmarkGrid& ref, const LandmarkGrid& cur) {
  double sum = 0.0;
  for (int k = 0; k < kSpokes; ++k) {
    const double ref_sq = squared_norm(ref.at(kRings - 1, k) - ref.at(0, k));
    if (!(ref_sq > 0.0)) {
      throw DegenerateGeometry("radial_strain: zero-length reference chord on spoke " +
                               std::to_string(k));
    }
    sum += detail::green_from_squares(ref_sq, squared_norm(cur.at(kRings - 1, k) - cur.at(0, k)));
  }
  return sum / kSpokes;
}

inline double circ_strain(const LandmarkGrid& ref, const LandmarkGrid& cur, int ring) {
  if (ring < 0 || ring >= kRings) throw DomainError("circ_strain: ring index out of range");
  double sum = 0.0;
  for (int k = 0; k < kSpokes; ++k) {
    const int next = (k + 1) % kSpokes;
    const double ref_sq = squared_norm(ref.at(ring, next) - ref.at(ring, k));
    if (!(ref_sq > 0.0)) {
      throw DegenerateGeometry("circ_strain: zero-length reference segment " + std::to_string(k) +
                               " on ring " + std::to_string(ring));
    }
    sum += detail::green_from_squares(ref_sq, squared_norm(cur.at(ring, next) - cur.at(ring, k)));
  }
  return sum / kSpokes;
}

inline SliceStrain slice_strain(const LandmarkGrid& ref, const LandmarkGrid& cur) {
  SliceStrain s;
  s.eps_R = radial_strain(ref, cur);
  double rings[kRings];
  double total = 0.0;
  for (int r = 0; r < kRings; ++r) {
    rings[r] = circ_strain(ref, cur, r);
    total += rings[r];
  }
  s.eps_C = total / kRings;
  s.eps_C_subendo = rings[kSubendoRing];
  s.eps_C_midwall = rings[kMidwallRing];
  s.eps_C_subepi = rings[kSubepiRing];
  return s;
}

/// Strains of every frame against frame 0. ES is the earliest frame with the
/// most negative midwall circumferential strain; all-zero (padded) frames are
/// skipped in that search.
inline SliceStrainCurve strain_curve(const LandmarkSequence& seq) {
  if (seq.size() < 2) throw DomainError("strain_curve: need at least two frames");
  SliceStrainCurve curve;
  curve.per_frame.reserve(seq.frames.size());
  const LandmarkGrid& ref = seq.frames.front();
  for (const LandmarkGrid& g : seq.frames) curve.per_frame.push_back(slice_strain(ref, g));
  curve.per_frame.front() = SliceStrain{};
  double best = curve.per_frame.front().eps_C_midwall;
  for (int t = 1; t < seq.size(); ++t) {
    if (seq.frames[t].empty()) continue;
    if (curve.per_frame[t].eps_C_midwall < best) {
      best = curve.per_frame[t].eps_C_midwall;
      curve.es_frame = t;
    }
  }
  return curve;
}

inline double strain_error(double pred, double truth) { return std::abs(pred - truth); }

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// Writes the strain-curve CSV: header row, one row per frame, trailing
/// `# es_frame=<n>` comment. Extra comment lines follow if given.
inline void write_strain_csv(std::ostream& os, const SliceStrainCurve& curve,
                             const std::vector<std::string>& trailing_comments = {}) {
  using detail::format_double;
  os << "frame_index,eps_R,eps_C,eps_C_subendo,eps_C_midwall,eps_C_subepi\n";
  for (std::size_t t = 0; t < curve.per_frame.size(); ++t) {
    const SliceStrain& s = curve.per_frame[t];
    os << t << ',' << format_double(s.eps_R) << ',' << format_double(s.eps_C) << ','
       << format_double(s.eps_C_subendo) << ',' << format_double(s.eps_C_midwall) << ','
       << format_double(s.eps_C_subepi) << '\n';
  }
  os << "# es_frame=" << curve.es_frame << '\n';
  for (const std::string& c : trailing_comments) os << "# " << c << '\n';
}

}  // namespace tagstrain
