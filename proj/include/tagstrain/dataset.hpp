#pragma once

// Randomised phantom datasets on disk, described by a JSON manifest:
//   [{case_id, cine_path, landmarks_path, bbox, split, spec, provenance}, ...]
// Paths are relative to the manifest's directory.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "tagstrain/io.hpp"
#include "tagstrain/parallel.hpp"
#include "tagstrain/phantom.hpp"

namespace tagstrain {

/// Uniform offset in [lo, hi] added to a base value.
struct Jitter {
  double lo = 0.0;
  double hi = 0.0;
};

struct PhantomRanges {
  Jitter center_x, center_y;
  Jitter r_endo;
  Jitter wall;  // added to r_epi - r_endo
  Jitter contraction;
  Jitter rotation;
  Jitter noise_sigma;
  Jitter fade_rate;
  Jitter theta_start;
};

struct SplitFractions {
  double train = 0.72;
  double val = 0.18;
  double test = 0.10;
};

struct SplitCounts {
  int train = 0, val = 0, test = 0;
};

/// floor(fraction * n) per split; the remainder is dealt out train, val, test, train, ...
inline SplitCounts split_counts(int n, const SplitFractions& f) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || f.train + f.val + f.test <= 0) {
    throw DomainError("split fractions must be non-negative and not all zero");
  }
  SplitCounts c{static_cast<int>(std::floor(f.train * n + 1e-9)),
                static_cast<int>(std::floor(f.val * n + 1e-9)),
                static_cast<int>(std::floor(f.test * n + 1e-9))};
  int rest = n - c.train - c.val - c.test;
  for (int i = 0; rest > 0; ++i, --rest) {
    (i % 3 == 0 ? c.train : i % 3 == 1 ? c.val : c.test) += 1;
  }
  return c;
}

inline std::vector<std::string> split_assignment(int n, const SplitFractions& f) {
  const SplitCounts c = split_counts(n, f);
  std::vector<std::string> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.push_back(i < c.train ? "train" : i < c.train + c.val ? "val" : "test");
  }
  return out;
}

/// Case i's parameters come from a stream seeded by (seed, i), so any subset
/// of cases can be regenerated independently. Its noise seed is
/// base.rng_seed + i.
inline PhantomSpec sample_case_spec(const PhantomSpec& base, const PhantomRanges& ranges,
                                    std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), 0xda7a5e7u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](const Jitter& j) { return j.lo + (j.hi - j.lo) * unit(rng); };

  PhantomSpec s = base;
  s.annulus.center.x += draw(ranges.center_x);
  s.annulus.center.y += draw(ranges.center_y);
  const double d_endo = draw(ranges.r_endo);
  const double d_wall = draw(ranges.wall);
  s.annulus.r_endo += d_endo;
  s.annulus.r_epi += d_endo + d_wall;
  s.peak_endo_contraction += draw(ranges.contraction);
  s.peak_rotation += draw(ranges.rotation);
  s.noise_sigma = std::max(0.0, s.noise_sigma + draw(ranges.noise_sigma));
  s.fade_rate = std::max(0.0, s.fade_rate + draw(ranges.fade_rate));
  const double two_pi = 2.0 * std::numbers::pi;
  double theta = std::fmod(s.annulus.theta_start + draw(ranges.theta_start), two_pi);
  if (theta < 0.0) theta += two_pi;
  s.annulus.theta_start = theta;
  s.rng_seed = base.rng_seed + static_cast<std::uint64_t>(index);
  return s;
}

inline std::vector<PhantomSpec> sample_dataset_specs(int n, const PhantomSpec& base,
                                                     const PhantomRanges& ranges,
                                                     std::uint64_t seed) {
  if (n < 1) throw DomainError("dataset needs at least one case");
  std::vector<PhantomSpec> specs;
  specs.reserve(n);
  for (int i = 0; i < n; ++i) {
    specs.push_back(sample_case_spec(base, ranges, seed, i));
    specs.back().validate();
  }
  return specs;
}

struct ManifestEntry {
  std::string case_id;
  std::string cine_path;       // absolute once loaded
  std::string landmarks_path;  // absolute once loaded
  BoundingBox bbox;
  std::string split;
  PhantomSpec spec;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split(const std::string& name) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries) {
      if (e.split == name) out.push_back(&e);
    }
    return out;
  }
};

inline std::string case_id_for(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%05d", index);
  return buf;
}

/// Renders n cases under out_dir/cases and writes out_dir/manifest.json.
inline Manifest generate_dataset(const std::string& out_dir, int n, const PhantomSpec& base,
                                 const PhantomRanges& ranges, std::uint64_t seed,
                                 const SplitFractions& fractions = {},
                                 const Json& config = Json::object()) {
  namespace fs = std::filesystem;
  const auto specs = sample_dataset_specs(n, base, ranges, seed);
  const auto splits = split_assignment(n, fractions);
  const Json prov = provenance(config);
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "cases", ec);
  if (ec) throw IoError(out_dir, "cannot create dataset directory: " + ec.message());

  Manifest manifest;
  manifest.entries.resize(n);
  parallel_for(n, [&](int i) {
    const PhantomCase pc = generate_case(specs[i]);
    ManifestEntry& e = manifest.entries[i];
    e.case_id = case_id_for(i);
    e.cine_path = "cases/" + e.case_id + ".cine";
    e.landmarks_path = "cases/" + e.case_id + ".landmarks.json";
    e.bbox = pc.truth_bbox;
    e.split = splits[i];
    e.spec = specs[i];
    Cine cine = pc.cine;
    cine.case_id = e.case_id;
    write_cine((fs::path(out_dir) / e.cine_path).string(), cine, Json{{"provenance", prov}});
    LandmarkFile lf;
    lf.sequence = pc.truth_landmarks;
    lf.pixel_spacing_mm = specs[i].pixel_spacing_mm;
    lf.header_extra = Json{{"case_id", e.case_id}, {"provenance", prov}};
    write_landmarks((fs::path(out_dir) / e.landmarks_path).string(), lf);
  });

  Json doc = Json::array();
  for (const auto& e : manifest.entries) {
    doc.push_back(Json{{"case_id", e.case_id},
                       {"cine_path", e.cine_path},
                       {"landmarks_path", e.landmarks_path},
                       {"bbox", to_json_value(e.bbox)},
                       {"split", e.split},
                       {"spec", phantom_spec_to_json(e.spec)},
                       {"provenance", prov}});
  }
  write_json_file((fs::path(out_dir) / "manifest.json").string(), doc, 1);
  // The file keeps relative paths; the returned manifest matches read_manifest.
  for (ManifestEntry& e : manifest.entries) {
    e.cine_path = (fs::path(out_dir) / e.cine_path).string();
    e.landmarks_path = (fs::path(out_dir) / e.landmarks_path).string();
  }
  return manifest;
}

/// Loads a manifest and resolves its paths against the manifest directory.
inline Manifest read_manifest(const std::string& path) {
  namespace fs = std::filesystem;
  const Json doc = read_json_file(path);
  if (!doc.is_array()) throw IoError(path, "manifest must be a JSON array");
  const fs::path dir = fs::path(path).parent_path();
  Manifest m;
  try {
    for (const Json& j : doc) {
      ManifestEntry e;
      e.case_id = j.at("case_id").get<std::string>();
      e.cine_path = (dir / j.at("cine_path").get<std::string>()).string();
      e.landmarks_path = (dir / j.at("landmarks_path").get<std::string>()).string();
      e.bbox = box_from_json(j.at("bbox"));
      e.split = j.at("split").get<std::string>();
      if (j.contains("spec")) e.spec = phantom_spec_from_json(j.at("spec"), "spec");
      m.entries.push_back(std::move(e));
    }
  } catch (const std::exception& e) {
    throw IoError(path, e.what());
  }
  return m;
}

inline Json jitter_to_json(const Jitter& j) { return Json::array({j.lo, j.hi}); }

inline Json phantom_ranges_to_json(const PhantomRanges& r) {
  return Json{{"center_x", jitter_to_json(r.center_x)},
              {"center_y", jitter_to_json(r.center_y)},
              {"r_endo", jitter_to_json(r.r_endo)},
              {"wall", jitter_to_json(r.wall)},
              {"contraction", jitter_to_json(r.contraction)},
              {"rotation", jitter_to_json(r.rotation)},
              {"noise_sigma", jitter_to_json(r.noise_sigma)},
              {"fade_rate", jitter_to_json(r.fade_rate)},
              {"theta_start", jitter_to_json(r.theta_start)}};
}

inline PhantomRanges phantom_ranges_from_json(const Json& j, const std::string& path,
                                              PhantomRanges r = {}) {
  JsonObjectReader rd(j, path);
  auto get = [&](const char* key, Jitter& out) {
    std::array<double, 2> v{out.lo, out.hi};
    if (rd.get(key, v)) {
      if (v[0] > v[1]) throw ConfigError(rd.child(key) + ": expected [lo, hi] with lo <= hi");
      out = {v[0], v[1]};
    }
  };
  get("center_x", r.center_x);
  get("center_y", r.center_y);
  get("r_endo", r.r_endo);
  get("wall", r.wall);
  get("contraction", r.contraction);
  get("rotation", r.rotation);
  get("noise_sigma", r.noise_sigma);
  get("fade_rate", r.fade_rate);
  get("theta_start", r.theta_start);
  rd.finish();
  return r;
}

inline Json split_fractions_to_json(const SplitFractions& f) {
  return Json{{"train", f.train}, {"val", f.val}, {"test", f.test}};
}

inline SplitFractions split_fractions_from_json(const Json& j, const std::string& path,
                                                SplitFractions f = {}) {
  JsonObjectReader r(j, path);
  r.get("train", f.train);
  r.get("val", f.val);
  r.get("test", f.test);
  r.finish();
  return f;
}

}  // namespace tagstrain
