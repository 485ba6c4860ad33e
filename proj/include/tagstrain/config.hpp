#pragma once

// The run configuration shared by every command. Each section is optional and
// falls back to its module's defaults; unknown keys are rejected by path.

#include <cstdint>
#include <string>

#include "tagstrain/baseline.hpp"
#include "tagstrain/dataset.hpp"
#include "tagstrain/models/localizer.hpp"
#include "tagstrain/models/tracker.hpp"
#include "tagstrain/preprocess.hpp"
#include "tagstrain/stats.hpp"

namespace tagstrain {

/// Case-to-case variation used for the desk-scale datasets: the annulus moves
/// anywhere within +-24 px, wall and cavity vary by a few pixels, contraction
/// and twist vary mildly, and half of the cases get visible noise.
inline PhantomRanges desk_ranges() {
  PhantomRanges r;
  r.center_x = {-24.0, 24.0};
  r.center_y = {-24.0, 24.0};
  r.r_endo = {-4.0, 4.0};
  r.wall = {-2.0, 4.0};
  r.contraction = {-0.05, 0.05};
  r.rotation = {-0.1, 0.1};
  r.noise_sigma = {0.0, 0.05};
  return r;
}

struct EvalConfig {
  double family_alpha = kFamilyAlpha;
  int comparisons = kComparisons;

  double threshold() const { return bonferroni_threshold(family_alpha, comparisons); }
};

struct RunConfig {
  PhantomSpec phantom;
  PhantomRanges ranges = desk_ranges();
  SplitFractions splits;
  PreprocConfig preprocess;
  LocalizerConfig localizer;
  TrackerConfig tracker;
  double omega = 1.0;
  SSDConfig baseline;
  EvalConfig eval;
  std::uint64_t seed = 0;
};

inline Json run_config_to_json(const RunConfig& c) {
  return Json{{"phantom",
               Json{{"base", phantom_spec_to_json(c.phantom)},
                    {"ranges", phantom_ranges_to_json(c.ranges)},
                    {"splits", split_fractions_to_json(c.splits)}}},
              {"preprocess", preproc_config_to_json(c.preprocess)},
              {"localizer", localizer_config_to_json(c.localizer)},
              {"tracker", tracker_config_to_json(c.tracker)},
              {"loss", Json{{"omega", c.omega}}},
              {"baseline", ssd_config_to_json(c.baseline)},
              {"eval", Json{{"family_alpha", c.eval.family_alpha}, {"comparisons", c.eval.comparisons}}},
              {"seed", c.seed}};
}

inline RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  JsonObjectReader r(j, "");
  r.nested("phantom", [&](const Json& s, const std::string& p) {
    JsonObjectReader ph(s, p);
    ph.nested("base", [&](const Json& b, const std::string& bp) { c.phantom = phantom_spec_from_json(b, bp, c.phantom); });
    ph.nested("ranges", [&](const Json& b, const std::string& bp) { c.ranges = phantom_ranges_from_json(b, bp, c.ranges); });
    ph.nested("splits", [&](const Json& b, const std::string& bp) { c.splits = split_fractions_from_json(b, bp, c.splits); });
    ph.finish();
  });
  r.nested("preprocess", [&](const Json& s, const std::string& p) { c.preprocess = preproc_config_from_json(s, p, c.preprocess); });
  r.nested("localizer", [&](const Json& s, const std::string& p) { c.localizer = localizer_config_from_json(s, p, c.localizer); });
  r.nested("tracker", [&](const Json& s, const std::string& p) { c.tracker = tracker_config_from_json(s, p, c.tracker); });
  r.nested("loss", [&](const Json& s, const std::string& p) {
    JsonObjectReader l(s, p);
    l.get("omega", c.omega);
    l.finish();
    if (!(c.omega >= 0.0) || !std::isfinite(c.omega)) throw ConfigError(p + ".omega: must be finite and >= 0");
  });
  r.nested("baseline", [&](const Json& s, const std::string& p) { c.baseline = ssd_config_from_json(s, p, c.baseline); });
  r.nested("eval", [&](const Json& s, const std::string& p) {
    JsonObjectReader e(s, p);
    e.get("family_alpha", c.eval.family_alpha);
    e.get("comparisons", c.eval.comparisons);
    e.finish();
    if (!(c.eval.family_alpha > 0.0 && c.eval.family_alpha < 1.0) || c.eval.comparisons < 1) {
      throw ConfigError(p + ": family_alpha must lie in (0, 1) and comparisons be >= 1");
    }
  });
  r.get("seed", c.seed);
  r.finish();
  return c;
}

inline RunConfig load_run_config(const std::string& path) { return run_config_from_json(read_json_file(path)); }

}  // namespace tagstrain
