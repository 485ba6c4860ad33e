#pragma once

// Run evaluation: end-systolic strain errors per strain component, RMS
// landmark position error, IoU summaries and Bland-Altman plot data.

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tagstrain/io.hpp"
#include "tagstrain/stats.hpp"
#include "tagstrain/strain.hpp"

namespace tagstrain {

/// Root mean squared landmark distance in millimetres.
inline double rms_position_error(const LandmarkGrid& pred, const LandmarkGrid& truth, double pixel_spacing_mm) {
  double ss = 0.0;
  for (int i = 0; i < kLandmarks; ++i) ss += squared_norm(pred.points[i] - truth.points[i]);
  return std::sqrt(ss / kLandmarks) * pixel_spacing_mm;
}

struct EvalCase {
  std::string case_id;
  LandmarkSequence landmarks;  // original image space
  double pixel_spacing_mm = 1.4;
  std::string region;  // optional grouping tag
};

struct BoxPair {
  BoundingBox predicted;
  BoundingBox truth;
};

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
  int n = 0;
};

inline MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd m;
  m.n = static_cast<int>(v.size());
  if (v.empty()) return m;
  m.mean = mean_of(v);
  m.sd = v.size() >= 2 ? sd_of(v) : 0.0;
  return m;
}

inline Json to_json(const MeanSd& m) { return Json{{"mean", m.mean}, {"sd", m.sd}, {"n", m.n}}; }

inline Json to_json(const TTestResult& t) {
  Json j{{"df", t.df}, {"p", t.p}, {"significant", t.significant}, {"threshold", t.threshold},
         {"degenerate", t.degenerate}, {"ci95", Json::array({t.ci_low, t.ci_high})}};
  j["t"] = std::isfinite(t.t) ? Json(t.t) : Json(t.t > 0 ? "inf" : "-inf");
  return j;
}

inline Json to_json(const AgreementResult& a) {
  return Json{{"bias", a.bias}, {"precision", a.precision}, {"loa_low", a.loa_low},
              {"loa_high", a.loa_high}, {"n", a.n}};
}

/// Strain components reported per slice, in report order.
inline const std::vector<std::string>& strain_components() {
  static const std::vector<std::string> names = {"eps_C_whole", "eps_C_subendo", "eps_C_midwall",
                                                 "eps_C_subepi", "eps_R"};
  return names;
}

inline double strain_component(const SliceStrain& s, const std::string& name) {
  if (name == "eps_C_whole") return s.eps_C;
  if (name == "eps_C_subendo") return s.eps_C_subendo;
  if (name == "eps_C_midwall") return s.eps_C_midwall;
  if (name == "eps_C_subepi") return s.eps_C_subepi;
  if (name == "eps_R") return s.eps_R;
  throw DomainError("unknown strain component '" + name + "'");
}

struct EvalOptions {
  std::optional<double> throughput_fps;
  std::string difference_label = "prediction - truth";
  double significance_threshold = bonferroni_threshold();
  Json config = Json::object();
};

struct EvalReport {
  Json report;
  std::map<std::string, AgreementResult> bland_altman;  // by strain component, when n >= 2
};

inline constexpr double kIouBinWidth = 0.05;

namespace detail {

inline Json strain_error_block(const std::vector<std::pair<double, double>>& pairs, double threshold) {
  std::vector<double> err, abs_err;
  for (const auto& [p, t] : pairs) {
    err.push_back(p - t);
    abs_err.push_back(std::abs(p - t));
  }
  Json j{{"error", to_json(mean_sd(err))}, {"absolute_error", to_json(mean_sd(abs_err))}};
  if (err.size() >= 2) j["t_test"] = to_json(t_test_one_sample(err, 0.0, threshold));
  return j;
}

}  // namespace detail

/// Matches predictions to truth by case id (order does not matter) and
/// evaluates strain errors at each case's ground-truth end-systolic frame.
inline EvalReport evaluate_run(std::vector<EvalCase> pred, std::vector<EvalCase> truth,
                               const std::map<std::string, BoxPair>& boxes = {}, const EvalOptions& opt = {}) {
  auto by_id = [](const EvalCase& a, const EvalCase& b) { return a.case_id < b.case_id; };
  std::sort(pred.begin(), pred.end(), by_id);
  std::sort(truth.begin(), truth.end(), by_id);
  for (std::size_t i = 1; i < pred.size(); ++i) {
    if (pred[i].case_id == pred[i - 1].case_id) throw DomainError("duplicate case id '" + pred[i].case_id + "'");
  }
  std::vector<std::string> missing_pred, missing_truth;
  {
    std::size_t i = 0, j = 0;
    while (i < pred.size() || j < truth.size()) {
      if (j == truth.size() || (i < pred.size() && pred[i].case_id < truth[j].case_id)) {
        missing_truth.push_back(pred[i++].case_id);
      } else if (i == pred.size() || truth[j].case_id < pred[i].case_id) {
        missing_pred.push_back(truth[j++].case_id);
      } else {
        ++i, ++j;
      }
    }
  }
  if (!missing_pred.empty() || !missing_truth.empty()) {
    std::ostringstream msg;
    msg << "case lists do not match;";
    if (!missing_pred.empty()) {
      msg << " missing predictions:";
      for (const auto& id : missing_pred) msg << ' ' << id;
      msg << ';';
    }
    if (!missing_truth.empty()) {
      msg << " missing truth:";
      for (const auto& id : missing_truth) msg << ' ' << id;
    }
    throw DomainError(msg.str());
  }
  if (pred.empty()) throw DomainError("evaluate_run: no cases");

  std::map<std::string, std::vector<std::pair<double, double>>> pairs;  // component -> (pred, truth)
  std::map<std::string, std::map<std::string, std::vector<std::pair<double, double>>>> grouped;
  std::vector<double> rms_ed, rms_es;
  Json per_case = Json::array();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const EvalCase& p = pred[i];
    const EvalCase& t = truth[i];
    if (p.landmarks.size() != t.landmarks.size()) {
      throw ShapeError("case '" + p.case_id + "': " + std::to_string(p.landmarks.size()) +
                       " predicted frames vs " + std::to_string(t.landmarks.size()) + " truth frames");
    }
    const SliceStrainCurve tc = strain_curve(t.landmarks);
    const SliceStrainCurve pc = strain_curve(p.landmarks);
    const int es = tc.es_frame;
    Json row{{"case_id", p.case_id}, {"es_frame", es}};
    for (const auto& name : strain_components()) {
      const double pv = strain_component(pc.per_frame[es], name);
      const double tv = strain_component(tc.per_frame[es], name);
      pairs[name].emplace_back(pv, tv);
      if (!t.region.empty()) grouped[t.region][name].emplace_back(pv, tv);
      row[name] = Json::array({pv, tv});
    }
    rms_ed.push_back(rms_position_error(p.landmarks.frames[0], t.landmarks.frames[0], t.pixel_spacing_mm));
    rms_es.push_back(rms_position_error(p.landmarks.frames[es], t.landmarks.frames[es], t.pixel_spacing_mm));
    row["rms_mm"] = Json::array({rms_ed.back(), rms_es.back()});
    per_case.push_back(std::move(row));
  }

  EvalReport out;
  Json& r = out.report;
  r["n_cases"] = static_cast<int>(pred.size());
  r["difference"] = opt.difference_label;
  Json strain = Json::object();
  for (const auto& name : strain_components()) {
    strain[name] = detail::strain_error_block(pairs[name], opt.significance_threshold);
    if (pairs[name].size() >= 2) {
      out.bland_altman[name] = bland_altman(pairs[name]);
      strain[name]["bland_altman"] = to_json(out.bland_altman[name]);
    }
  }
  r["strain_es"] = std::move(strain);
  if (!grouped.empty()) {
    Json groups = Json::object();
    for (const auto& [region, comps] : grouped) {
      for (const auto& name : strain_components()) {
        groups[region][name] = detail::strain_error_block(comps.at(name), opt.significance_threshold);
      }
    }
    r["groups"] = std::move(groups);
  }
  r["rms_position_mm"] = Json{{"ed", to_json(mean_sd(rms_ed))}, {"es", to_json(mean_sd(rms_es))}};

  if (!boxes.empty()) {
    std::vector<double> ious;
    for (const auto& c : pred) {
      auto it = boxes.find(c.case_id);
      if (it == boxes.end()) throw DomainError("no box record for case '" + c.case_id + "'");
      ious.push_back(iou(it->second.predicted, it->second.truth));
    }
    const int bins = static_cast<int>(std::lround(1.0 / kIouBinWidth));
    std::vector<int> counts(bins, 0);
    for (double v : ious) counts[std::min(bins - 1, static_cast<int>(v / kIouBinWidth))] += 1;
    Json hist = Json::array();
    for (int b = 0; b < bins; ++b) {
      hist.push_back(Json{{"lo", b * kIouBinWidth}, {"hi", (b + 1) * kIouBinWidth}, {"count", counts[b]}});
    }
    Json iou_json = to_json(mean_sd(ious));
    iou_json["min"] = *std::min_element(ious.begin(), ious.end());
    iou_json["histogram"] = std::move(hist);
    r["iou"] = std::move(iou_json);
  }
  if (opt.throughput_fps) r["throughput_fps"] = *opt.throughput_fps;
  r["cases"] = std::move(per_case);
  r["provenance"] = provenance(opt.config);
  return out;
}

/// Compares two runs as two observers: differences are run_a - run_b.
inline EvalReport compare_runs(std::vector<EvalCase> run_a, std::vector<EvalCase> run_b, EvalOptions opt = {}) {
  opt.difference_label = "observer1 - observer2";
  return evaluate_run(std::move(run_a), std::move(run_b), {}, opt);
}

inline std::string bland_altman_csv(const std::string& component, const AgreementResult& a) {
  std::ostringstream os;
  os << "# component " << component << '\n'
     << "# bias " << detail::format_double(a.bias) << '\n'
     << "# precision " << detail::format_double(a.precision) << '\n'
     << "# loa_low " << detail::format_double(a.loa_low) << '\n'
     << "# loa_high " << detail::format_double(a.loa_high) << '\n'
     << "mean,difference\n";
  for (const auto& [m, d] : a.points) os << detail::format_double(m) << ',' << detail::format_double(d) << '\n';
  return os.str();
}

/// Writes the JSON report and one Bland-Altman CSV per component next to it
/// (REPORT.ba_<component>.csv). Returns the CSV paths.
inline std::vector<std::string> write_eval_report(const std::string& path, const EvalReport& r) {
  write_json_file(path, r.report, 1);
  std::vector<std::string> written;
  for (const auto& [name, a] : r.bland_altman) {
    const std::string csv = path + ".ba_" + name + ".csv";
    write_text_file(csv, bland_altman_csv(name, a));
    written.push_back(csv);
  }
  return written;
}

/// Loads every *.json landmark document in a directory. The case id comes from
/// the header's case_id, else from the file name up to its first dot.
inline std::vector<EvalCase> load_eval_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError(dir, "not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<EvalCase> out;
  for (const auto& f : files) {
    const LandmarkFile lf = read_landmarks(f.string());
    EvalCase c;
    const std::string stem = f.filename().string();
    c.case_id = lf.header_extra.value("case_id", stem.substr(0, stem.find('.')));
    c.landmarks = lf.sequence;
    c.pixel_spacing_mm = lf.pixel_spacing_mm;
    c.region = lf.header_extra.value("region", "");
    out.push_back(std::move(c));
  }
  return out;
}

/// Box records: one JSON file per case, {"case_id", "predicted": [x0,y0,x1,y1], "truth": [...]}.
inline Json box_record(const std::string& case_id, const BoxPair& b) {
  return Json{{"case_id", case_id}, {"predicted", to_json_value(b.predicted)}, {"truth", to_json_value(b.truth)}};
}

inline std::map<std::string, BoxPair> load_box_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError(dir, "not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, BoxPair> out;
  for (const auto& f : files) {
    const Json j = read_json_file(f.string());
    try {
      // A degenerate prediction is kept as written; it scores IoU 0.
      const Json& p = j.at("predicted");
      if (!p.is_array() || p.size() != 4) throw ConfigError("predicted box must be [x0,y0,x1,y1]");
      const BoundingBox pred{p[0].get<double>(), p[1].get<double>(), p[2].get<double>(), p[3].get<double>()};
      out[j.at("case_id").get<std::string>()] = BoxPair{pred, box_from_json(j.at("truth"))};
    } catch (const std::exception& e) {
      throw IoError(f.string(), e.what());
    }
  }
  return out;
}

}  // namespace tagstrain
