#pragma once

#include <set>
#include <string>

#include "json.hpp"
#include "tagstrain/error.hpp"
#include "tagstrain/geometry.hpp"

namespace tagstrain {

using Json = nlohmann::json;

/// Reads optional fields from a JSON object and rejects keys nobody asked for.
///
///   JsonObjectReader r(j, "phantom");
///   r.get("frames", spec.frames);
///   r.finish();  // throws ConfigError naming e.g. "phantom.frmaes"
class JsonObjectReader {
 public:
  JsonObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected a JSON object");
  }

  template <class T>
  bool get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return false;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(child(key) + ": " + e.what());
    }
    return true;
  }

  /// Hands a nested object to `fn(const Json&, path)` when present.
  template <class Fn>
  bool nested(const char* key, Fn&& fn) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return false;
    fn(*it, child(key));
    return true;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + child(it.key()) + "'");
    }
  }

  std::string child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline Json to_json_value(const Point2& p) { return Json::array({p.x, p.y}); }

inline Json to_json_value(const BoundingBox& b) {
  return Json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

inline BoundingBox box_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw ConfigError("bounding box must be [x0,y0,x1,y1]");
  return BoundingBox::checked(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                              j[3].get<double>());
}

inline Json annulus_to_json(const AnnulusSpec& a) {
  return Json{{"center", to_json_value(a.center)},
              {"r_endo", a.r_endo},
              {"r_epi", a.r_epi},
              {"theta_start", a.theta_start},
              {"orientation", a.orientation}};
}

inline AnnulusSpec annulus_from_json(const Json& j, const std::string& path,
                                     AnnulusSpec base = {}) {
  JsonObjectReader r(j, path);
  std::array<double, 2> c{base.center.x, base.center.y};
  if (r.get("center", c)) base.center = {c[0], c[1]};
  r.get("r_endo", base.r_endo);
  r.get("r_epi", base.r_epi);
  r.get("theta_start", base.theta_start);
  r.get("orientation", base.orientation);
  r.finish();
  return base;
}

}  // namespace tagstrain
