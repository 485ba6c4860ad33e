#pragma once

// On-disk formats.
//
// Cine (binary, little-endian):
//   16 bytes  magic "TAGSTRAINCINE\0\0\0"
//   u32       header length N
//   N bytes   UTF-8 JSON {width, height, frames, pixel_spacing_mm, dtype:"f32le", ...}
//   frames*height*width float32, frame-major, row-major within a frame
//
// Landmarks (JSON):
//   {"header": {format:"tagstrain-landmarks", version:1, frames, rings:7,
//               spokes:24, pixel_spacing_mm, [transform], [provenance], ...},
//    "frames": [[[x,y] x 168] x T], ["status": [168 ints]]}

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tagstrain/geometry.hpp"
#include "tagstrain/image.hpp"
#include "tagstrain/json_util.hpp"
#include "tagstrain/preprocess.hpp"

#ifndef TAGSTRAIN_VERSION
#define TAGSTRAIN_VERSION "0.1.0"
#endif

namespace tagstrain {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in native order and assume a little-endian host");

inline constexpr char kToolName[] = "tagstrain";
inline constexpr char kToolVersion[] = TAGSTRAIN_VERSION;
inline constexpr std::array<char, 16> kCineMagic = {'T', 'A', 'G', 'S', 'T', 'R', 'A', 'I',
                                                    'N', 'C', 'I', 'N', 'E', 0,   0,   0};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

inline std::ofstream open_out(const std::string& path, bool binary) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
  }
  std::ofstream os(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!os) throw IoError(path, "cannot open for writing");
  return os;
}

inline std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw IoError(path, "cannot open for reading");
  return is;
}

}  // namespace detail

inline void write_text_file(const std::string& path, const std::string& text) {
  auto os = detail::open_out(path, true);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw IoError(path, "write failed");
}

inline std::string read_text_file(const std::string& path) {
  auto is = detail::open_in(path, true);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline Json read_json_file(const std::string& path) {
  try {
    return Json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path, std::string("invalid JSON: ") + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j, int indent = -1) {
  write_text_file(path, j.dump(indent) + "\n");
}

/// Standard provenance block: tool name, version and the effective configuration.
inline Json provenance(const Json& config) {
  return Json{{"tool", kToolName}, {"version", kToolVersion}, {"config", config}};
}

inline void write_cine(const std::string& path, const Cine& c, const Json& extra = Json::object()) {
  c.validate();
  Json header = extra;
  header["width"] = c.width();
  header["height"] = c.height();
  header["frames"] = c.frame_count();
  header["pixel_spacing_mm"] = c.pixel_spacing_mm;
  header["dtype"] = "f32le";
  if (!c.case_id.empty()) header["case_id"] = c.case_id;
  const std::string text = header.dump();
  auto os = detail::open_out(path, true);
  os.write(kCineMagic.data(), kCineMagic.size());
  detail::write_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::vector<float> buf;
  for (const Image& f : c.frames) {
    buf.assign(f.data.begin(), f.data.end());
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!os) throw IoError(path, "write failed");
}

struct CineFile {
  Cine cine;
  Json header;
};

inline CineFile read_cine_file(const std::string& path) {
  auto is = detail::open_in(path, true);
  std::array<char, 16> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kCineMagic) throw IoError(path, "not a tagstrain cine file");
  const std::uint32_t n = detail::read_u32(is);
  std::string text(n, '\0');
  is.read(text.data(), n);
  if (!is) throw IoError(path, "truncated header");
  CineFile out;
  try {
    out.header = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path, std::string("bad header: ") + e.what());
  }
  const Json& h = out.header;
  if (h.value("dtype", "") != "f32le") throw IoError(path, "unsupported dtype");
  const int w = h.at("width").get<int>(), ht = h.at("height").get<int>();
  const int frames = h.at("frames").get<int>();
  if (w <= 0 || ht <= 0 || frames <= 0) throw IoError(path, "bad dimensions");
  out.cine.pixel_spacing_mm = h.at("pixel_spacing_mm").get<double>();
  out.cine.case_id = h.value("case_id", std::string{});
  std::vector<float> buf(static_cast<std::size_t>(w) * ht);
  for (int t = 0; t < frames; ++t) {
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!is) throw IoError(path, "truncated pixel data");
    Image img(w, ht);
    std::copy(buf.begin(), buf.end(), img.data.begin());
    out.cine.frames.push_back(std::move(img));
  }
  return out;
}

inline Cine read_cine(const std::string& path) { return read_cine_file(path).cine; }

struct LandmarkFile {
  LandmarkSequence sequence;
  double pixel_spacing_mm = 1.4;
  std::optional<CropTransform> transform;
  std::optional<std::vector<int>> status;
  Json header_extra = Json::object();  // provenance, case_id, ...
};

inline Json landmark_file_to_json(const LandmarkFile& f) {
  Json header = f.header_extra;
  header["format"] = "tagstrain-landmarks";
  header["version"] = 1;
  header["frames"] = f.sequence.size();
  header["rings"] = kRings;
  header["spokes"] = kSpokes;
  header["pixel_spacing_mm"] = f.pixel_spacing_mm;
  if (f.transform) header["transform"] = crop_transform_to_json(*f.transform);
  Json frames = Json::array();
  for (const LandmarkGrid& g : f.sequence.frames) {
    Json pts = Json::array();
    for (const Point2& p : g.points) pts.push_back(Json::array({p.x, p.y}));
    frames.push_back(std::move(pts));
  }
  Json j{{"header", std::move(header)}, {"frames", std::move(frames)}};
  if (f.status) j["status"] = *f.status;
  return j;
}

inline LandmarkFile landmark_file_from_json(const Json& j) {
  const Json& h = j.at("header");
  if (h.at("format").get<std::string>() != "tagstrain-landmarks" ||
      h.at("version").get<int>() != 1) {
    throw ConfigError("unsupported landmark document");
  }
  if (h.at("rings").get<int>() != kRings || h.at("spokes").get<int>() != kSpokes) {
    throw ConfigError("landmark document must have 7 rings x 24 spokes");
  }
  LandmarkFile f;
  f.pixel_spacing_mm = h.at("pixel_spacing_mm").get<double>();
  const Json& frames = j.at("frames");
  if (!frames.is_array() || static_cast<int>(frames.size()) != h.at("frames").get<int>()) {
    throw ConfigError("landmark frame count does not match header");
  }
  for (const Json& fr : frames) {
    if (!fr.is_array() || fr.size() != kLandmarks) {
      throw ConfigError("each landmark frame needs 168 points");
    }
    LandmarkGrid g;
    for (int i = 0; i < kLandmarks; ++i) g.points[i] = {fr[i].at(0).get<double>(), fr[i].at(1).get<double>()};
    f.sequence.frames.push_back(g);
  }
  if (h.contains("transform")) f.transform = crop_transform_from_json(h.at("transform"));
  if (j.contains("status")) f.status = j.at("status").get<std::vector<int>>();
  for (auto it = h.begin(); it != h.end(); ++it) {
    static const std::array<std::string, 7> known = {"format", "version", "frames", "rings",
                                                     "spokes", "pixel_spacing_mm", "transform"};
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      f.header_extra[it.key()] = it.value();
    }
  }
  return f;
}

inline void write_landmarks(const std::string& path, const LandmarkFile& f) {
  write_json_file(path, landmark_file_to_json(f));
}

inline LandmarkFile read_landmarks(const std::string& path) {
  const Json j = read_json_file(path);
  try {
    return landmark_file_from_json(j);
  } catch (const std::exception& e) {
    throw IoError(path, e.what());
  }
}

}  // namespace tagstrain
