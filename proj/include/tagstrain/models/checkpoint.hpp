#pragma once

// Model checkpoint file:
//   16-byte magic "TAGSTRAINCKPT\0\0\0"
//   u32 little-endian header length, then the JSON header
//   float32 little-endian parameter arrays in header order
// Running batch-norm statistics are stored like any other tensor.

#include <array>
#include <cstring>
#include <string>
#include <vector>

#include "tagstrain/io.hpp"
#include "tagstrain/models/localizer.hpp"
#include "tagstrain/models/tracker.hpp"
#include "tagstrain/preprocess.hpp"

namespace tagstrain {

inline constexpr std::array<char, 16> kCheckpointMagic = {'T', 'A', 'G', 'S', 'T', 'R', 'A', 'I',
                                                          'N', 'C', 'K', 'P', 'T', 0,   0,   0};

struct ParamEntry {
  std::string name;
  nn::Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::string kind;  // "localizer" or "tracker"
  Json config;       // network config
  Json preprocess;   // preprocessing the network was trained with
  int epoch = 0;
  std::uint64_t seed = 0;
  long long adam_steps = 0;
  Json extra = Json::object();  // provenance, loss weight, ...
  std::vector<ParamEntry> params;

  Json header() const {
    Json manifest = Json::array();
    for (const auto& p : params) manifest.push_back(Json{{"name", p.name}, {"shape", p.shape}});
    return Json{{"kind", kind},   {"config", config},         {"preprocess", preprocess},
                {"epoch", epoch}, {"seed", seed},             {"adam_steps", adam_steps},
                {"extra", extra}, {"parameters", manifest}};
  }
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string text = ck.header().dump();
  auto os = detail::open_out(path, true);
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::write_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : ck.params) {
    if (p.values.size() != nn::shape_numel(p.shape)) {
      throw ShapeError("checkpoint: parameter '" + p.name + "' has " + std::to_string(p.values.size()) +
                       " values for shape " + nn::shape_str(p.shape));
    }
    os.write(reinterpret_cast<const char*>(p.values.data()),
             static_cast<std::streamsize>(p.values.size() * sizeof(float)));
  }
  if (!os) throw IoError(path, "write failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  const std::string bytes = read_text_file(path);
  if (bytes.size() < kCheckpointMagic.size() + 4 ||
      std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0) {
    throw IoError(path, "not a tagstrain checkpoint (bad magic)");
  }
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data() + kCheckpointMagic.size(), 4);
  std::size_t pos = kCheckpointMagic.size() + 4;
  if (bytes.size() < pos + len) throw IoError(path, "truncated checkpoint header");
  Checkpoint ck;
  try {
    const Json h = Json::parse(bytes.substr(pos, len));
    pos += len;
    ck.kind = h.at("kind").get<std::string>();
    ck.config = h.at("config");
    ck.preprocess = h.at("preprocess");
    ck.epoch = h.at("epoch").get<int>();
    ck.seed = h.at("seed").get<std::uint64_t>();
    ck.adam_steps = h.at("adam_steps").get<long long>();
    ck.extra = h.at("extra");
    for (const Json& e : h.at("parameters")) {
      ParamEntry p;
      p.name = e.at("name").get<std::string>();
      p.shape = e.at("shape").get<nn::Shape>();
      ck.params.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path, std::string("invalid checkpoint header: ") + e.what());
  }
  for (auto& p : ck.params) {
    const std::size_t n = nn::shape_numel(p.shape);
    if (bytes.size() < pos + n * sizeof(float)) {
      throw IoError(path, "checkpoint data shorter than its manifest at '" + p.name + "'");
    }
    p.values.resize(n);
    std::memcpy(p.values.data(), bytes.data() + pos, n * sizeof(float));
    pos += n * sizeof(float);
  }
  if (pos != bytes.size()) throw IoError(path, "checkpoint has trailing bytes after its manifest");
  return ck;
}

inline std::vector<ParamEntry> export_params(const nn::ParamList<Real>& list) {
  std::vector<ParamEntry> out;
  for (const auto& e : list.items()) {
    const auto d = e.tensor.data();
    out.push_back({e.name, e.tensor.shape(), std::vector<float>(d.begin(), d.end())});
  }
  return out;
}

/// Copies checkpoint values into a freshly built network's parameters. Names,
/// order and shapes must match exactly.
inline void import_params(nn::ParamList<Real>& list, const std::vector<ParamEntry>& params) {
  auto& items = list.items();
  if (items.size() != params.size()) {
    throw ShapeError("checkpoint has " + std::to_string(params.size()) + " tensors, network expects " +
                     std::to_string(items.size()));
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].name != params[i].name || items[i].tensor.shape() != params[i].shape) {
      throw ShapeError("checkpoint tensor '" + params[i].name + "' " + nn::shape_str(params[i].shape) +
                       " does not match network tensor '" + items[i].name + "' " +
                       nn::shape_str(items[i].tensor.shape()));
    }
    auto d = items[i].tensor.data();
    std::copy(params[i].values.begin(), params[i].values.end(), d.begin());
  }
}

inline Checkpoint make_checkpoint(const Localizer& net, const PreprocConfig& pre, int epoch, std::uint64_t seed,
                                  long long adam_steps, Json extra = Json::object()) {
  return Checkpoint{"localizer", localizer_config_to_json(net.config()), preproc_config_to_json(pre),
                    epoch, seed, adam_steps, std::move(extra), export_params(net.params())};
}

inline Checkpoint make_checkpoint(const Tracker& net, const PreprocConfig& pre, int epoch, std::uint64_t seed,
                                  long long adam_steps, Json extra = Json::object()) {
  return Checkpoint{"tracker", tracker_config_to_json(net.config()), preproc_config_to_json(pre),
                    epoch, seed, adam_steps, std::move(extra), export_params(net.params())};
}

inline void require_kind(const Checkpoint& ck, const std::string& kind) {
  if (ck.kind != kind) throw ConfigError("expected a " + kind + " checkpoint, got '" + ck.kind + "'");
}

inline Localizer localizer_from_checkpoint(const Checkpoint& ck) {
  require_kind(ck, "localizer");
  Localizer net(localizer_config_from_json(ck.config, "localizer"), ck.seed);
  import_params(net.params(), ck.params);
  return net;
}

inline Tracker tracker_from_checkpoint(const Checkpoint& ck) {
  require_kind(ck, "tracker");
  const PreprocConfig pre = preproc_config_from_json(ck.preprocess, "preprocess");
  Tracker net(tracker_config_from_json(ck.config, "tracker"), ck.seed, pre.expand_fraction);
  import_params(net.params(), ck.params);
  return net;
}

inline PreprocConfig checkpoint_preprocess(const Checkpoint& ck) {
  return preproc_config_from_json(ck.preprocess, "preprocess");
}

}  // namespace tagstrain
