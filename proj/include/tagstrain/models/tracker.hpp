#pragma once

// Recurrent landmark tracker: a shared per-frame conv encoder, an LSTM over
// the frame sequence and a linear head regressing all 168 landmark positions
// per frame as fractions of the crop size.

#include <random>
#include <string>
#include <vector>

#include "tagstrain/models/localizer.hpp"
#include "tagstrain/nn/loss.hpp"

namespace tagstrain {

struct TrackerConfig {
  int input_size = 64;
  int frames = 20;
  std::vector<int> conv_filters{16, 32, 64, 64};
  int kernel = 3;
  double leaky_slope = 0.1;
  int feature_dim = 256;
  int lstm_hidden = 256;
  nn::CellActivation lstm_activation = nn::CellActivation::kTanh;
  int batch_size = 4;
  nn::LrSchedule schedule = nn::LrSchedule::tracker();

  int feature_side() const { return input_size >> conv_filters.size(); }

  void validate() const {
    if (conv_filters.empty()) throw ConfigError("tracker: need at least one conv block");
    if (input_size <= 0 || input_size % (1 << conv_filters.size()) != 0) {
      throw ConfigError("tracker: input_size must be divisible by 2^(conv blocks)");
    }
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("tracker: kernel must be odd");
    if (frames < 2) throw ConfigError("tracker: frames must be >= 2");
    if (feature_dim < 1 || lstm_hidden < 1 || batch_size < 1) {
      throw ConfigError("tracker: feature_dim, lstm_hidden and batch_size must be positive");
    }
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("tracker: leaky_slope must be in [0, 1)");
    for (int f : conv_filters) {
      if (f < 1) throw ConfigError("tracker: filter counts must be positive");
    }
  }
};

inline Json tracker_config_to_json(const TrackerConfig& c) {
  return Json{{"input_size", c.input_size},
              {"frames", c.frames},
              {"conv_filters", c.conv_filters},
              {"kernel", c.kernel},
              {"leaky_slope", c.leaky_slope},
              {"feature_dim", c.feature_dim},
              {"lstm_hidden", c.lstm_hidden},
              {"lstm_activation", nn::to_string(c.lstm_activation)},
              {"batch_size", c.batch_size},
              {"schedule", schedule_to_json(c.schedule)}};
}

inline TrackerConfig tracker_config_from_json(const Json& j, const std::string& path, TrackerConfig c = {}) {
  JsonObjectReader r(j, path);
  r.get("input_size", c.input_size);
  r.get("frames", c.frames);
  r.get("conv_filters", c.conv_filters);
  r.get("kernel", c.kernel);
  r.get("leaky_slope", c.leaky_slope);
  r.get("feature_dim", c.feature_dim);
  r.get("lstm_hidden", c.lstm_hidden);
  std::string act = nn::to_string(c.lstm_activation);
  if (r.get("lstm_activation", act)) c.lstm_activation = nn::cell_activation_from_string(act);
  r.get("batch_size", c.batch_size);
  r.nested("schedule", [&](const Json& s, const std::string& p) {
    c.schedule = schedule_from_json(s, p, c.schedule);
  });
  r.finish();
  c.validate();
  return c;
}

/// Landmarks of a default-orientation annulus centred in a crop made from its
/// box expanded by `expand_fraction`, as fractions of the crop size. Used as
/// the head's starting output.
inline std::vector<float> template_landmarks(double expand_fraction) {
  AnnulusSpec a;
  a.center = {0.5, 0.5};
  a.r_epi = 0.5 / (1.0 + expand_fraction);
  a.r_endo = a.r_epi * 2.0 / 3.0;
  const LandmarkGrid g = build_grid(a);
  std::vector<float> out;
  out.reserve(nn::kCoordsPerFrame);
  for (const Point2& p : g.points) {
    out.push_back(static_cast<float>(p.x));
    out.push_back(static_cast<float>(p.y));
  }
  return out;
}

class Tracker {
 public:
  Tracker() = default;
  Tracker(const TrackerConfig& cfg, std::uint64_t seed, double expand_fraction = 0.6) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    int in = 1;
    for (int f : cfg_.conv_filters) {
      convs_.emplace_back(in, f, cfg_.kernel, rng);
      norms_.emplace_back(f);
      in = f;
    }
    feature_ = nn::Linear<Real>(in * cfg_.feature_side() * cfg_.feature_side(), cfg_.feature_dim, rng);
    lstm_ = nn::Lstm<Real>(cfg_.feature_dim, cfg_.lstm_hidden, rng, cfg_.lstm_activation);
    head_ = nn::Linear<Real>(cfg_.lstm_hidden, nn::kCoordsPerFrame, rng, 0.01);
    const auto tmpl = template_landmarks(expand_fraction);
    std::copy(tmpl.begin(), tmpl.end(), head_.bias.data().begin());

    for (std::size_t i = 0; i < convs_.size(); ++i) {
      convs_[i].register_params(params_, "enc.conv" + std::to_string(i));
      norms_[i].register_params(params_, "enc.bn" + std::to_string(i));
    }
    feature_.register_params(params_, "enc.fc");
    lstm_.register_params(params_, "lstm");
    head_.register_params(params_, "head");
  }

  /// x: [B, T, S, S] cropped frames -> [B, T, 336] normalised coordinates.
  RTensor forward(const RTensor& x, bool train) {
    const int s = cfg_.input_size;
    if (x.rank() != 4 || x.dim(1) != cfg_.frames || x.dim(2) != s || x.dim(3) != s) {
      throw ShapeError("tracker: expected [B," + std::to_string(cfg_.frames) + "," + std::to_string(s) + "," +
                       std::to_string(s) + "] input, got " + nn::shape_str(x.shape()));
    }
    const int b = x.dim(0), t = x.dim(1);
    RTensor h = nn::reshape(x, {b * t, 1, s, s});
    const auto slope = static_cast<Real>(cfg_.leaky_slope);
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      h = nn::maxpool2d(nn::leaky_relu(norms_[i](convs_[i](h), train), slope));
    }
    h = nn::reshape(h, {b * t, static_cast<int>(h.numel()) / (b * t)});
    h = nn::leaky_relu(feature_(h), slope);
    h = lstm_.sequence(nn::reshape(h, {b, t, cfg_.feature_dim}));
    h = head_(nn::reshape(h, {b * t, cfg_.lstm_hidden}));
    return nn::reshape(h, {b, t, nn::kCoordsPerFrame});
  }

  RTensor predict(const RTensor& x) {
    nn::NoGradGuard ng;
    return forward(x, false);
  }

  const TrackerConfig& config() const { return cfg_; }
  nn::ParamList<Real>& params() { return params_; }
  const nn::ParamList<Real>& params() const { return params_; }

 private:
  TrackerConfig cfg_;
  std::vector<nn::Conv2d<Real>> convs_;
  std::vector<nn::BatchNorm2d<Real>> norms_;
  nn::Linear<Real> feature_;
  nn::Lstm<Real> lstm_;
  nn::Linear<Real> head_;
  nn::ParamList<Real> params_;
};

}  // namespace tagstrain
