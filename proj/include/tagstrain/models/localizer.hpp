#pragma once

// Box-regression CNN: conv/BN/ReLU/pool blocks, a dropout-regularised hidden
// fully-connected layer and a 4-wide linear head giving the box corners
// (x_min, y_min, x_max, y_max) as fractions of the input size.

#include <array>
#include <random>
#include <string>
#include <vector>

#include "tagstrain/json_util.hpp"
#include "tagstrain/nn/adam.hpp"
#include "tagstrain/nn/layers.hpp"

namespace tagstrain {

using Real = float;
using RTensor = nn::Tensor<Real>;

inline Json schedule_to_json(const nn::LrSchedule& s) {
  return Json{{"base_lr", s.base_lr},
              {"decay_factor", s.decay_factor},
              {"period_epochs", s.period_epochs},
              {"start_epoch", s.start_epoch}};
}

inline nn::LrSchedule schedule_from_json(const Json& j, const std::string& path, nn::LrSchedule s) {
  JsonObjectReader r(j, path);
  r.get("base_lr", s.base_lr);
  r.get("decay_factor", s.decay_factor);
  r.get("period_epochs", s.period_epochs);
  r.get("start_epoch", s.start_epoch);
  r.finish();
  if (!(s.base_lr > 0.0) || !(s.decay_factor > 0.0) || s.period_epochs < 0 || s.start_epoch < 0) {
    throw ConfigError(path + ": learning-rate schedule needs base_lr > 0, decay_factor > 0");
  }
  return s;
}

struct LocalizerConfig {
  int input_size = 64;
  std::vector<int> conv_filters{16, 32, 64, 64};
  int kernel = 3;
  std::vector<int> fc_widths{256, 4};
  double dropout = 0.2;
  int batch_size = 8;
  nn::LrSchedule schedule = nn::LrSchedule::localizer();

  int feature_side() const { return input_size >> conv_filters.size(); }

  void validate() const {
    if (conv_filters.empty()) throw ConfigError("localizer: need at least one conv block");
    if (input_size <= 0 || input_size % (1 << conv_filters.size()) != 0) {
      throw ConfigError("localizer: input_size must be divisible by 2^(conv blocks)");
    }
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("localizer: kernel must be odd");
    if (fc_widths.size() < 2 || fc_widths.back() != 4) {
      throw ConfigError("localizer: fc_widths must have a hidden layer and end in 4");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("localizer: dropout must be in [0, 1)");
    if (batch_size < 1) throw ConfigError("localizer: batch_size must be >= 1");
    for (int f : conv_filters) {
      if (f < 1) throw ConfigError("localizer: filter counts must be positive");
    }
  }
};

inline Json localizer_config_to_json(const LocalizerConfig& c) {
  return Json{{"input_size", c.input_size}, {"conv_filters", c.conv_filters},
              {"kernel", c.kernel},         {"fc_widths", c.fc_widths},
              {"dropout", c.dropout},       {"batch_size", c.batch_size},
              {"schedule", schedule_to_json(c.schedule)}};
}

inline LocalizerConfig localizer_config_from_json(const Json& j, const std::string& path,
                                                  LocalizerConfig c = {}) {
  JsonObjectReader r(j, path);
  r.get("input_size", c.input_size);
  r.get("conv_filters", c.conv_filters);
  r.get("kernel", c.kernel);
  r.get("fc_widths", c.fc_widths);
  r.get("dropout", c.dropout);
  r.get("batch_size", c.batch_size);
  r.nested("schedule", [&](const Json& s, const std::string& p) {
    c.schedule = schedule_from_json(s, p, c.schedule);
  });
  r.finish();
  c.validate();
  return c;
}

/// Centre half of the frame; the head starts out predicting this box.
inline constexpr std::array<float, 4> kInitialBox{0.25f, 0.25f, 0.75f, 0.75f};

class Localizer {
 public:
  Localizer() = default;
  Localizer(const LocalizerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    int in = 1;
    for (int f : cfg_.conv_filters) {
      convs_.emplace_back(in, f, cfg_.kernel, rng);
      norms_.emplace_back(f);
      in = f;
    }
    int width = in * cfg_.feature_side() * cfg_.feature_side();
    for (std::size_t i = 0; i < cfg_.fc_widths.size(); ++i) {
      const bool head = i + 1 == cfg_.fc_widths.size();
      fcs_.emplace_back(width, cfg_.fc_widths[i], rng, head ? 0.01 : 2.0);
      width = cfg_.fc_widths[i];
    }
    for (int k = 0; k < 4; ++k) fcs_.back().bias.data()[k] = kInitialBox[k];
    build_params();
  }

  /// x: [N, 1, S, S] -> [N, 4] normalised corners.
  RTensor forward(const RTensor& x, bool train, std::mt19937_64& rng) {
    if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg_.input_size || x.dim(3) != cfg_.input_size) {
      throw ShapeError("localizer: expected [N,1," + std::to_string(cfg_.input_size) + "," +
                       std::to_string(cfg_.input_size) + "] input, got " + nn::shape_str(x.shape()));
    }
    RTensor h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) h = nn::maxpool2d(nn::relu(norms_[i](convs_[i](h), train)));
    h = nn::reshape(h, {x.dim(0), static_cast<int>(h.numel()) / x.dim(0)});
    for (std::size_t i = 0; i + 1 < fcs_.size(); ++i) {
      h = nn::relu(fcs_[i](h));
      if (i == 0) h = nn::dropout(h, cfg_.dropout, train, rng);
    }
    return fcs_.back()(h);
  }

  RTensor predict(const RTensor& x) {
    nn::NoGradGuard ng;
    std::mt19937_64 unused(0);
    return forward(x, false, unused);
  }

  const LocalizerConfig& config() const { return cfg_; }
  nn::ParamList<Real>& params() { return params_; }
  const nn::ParamList<Real>& params() const { return params_; }

 private:
  void build_params() {
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      convs_[i].register_params(params_, "conv" + std::to_string(i));
      norms_[i].register_params(params_, "bn" + std::to_string(i));
    }
    for (std::size_t i = 0; i < fcs_.size(); ++i) fcs_[i].register_params(params_, "fc" + std::to_string(i));
  }

  LocalizerConfig cfg_;
  std::vector<nn::Conv2d<Real>> convs_;
  std::vector<nn::BatchNorm2d<Real>> norms_;
  std::vector<nn::Linear<Real>> fcs_;
  nn::ParamList<Real> params_;
};

}  // namespace tagstrain
