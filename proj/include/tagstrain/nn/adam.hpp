#pragma once

#include <cmath>
#include <vector>

#include "tagstrain/nn/tensor.hpp"

namespace tagstrain::nn {

/// Step decay: lr(epoch) = base_lr * decay_factor^k, where k counts the decay
/// events at epochs start+period, start+2*period, ... that have been reached.
struct LrSchedule {
  double base_lr = 1e-3;
  double decay_factor = 1.0 / std::sqrt(2.0);
  int period_epochs = 5;
  int start_epoch = 10;

  int decay_events(int epoch) const {
    if (period_epochs <= 0 || epoch < start_epoch + period_epochs) return 0;
    return (epoch - start_epoch) / period_epochs;
  }

  double lr(int epoch) const { return base_lr * std::pow(decay_factor, decay_events(epoch)); }

  static LrSchedule localizer() { return {1e-3, 1.0 / std::sqrt(2.0), 5, 10}; }
  static LrSchedule tracker() { return {1e-4, 1.0 / std::sqrt(2.0), 10, 0}; }
};

template <class T>
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  LrSchedule schedule;

  Adam() = default;
  Adam(std::vector<Tensor<T>> params, LrSchedule sched) : schedule(sched), params_(std::move(params)) {
    if (!(schedule.base_lr > 0.0)) throw DomainError("learning rate must be positive");
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  /// One bias-corrected update using the current gradients at lr(epoch).
  void step(int epoch) {
    ++steps_;
    const double lr = schedule.lr(epoch);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor<T>& p = params_[k];
      if (!p.has_grad()) continue;
      auto g = p.grad();
      auto x = p.data();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double gi = g[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
        const double mh = m[i] / c1, vh = v[i] / c2;
        x[i] = static_cast<T>(x[i] - lr * mh / (std::sqrt(vh) + eps));
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  long long steps() const { return steps_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<double>> m_, v_;
  long long steps_ = 0;
};

}  // namespace tagstrain::nn
