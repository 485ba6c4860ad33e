#pragma once

// Central finite-difference checks of every layer and loss, shared by the unit
// tests and the acceptance gate.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "tagstrain/nn/layers.hpp"
#include "tagstrain/nn/loss.hpp"

namespace gradsuite {

using tagstrain::nn::Tensor;
using D = Tensor<double>;

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

/// Largest relative error over every element of every input.
inline double check(const std::function<D()>& f, std::vector<D> inputs, double step = 1e-5) {
  for (auto& in : inputs) in.zero_grad();
  D out = f();
  out.backward();
  double worst = 0.0;
  for (auto& in : inputs) {
    const std::vector<double> analytic(in.grad().begin(), in.grad().end());
    for (std::size_t i = 0; i < in.numel(); ++i) {
      const double keep = in.data()[i];
      in.data()[i] = keep + step;
      double up, down;
      {
        tagstrain::nn::NoGradGuard ng;
        up = f().item();
        in.data()[i] = keep - step;
        down = f().item();
      }
      in.data()[i] = keep;
      worst = std::max(worst, rel_error(analytic[i], (up - down) / (2 * step)));
    }
  }
  return worst;
}

/// Random tensor whose entries stay away from zero (kinks of relu and |.|).
inline D random(tagstrain::nn::Shape s, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> mag(0.05, 1.0);
  std::bernoulli_distribution neg(0.5);
  std::vector<double> v(tagstrain::nn::shape_numel(s));
  for (double& x : v) x = scale * (neg(rng) ? -mag(rng) : mag(rng));
  return D::from(std::move(s), std::move(v), true);
}

/// Scalar probe sum(out * w) with fixed random weights.
inline D probe(const D& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> w(out.numel());
  for (double& x : w) x = n(rng);
  return tagstrain::nn::sum(tagstrain::nn::mul(out, D::from(out.shape(), std::move(w))));
}

/// Worst relative error per layer over `shapes` random configurations.
inline std::map<std::string, double> run(int shapes = 20, std::uint64_t seed = 2024) {
  using namespace tagstrain::nn;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> small(1, 3), side(2, 6);
  std::map<std::string, double> worst;
  auto record = [&](const std::string& name, double e) { worst[name] = std::max(worst[name], e); };

  for (int k = 0; k < shapes; ++k) {
    const std::uint64_t ps = rng();
    {
      const int n = small(rng), c = small(rng), f = small(rng), h = side(rng), w = side(rng);
      const int ks = k % 2 ? 3 : 1;
      D x = random({n, c, h, w}, rng), wt = random({f, c, ks, ks}, rng), b = random({f}, rng);
      record("conv2d", check([&] { return probe(conv2d(x, wt, b), ps); }, {x, wt, b}));
    }
    {
      const int n = small(rng), c = small(rng), h = 2 * small(rng), w = 2 * small(rng) + k % 2;
      D x = random({n, c, h, w}, rng);
      record("maxpool2d", check([&] { return probe(maxpool2d(x), ps); }, {x}));
    }
    {
      const int n = small(rng) + 1, c = small(rng), h = side(rng), w = side(rng);
      D x = random({n, c, h, w}, rng, 2.0), g = random({c}, rng), b = random({c}, rng);
      D rm = D::zeros({c}), rv = D::full({c}, 1.0);
      record("batchnorm2d.train",
             check([&] { return probe(batchnorm(x, g, b, rm, rv, true), ps); }, {x, g, b}));
      D em = random({c}, rng), ev = D::full({c}, 0.7);
      em.set_requires_grad(false);
      record("batchnorm2d.eval",
             check([&] { return probe(batchnorm(x, g, b, em, ev, false), ps); }, {x, g, b}));
    }
    {
      const int n = small(rng), in = side(rng), out = side(rng);
      D x = random({n, in}, rng), w = random({out, in}, rng), b = random({out}, rng);
      record("linear", check([&] { return probe(linear(x, w, b), ps); }, {x, w, b}));
    }
    {
      D x = random({small(rng), side(rng), side(rng)}, rng, 2.0);
      record("relu", check([&] { return probe(relu(x), ps); }, {x}));
      record("leaky_relu", check([&] { return probe(leaky_relu(x, 0.1), ps); }, {x}));
      record("sigmoid", check([&] { return probe(sigmoid(x), ps); }, {x}));
      record("tanh", check([&] { return probe(tagstrain::nn::tanh(x), ps); }, {x}));
      const std::uint64_t ds = rng();
      record("dropout", check([&] {
               std::mt19937_64 drng(ds);
               return probe(dropout(x, 0.3, true, drng), ps);
             }, {x}));
    }
    {
      const int b = small(rng), t = small(rng) + 1, f = side(rng), h = side(rng);
      std::mt19937_64 init(rng());
      Lstm<double> lstm(f, h, init, k % 3 == 2 ? CellActivation::kRelu : CellActivation::kTanh);
      D x = random({b, t, f}, rng);
      record("lstm", check([&] { return probe(lstm.sequence(x), ps); }, {x, lstm.w_ih, lstm.w_hh, lstm.bias}));
    }
    {
      const int n = small(rng);
      D p = random({n, 4}, rng), q = random({n, 4}, rng);
      q.set_requires_grad(false);
      record("bbox_mse_loss", check([&] { return bbox_mse_loss(p, q); }, {p}));
    }
    {
      const int b = small(rng), t = small(rng) + 1;
      std::uniform_real_distribution<double> jitter(-1.0, 1.0);
      std::vector<double> truth, pred;
      for (int bi = 0; bi < b; ++bi) {
        for (int ti = 0; ti < t; ++ti) {
          const double s = 1.0 - 0.05 * ti;
          for (int ring = 0; ring < tagstrain::kRings; ++ring) {
            for (int sp = 0; sp < tagstrain::kSpokes; ++sp) {
              const double r = (10 + ring) * s, a = sp * 2 * 3.141592653589793 / 24;
              truth.push_back(32 + r * std::cos(a));
              truth.push_back(32 + r * std::sin(a));
              pred.push_back(truth[truth.size() - 2] + jitter(rng));
              pred.push_back(truth.back() + jitter(rng));
            }
          }
        }
      }
      D p = D::from({b, t, kCoordsPerFrame}, pred, true), q = D::from({b, t, kCoordsPerFrame}, truth);
      std::vector<double> mask(b * t, 1.0);
      if (t > 2) mask[t - 1] = 0.0;
      const double omega = 1.0 + 4.0 * (k % 3);
      record("composite_tracking_loss",
             check([&] { return composite_tracking_loss(p, q, omega, mask).total; }, {p}));
    }
  }
  return worst;
}

}  // namespace gradsuite
