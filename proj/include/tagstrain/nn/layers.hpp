#pragma once

// Parameterised layers and the ordered parameter registry used by the
// optimizer and checkpoints.

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tagstrain/nn/ops.hpp"

namespace tagstrain::nn {

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;  // false for running statistics
};

/// Ordered list of named tensors. Order defines the checkpoint layout.
template <class T>
class ParamList {
 public:
  void add(std::string name, Tensor<T> t, bool trainable = true) {
    for (const auto& e : items_) {
      if (e.name == name) throw ConfigError("duplicate parameter name '" + name + "'");
    }
    items_.push_back({std::move(name), std::move(t), trainable});
  }

  const std::vector<NamedTensor<T>>& items() const { return items_; }
  std::vector<NamedTensor<T>>& items() { return items_; }

  std::vector<Tensor<T>> trainable() const {
    std::vector<Tensor<T>> out;
    for (const auto& e : items_) {
      if (e.trainable) out.push_back(e.tensor);
    }
    return out;
  }

  void zero_grad() {
    for (auto& e : items_) e.tensor.zero_grad();
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& e : items_) n += e.tensor.numel();
    return n;
  }

 private:
  std::vector<NamedTensor<T>> items_;
};

template <class T, class Rng>
Tensor<T> normal_init(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> d(0.0, stddev);
  std::vector<T> v(shape_numel(shape));
  for (T& x : v) x = static_cast<T>(d(rng));
  return Tensor<T>::from(std::move(shape), std::move(v), true);
}

template <class T, class Rng>
Tensor<T> uniform_init(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> d(-bound, bound);
  std::vector<T> v(shape_numel(shape));
  for (T& x : v) x = static_cast<T>(d(rng));
  return Tensor<T>::from(std::move(shape), std::move(v), true);
}

template <class T>
struct Conv2d {
  Tensor<T> weight, bias;

  Conv2d() = default;
  template <class Rng>
  Conv2d(int in, int out, int kernel, Rng& rng)
      : weight(normal_init<T>({out, in, kernel, kernel}, std::sqrt(2.0 / (in * kernel * kernel)), rng)),
        bias(Tensor<T>::zeros({out}, true)) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias); }

  void register_params(ParamList<T>& p, const std::string& prefix) const {
    p.add(prefix + ".weight", weight);
    p.add(prefix + ".bias", bias);
  }
};

template <class T>
struct BatchNorm2d {
  Tensor<T> gamma, beta, running_mean, running_var;
  T momentum = T(0.9);
  T eps = T(1e-5);

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels)
      : gamma(Tensor<T>::full({channels}, T(1), true)),
        beta(Tensor<T>::zeros({channels}, true)),
        running_mean(Tensor<T>::zeros({channels})),
        running_var(Tensor<T>::full({channels}, T(1))) {}

  Tensor<T> operator()(const Tensor<T>& x, bool train) {
    return batchnorm(x, gamma, beta, running_mean, running_var, train, momentum, eps);
  }

  void register_params(ParamList<T>& p, const std::string& prefix) const {
    p.add(prefix + ".gamma", gamma);
    p.add(prefix + ".beta", beta);
    p.add(prefix + ".running_mean", running_mean, false);
    p.add(prefix + ".running_var", running_var, false);
  }
};

template <class T>
struct Linear {
  Tensor<T> weight, bias;

  Linear() = default;
  template <class Rng>
  Linear(int in, int out, Rng& rng, double gain = 2.0)
      : weight(normal_init<T>({out, in}, std::sqrt(gain / in), rng)),
        bias(Tensor<T>::zeros({out}, true)) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }

  void register_params(ParamList<T>& p, const std::string& prefix) const {
    p.add(prefix + ".weight", weight);
    p.add(prefix + ".bias", bias);
  }
};

enum class CellActivation { kTanh, kRelu };

inline std::string to_string(CellActivation a) { return a == CellActivation::kTanh ? "tanh" : "relu"; }

inline CellActivation cell_activation_from_string(const std::string& s) {
  if (s == "tanh") return CellActivation::kTanh;
  if (s == "relu") return CellActivation::kRelu;
  throw ConfigError("unknown LSTM activation '" + s + "' (expected tanh or relu)");
}

template <class T>
struct LstmState {
  Tensor<T> h, c;
};

/// Single-layer LSTM. Gate order in the stacked weights is input, forget,
/// candidate, output.
template <class T>
struct Lstm {
  int input_size = 0;
  int hidden = 0;
  CellActivation activation = CellActivation::kTanh;
  Tensor<T> w_ih, w_hh, bias;

  Lstm() = default;
  template <class Rng>
  Lstm(int in, int hidden_size, Rng& rng, CellActivation act = CellActivation::kTanh)
      : input_size(in), hidden(hidden_size), activation(act) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
    w_ih = uniform_init<T>({4 * hidden_size, in}, bound, rng);
    w_hh = uniform_init<T>({4 * hidden_size, hidden_size}, bound, rng);
    std::vector<T> b(4 * hidden_size, T(0));
    for (int j = hidden_size; j < 2 * hidden_size; ++j) b[j] = T(1);
    bias = Tensor<T>::from({4 * hidden_size}, std::move(b), true);
  }

  Tensor<T> act(const Tensor<T>& x) const {
    return activation == CellActivation::kTanh ? nn::tanh(x) : relu(x);
  }

  /// One step: x [B, in], state [B, H] each.
  LstmState<T> cell(const Tensor<T>& x, const LstmState<T>& s) const {
    if (x.rank() != 2 || x.dim(1) != input_size) {
      throw ShapeError("lstm: input " + shape_str(x.shape()) + " does not match weight " +
                       shape_str(w_ih.shape()));
    }
    const Tensor<T> gates = add(linear(x, w_ih, bias), linear(s.h, w_hh, Tensor<T>()));
    const Tensor<T> i = sigmoid(slice_cols(gates, 0, hidden));
    const Tensor<T> f = sigmoid(slice_cols(gates, hidden, hidden));
    const Tensor<T> g = act(slice_cols(gates, 2 * hidden, hidden));
    const Tensor<T> o = sigmoid(slice_cols(gates, 3 * hidden, hidden));
    LstmState<T> next;
    next.c = add(mul(f, s.c), mul(i, g));
    next.h = mul(o, act(next.c));
    return next;
  }

  LstmState<T> zero_state(int batch) const {
    return {Tensor<T>::zeros({batch, hidden}), Tensor<T>::zeros({batch, hidden})};
  }

  /// x [B, T, in] -> hidden outputs [B, T, H], from a zero state.
  Tensor<T> sequence(const Tensor<T>& x) const {
    if (x.rank() != 3) throw ShapeError("lstm: expected [B,T,F] input, got " + shape_str(x.shape()));
    LstmState<T> s = zero_state(x.dim(0));
    std::vector<Tensor<T>> outs;
    outs.reserve(x.dim(1));
    for (int t = 0; t < x.dim(1); ++t) {
      s = cell(time_step(x, t), s);
      outs.push_back(s.h);
    }
    return stack_steps(outs);
  }

  void register_params(ParamList<T>& p, const std::string& prefix) const {
    p.add(prefix + ".w_ih", w_ih);
    p.add(prefix + ".w_hh", w_hh);
    p.add(prefix + ".bias", bias);
  }
};

}  // namespace tagstrain::nn
