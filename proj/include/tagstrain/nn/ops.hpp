#pragma once

// Differentiable operations. Layouts: images are NCHW, sequences are
// [batch, time, features], matrices are row-major.

#include <Eigen/Core>
#include <random>

#include "tagstrain/nn/tensor.hpp"

namespace tagstrain::nn {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

inline void require(bool ok, const std::string& op, const Shape& a, const Shape& b) {
  if (!ok) throw ShapeError(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

template <class T, class Fwd, class Deriv>
Tensor<T> unary(const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  auto out = make_result<T>(x.shape(), {&x});
  const auto xv = x.data();
  for (std::size_t i = 0; i < xv.size(); ++i) out->value[i] = fwd(xv[i]);
  if (out->requires_grad) {
    Node<T>* self = out.get();
    out->backward_fn = [self, x, deriv]() {
      auto gx = grad_of(x);
      const auto xv = x.data();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        gx[i] += self->grad[i] * deriv(xv[i], self->value[i]);
      }
    };
  }
  return Tensor<T>(out);
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "add", a.shape(), b.shape());
  auto out = detail::make_result<T>(a.shape(), {&a, &b});
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.data()[i] + b.data()[i];
  if (out->requires_grad) {
    Node<T>* self = out.get();
    out->backward_fn = [self, a, b]() {
      if (a.requires_grad()) {
        auto g = detail::grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i];
      }
      if (b.requires_grad()) {
        auto g = detail::grad_of(b);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i];
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "sub", a.shape(), b.shape());
  auto out = detail::make_result<T>(a.shape(), {&a, &b});
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.data()[i] - b.data()[i];
  if (out->requires_grad) {
    Node<T>* self = out.get();
    out->backward_fn = [self, a, b]() {
      if (a.requires_grad()) {
        auto g = detail::grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i];
      }
      if (b.requires_grad()) {
        auto g = detail::grad_of(b);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self->grad[i];
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "mul", a.shape(), b.shape());
  auto out = detail::make_result<T>(a.shape(), {&a, &b});
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.data()[i] * b.data()[i];
  if (out->requires_grad) {
    Node<T>* self = out.get();
    out->backward_fn = [self, a, b]() {
      if (a.requires_grad()) {
        auto g = detail::grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i] * b.data()[i];
      }
      if (b.requires_grad()) {
        auto g = detail::grad_of(b);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i] * a.data()[i];
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return detail::unary(x, [s](T v) { return s * v; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T alpha) {
  return detail::unary(
      x, [alpha](T v) { return v > T(0) ? v : alpha * v; },
      [alpha](T v, T) { return v > T(0) ? T(1) : alpha; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  auto out = detail::make_result<T>({1}, {&x});
  double s = 0.0;
  for (T v : x.data()) s += v;
  out->value[0] = static_cast<T>(s);
  if (out->requires_grad) {
    Node<T>* self = out.get();
    out->backward_fn = [self, x]() {
      for (T& g : detail::grad_of(x)) g += self->grad[0];
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

/// Same data, new shape.
template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  detail::require(shape_numel(shape) == x.numel(), "reshape", x.shape(), shape);
  auto out = detail::make_result<T>(std::move(shape), {&x});
  std::copy(x.data().begin(), x.data().end(), out->value.begin());
  if (out->requires_grad) {
    Node<T>* self = out.get();
    out->backward_fn = [self, x]() {
      auto g = detail::grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i];
    };
  }
  return Tensor<T>(out);
}

/// Columns [begin, begin + count) of a [N, D] matrix.
template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, int begin, int count) {
  if (x.rank() != 2 || begin < 0 || count <= 0 || begin + count > x.dim(1)) {
    throw ShapeError("slice_cols: bad range for shape " + shape_str(x.shape()));
  }
  const int n = x.dim(0), d = x.dim(1);
  auto out = detail::make_result<T>({n, count}, {&x});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < count; ++j) out->value[i * count + j] = x.data()[i * d + begin + j];
  }
  if (out->requires_grad) {
    Node<T>* self = out.get();
    out->backward_fn = [self, x, n, d, begin, count]() {
      auto g = detail::grad_of(x);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < count; ++j) g[i * d + begin + j] += self->grad[i * count + j];
      }
    };
  }
  return Tensor<T>(out);
}

/// Step t of a [B, T, F] sequence as a [B, F] matrix.
template <class T>
Tensor<T> time_step(const Tensor<T>& x, int t) {
  if (x.rank() != 3 || t < 0 || t >= x.dim(1)) {
    throw ShapeError("time_step: bad step for shape " + shape_str(x.shape()));
  }
  const int b = x.dim(0), steps = x.dim(1), f = x.dim(2);
  auto out = detail::make_result<T>({b, f}, {&x});
  for (int i = 0; i < b; ++i) {
    std::copy_n(x.data().begin() + (std::size_t(i) * steps + t) * f, f, out->value.begin() + i * f);
  }
  if (out->requires_grad) {
    Node<T>* self = out.get();
    out->backward_fn = [self, x, b, steps, f, t]() {
      auto g = detail::grad_of(x);
      for (int i = 0; i < b; ++i) {
        for (int j = 0; j < f; ++j) g[(std::size_t(i) * steps + t) * f + j] += self->grad[i * f + j];
      }
    };
  }
  return Tensor<T>(out);
}

/// Stacks T tensors of shape [B, D] into [B, T, D].
template <class T>
Tensor<T> stack_steps(const std::vector<Tensor<T>>& steps) {
  if (steps.empty()) throw ShapeError("stack_steps: no steps");
  const int b = steps[0].dim(0), d = steps[0].dim(1), n = static_cast<int>(steps.size());
  for (const auto& s : steps) detail::require(s.shape() == steps[0].shape(), "stack_steps", s.shape(), steps[0].shape());
  auto out = std::make_shared<Node<T>>();
  out->shape = {b, n, d};
  out->value.assign(shape_numel(out->shape), T(0));
  bool track = false;
  if (grad_mode_flag()) {
    for (const auto& s : steps) track = track || s.requires_grad();
  }
  for (int t = 0; t < n; ++t) {
    for (int i = 0; i < b; ++i) {
      std::copy_n(steps[t].data().begin() + i * d, d, out->value.begin() + (std::size_t(i) * n + t) * d);
    }
  }
  if (track) {
    out->requires_grad = true;
    for (const auto& s : steps) out->parents.push_back(s.node_ptr());
    Node<T>* self = out.get();
    out->backward_fn = [self, steps, b, n, d]() {
      for (int t = 0; t < n; ++t) {
        if (!steps[t].requires_grad()) continue;
        auto g = detail::grad_of(steps[t]);
        for (int i = 0; i < b; ++i) {
          for (int j = 0; j < d; ++j) g[i * d + j] += self->grad[(std::size_t(i) * n + t) * d + j];
        }
      }
    };
  }
  return Tensor<T>(out);
}

/// y = x W^T + b, with x [N, I], W [O, I], b [O] (b may be undefined).
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1)) {
    throw ShapeError("linear: incompatible shapes " + shape_str(x.shape()) + " and " +
                     shape_str(w.shape()));
  }
  const int n = x.dim(0), in = x.dim(1), o = w.dim(0);
  if (b.defined() && (b.rank() != 1 || b.dim(0) != o)) {
    throw ShapeError("linear: bias shape " + shape_str(b.shape()) + " does not match weight " +
                     shape_str(w.shape()));
  }
  auto out = detail::make_result<T>({n, o}, {&x, &w, &b});
  using detail::ConstMapMat;
  using detail::MapMat;
  MapMat<T> y(out->value.data(), n, o);
  y.noalias() = ConstMapMat<T>(x.data().data(), n, in) * ConstMapMat<T>(w.data().data(), o, in).transpose();
  if (b.defined()) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < o; ++j) out->value[i * o + j] += b.data()[j];
    }
  }
  if (out->requires_grad) {
    Node<T>* self = out.get();
    out->backward_fn = [self, x, w, b, n, in, o]() {
      ConstMapMat<T> gy(self->grad.data(), n, o);
      if (x.requires_grad()) {
        MapMat<T>(detail::grad_of(x).data(), n, in).noalias() +=
            gy * ConstMapMat<T>(w.data().data(), o, in);
      }
      if (w.requires_grad()) {
        MapMat<T>(detail::grad_of(w).data(), o, in).noalias() +=
            gy.transpose() * ConstMapMat<T>(x.data().data(), n, in);
      }
      if (b.defined() && b.requires_grad()) {
        auto gb = detail::grad_of(b);
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < o; ++j) gb[j] += self->grad[i * o + j];
        }
      }
    };
  }
  return Tensor<T>(out);
}

namespace detail {

// col[(c*K + ky)*K + kx][y*W + x] = img[c][y + ky - pad][x + kx - pad] (zero outside)
template <class T>
void im2col(const T* img, int c, int h, int w, int k, int pad, T* col) {
  const int hw = h * w;
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + static_cast<std::size_t>((ch * k + ky) * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          T* dst = row + y * w;
          if (sy < 0 || sy >= h) {
            std::fill_n(dst, w, T(0));
            continue;
          }
          const T* src = img + (static_cast<std::size_t>(ch) * h + sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - pad;
            dst[x] = (sx >= 0 && sx < w) ? src[sx] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, int c, int h, int w, int k, int pad, T* img) {
  const int hw = h * w;
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + static_cast<std::size_t>((ch * k + ky) * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          T* dst = img + (static_cast<std::size_t>(ch) * h + sy) * w;
          const T* src = row + y * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - pad;
            if (sx >= 0 && sx < w) dst[sx] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Stride-1 "same" convolution: x [N, C, H, W], w [F, C, K, K] (K odd), b [F].
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1) || w.dim(2) != w.dim(3) ||
      w.dim(2) % 2 == 0) {
    throw ShapeError("conv2d: incompatible shapes " + shape_str(x.shape()) + " and " +
                     shape_str(w.shape()));
  }
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int f = w.dim(0), k = w.dim(2), pad = k / 2;
  if (b.defined() && (b.rank() != 1 || b.dim(0) != f)) {
    throw ShapeError("conv2d: bias shape " + shape_str(b.shape()) + " does not match weight " +
                     shape_str(w.shape()));
  }
  const int ckk = c * k * k, hw = h * wd;
  auto out = detail::make_result<T>({n, f, h, wd}, {&x, &w, &b});
  using detail::ConstMapMat;
  using detail::MapMat;
  std::vector<T> col(static_cast<std::size_t>(ckk) * hw);
  ConstMapMat<T> wm(w.data().data(), f, ckk);
  for (int i = 0; i < n; ++i) {
    detail::im2col(x.data().data() + static_cast<std::size_t>(i) * c * hw, c, h, wd, k, pad, col.data());
    MapMat<T> y(out->value.data() + static_cast<std::size_t>(i) * f * hw, f, hw);
    y.noalias() = wm * ConstMapMat<T>(col.data(), ckk, hw);
    if (b.defined()) {
      for (int j = 0; j < f; ++j) y.row(j).array() += b.data()[j];
    }
  }
  if (out->requires_grad) {
    Node<T>* self = out.get();
    out->backward_fn = [self, x, w, b, n, c, h, wd, f, k, pad, ckk, hw]() {
      std::vector<T> col(static_cast<std::size_t>(ckk) * hw);
      std::vector<T> dcol(x.requires_grad() ? col.size() : 0);
      ConstMapMat<T> wm(w.data().data(), f, ckk);
      for (int i = 0; i < n; ++i) {
        ConstMapMat<T> gy(self->grad.data() + static_cast<std::size_t>(i) * f * hw, f, hw);
        if (w.requires_grad()) {
          detail::im2col(x.data().data() + static_cast<std::size_t>(i) * c * hw, c, h, wd, k, pad, col.data());
          MapMat<T>(detail::grad_of(w).data(), f, ckk).noalias() +=
              gy * ConstMapMat<T>(col.data(), ckk, hw).transpose();
        }
        if (b.defined() && b.requires_grad()) {
          auto gb = detail::grad_of(b);
          for (int j = 0; j < f; ++j) gb[j] += gy.row(j).sum();
        }
        if (x.requires_grad()) {
          MapMat<T>(dcol.data(), ckk, hw).noalias() = wm.transpose() * gy;
          detail::col2im_add(dcol.data(), c, h, wd, k, pad,
                             detail::grad_of(x).data() + static_cast<std::size_t>(i) * c * hw);
        }
      }
    };
  }
  return Tensor<T>(out);
}

/// 2x2 max pooling with stride 2 on [N, C, H, W] (odd trailing rows/cols dropped).
template <class T>
Tensor<T> maxpool2d(const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2) {
    throw ShapeError("maxpool2d: expected [N,C,H,W] with H,W >= 2, got " + shape_str(x.shape()));
  }
  const int nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h / 2, ow = w / 2;
  auto out = detail::make_result<T>({x.dim(0), x.dim(1), oh, ow}, {&x});
  std::vector<int> argmax(out->value.size());
  const auto xv = x.data();
  for (int p = 0; p < nc; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        int best = static_cast<int>((2 * oy) * w + 2 * ox);
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int idx = (2 * oy + dy) * w + 2 * ox + dx;
            if (xv[base + idx] > xv[base + best]) best = idx;
          }
        }
        const std::size_t o = (static_cast<std::size_t>(p) * oh + oy) * ow + ox;
        out->value[o] = xv[base + best];
        argmax[o] = best;
      }
    }
  }
  if (out->requires_grad) {
    Node<T>* self = out.get();
    out->backward_fn = [self, x, argmax = std::move(argmax), nc, h, w, oh, ow]() {
      auto g = detail::grad_of(x);
      const std::size_t per = static_cast<std::size_t>(oh) * ow;
      for (int p = 0; p < nc; ++p) {
        for (std::size_t o = 0; o < per; ++o) {
          g[static_cast<std::size_t>(p) * h * w + argmax[p * per + o]] += self->grad[p * per + o];
        }
      }
    };
  }
  return Tensor<T>(out);
}

/// Per-channel batch normalisation of [N, C, H, W] (or [N, C]). In training
/// mode batch statistics are used and the running estimates updated with
/// running = momentum * running + (1 - momentum) * batch.
template <class T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    Tensor<T>& running_mean, Tensor<T>& running_var, bool train,
                    T momentum = T(0.9), T eps = T(1e-5)) {
  if (x.rank() != 4 && x.rank() != 2) {
    throw ShapeError("batchnorm: expected [N,C,H,W] or [N,C], got " + shape_str(x.shape()));
  }
  const int n = x.dim(0), c = x.dim(1);
  const int spatial = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  if (gamma.numel() != std::size_t(c) || beta.numel() != std::size_t(c)) {
    throw ShapeError("batchnorm: parameter shape " + shape_str(gamma.shape()) +
                     " does not match input " + shape_str(x.shape()));
  }
  const std::size_t m = static_cast<std::size_t>(n) * spatial;
  auto out = detail::make_result<T>(x.shape(), {&x, &gamma, &beta});
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(c);
  const auto xv = x.data();
  auto at = [&](int i, int ch, int s) {
    return (static_cast<std::size_t>(i) * c + ch) * spatial + s;
  };
  for (int ch = 0; ch < c; ++ch) {
    double mu, var;
    if (train) {
      double s1 = 0.0;
      for (int i = 0; i < n; ++i)
        for (int s = 0; s < spatial; ++s) s1 += xv[at(i, ch, s)];
      mu = s1 / double(m);
      double s2 = 0.0;
      for (int i = 0; i < n; ++i)
        for (int s = 0; s < spatial; ++s) s2 += (xv[at(i, ch, s)] - mu) * (xv[at(i, ch, s)] - mu);
      var = s2 / double(m);
      const double unbiased = m > 1 ? var * double(m) / double(m - 1) : var;
      running_mean.data()[ch] = static_cast<T>(momentum * running_mean.data()[ch] + (1 - momentum) * mu);
      running_var.data()[ch] = static_cast<T>(momentum * running_var.data()[ch] + (1 - momentum) * unbiased);
    } else {
      mu = running_mean.data()[ch];
      var = running_var.data()[ch];
    }
    const double is = 1.0 / std::sqrt(var + double(eps));
    inv_std[ch] = static_cast<T>(is);
    for (int i = 0; i < n; ++i) {
      for (int s = 0; s < spatial; ++s) {
        const std::size_t idx = at(i, ch, s);
        xhat[idx] = static_cast<T>((xv[idx] - mu) * is);
        out->value[idx] = gamma.data()[ch] * xhat[idx] + beta.data()[ch];
      }
    }
  }
  if (out->requires_grad) {
    Node<T>* self = out.get();
    out->backward_fn = [self, x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std),
                        n, c, spatial, m, train]() {
      auto at = [&](int i, int ch, int s) {
        return (static_cast<std::size_t>(i) * c + ch) * spatial + s;
      };
      for (int ch = 0; ch < c; ++ch) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int i = 0; i < n; ++i) {
          for (int s = 0; s < spatial; ++s) {
            const std::size_t idx = at(i, ch, s);
            sum_dy += self->grad[idx];
            sum_dy_xhat += double(self->grad[idx]) * xhat[idx];
          }
        }
        if (gamma.requires_grad()) detail::grad_of(gamma)[ch] += static_cast<T>(sum_dy_xhat);
        if (beta.requires_grad()) detail::grad_of(beta)[ch] += static_cast<T>(sum_dy);
        if (!x.requires_grad()) continue;
        auto gx = detail::grad_of(x);
        const double g = gamma.data()[ch];
        const double is = inv_std[ch];
        for (int i = 0; i < n; ++i) {
          for (int s = 0; s < spatial; ++s) {
            const std::size_t idx = at(i, ch, s);
            if (train) {
              gx[idx] += static_cast<T>(g * is / double(m) *
                                        (double(m) * self->grad[idx] - sum_dy - xhat[idx] * sum_dy_xhat));
            } else {
              gx[idx] += static_cast<T>(g * is * self->grad[idx]);
            }
          }
        }
      }
    };
  }
  return Tensor<T>(out);
}

/// Inverted dropout: zeroes each element with probability p and scales the
/// survivors by 1/(1-p) in training mode; identity otherwise.
template <class T, class Rng>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw DomainError("dropout probability must be in [0, 1)");
  if (!train || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const T s = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (T& v : mask) v = keep(rng) ? s : T(0);
  return mul(x, Tensor<T>::from(x.shape(), std::move(mask)));
}

/// Mean of squared differences over all elements.
template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  return mean(square(sub(pred, target)));
}

}  // namespace tagstrain::nn
