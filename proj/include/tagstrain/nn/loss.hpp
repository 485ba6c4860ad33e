#pragma once

// Training losses: box-corner regression and the position + strain tracking
// loss. Landmark tensors hold 336 = 168 x (x, y) values per frame in ring-major
// landmark order.

#include <array>
#include <cmath>
#include <vector>

#include "tagstrain/geometry.hpp"
#include "tagstrain/nn/ops.hpp"

namespace tagstrain::nn {

inline constexpr int kCoordsPerFrame = 2 * kLandmarks;

/// Mean squared difference of box corners.
template <class T>
Tensor<T> bbox_mse_loss(const Tensor<T>& pred, const Tensor<T>& truth) {
  detail::require(pred.shape() == truth.shape(), "bbox_mse_loss", pred.shape(), truth.shape());
  return mse_loss(pred, truth);
}

struct LossBreakdown {
  double total = 0.0;
  double mse_position = 0.0;  // masked mean of per-frame MSE
  double radial_term = 0.0;   // masked mean of |radial strain error| (before omega)
  double circ_term = 0.0;     // masked mean of |midwall circ strain error| (before omega)
  double omega = 1.0;
  std::vector<double> per_frame;   // batch mean of each frame's loss
  std::vector<double> frame_mask;  // batch mean of the mask
};

template <class T>
struct TrackingLoss {
  Tensor<T> total;
  LossBreakdown breakdown;
};

namespace detail {

struct Xy {
  double x, y;
};

template <class V>
Xy landmark_at(const V& v, std::size_t frame_offset, int ring, int spoke) {
  const std::size_t i = frame_offset + 2 * static_cast<std::size_t>(landmark_index(ring, spoke));
  return {static_cast<double>(v[i]), static_cast<double>(v[i + 1])};
}

/// Squared lengths of the 24 transmural chords and the 24 midwall segments.
template <class V>
void segment_lengths(const V& v, std::size_t off, std::array<double, kSpokes>& radial,
                     std::array<double, kSpokes>& circ) {
  for (int k = 0; k < kSpokes; ++k) {
    const Xy a = landmark_at(v, off, 0, k), b = landmark_at(v, off, kRings - 1, k);
    radial[k] = (b.x - a.x) * (b.x - a.x) + (b.y - a.y) * (b.y - a.y);
    const Xy c = landmark_at(v, off, kMidwallRing, k);
    const Xy d = landmark_at(v, off, kMidwallRing, (k + 1) % kSpokes);
    circ[k] = (d.x - c.x) * (d.x - c.x) + (d.y - c.y) * (d.y - c.y);
  }
}

inline double mean_green(const std::array<double, kSpokes>& cur, const std::array<double, kSpokes>& ref) {
  double s = 0.0;
  for (int k = 0; k < kSpokes; ++k) s += 0.5 * (cur[k] / ref[k] - 1.0);
  return s / kSpokes;
}

inline double sign(double v) { return v > 0.0 ? 1.0 : v < 0.0 ? -1.0 : 0.0; }

}  // namespace detail

/// pred and truth: [B, T, 336] (or [T, 336] for one sequence); mask: B*T
/// weights (empty means all frames count). Per case the loss is the masked
/// mean over frames of MSE_t + omega*|radial error_t| + omega*|circ error_t|,
/// with strains referenced to each sequence's own frame 0; the total is the
/// mean over cases.
template <class T>
TrackingLoss<T> composite_tracking_loss(const Tensor<T>& pred, const Tensor<T>& truth, double omega,
                                        std::vector<double> mask = {}) {
  detail::require(pred.shape() == truth.shape(), "composite_tracking_loss", pred.shape(), truth.shape());
  if (!(pred.rank() == 3 || pred.rank() == 2) || pred.dim(-1) != kCoordsPerFrame) {
    throw ShapeError("composite_tracking_loss: expected [B,T,336] or [T,336], got " +
                     shape_str(pred.shape()));
  }
  const int batch = pred.rank() == 3 ? pred.dim(0) : 1;
  const int steps = pred.rank() == 3 ? pred.dim(1) : pred.dim(0);
  if (mask.empty()) mask.assign(static_cast<std::size_t>(batch) * steps, 1.0);
  if (mask.size() != static_cast<std::size_t>(batch) * steps) {
    throw ShapeError("composite_tracking_loss: mask length " + std::to_string(mask.size()) +
                     " does not match " + std::to_string(batch) + "x" + std::to_string(steps) + " frames");
  }
  const auto p = pred.data();
  const auto q = truth.data();
  const std::size_t frame_len = kCoordsPerFrame;
  const std::size_t seq_len = frame_len * steps;

  LossBreakdown out;
  out.omega = omega;
  out.per_frame.assign(steps, 0.0);
  out.frame_mask.assign(steps, 0.0);

  std::vector<double> grad(pred.numel(), 0.0);
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const double* m = mask.data() + static_cast<std::size_t>(b) * steps;
    if (!(m[0] > 0.0)) throw DomainError("composite_tracking_loss: reference frame 0 must be unmasked");
    double msum = 0.0;
    for (int t = 0; t < steps; ++t) {
      if (m[t] < 0.0) throw DomainError("composite_tracking_loss: negative frame weight");
      msum += m[t];
    }
    const std::size_t base = static_cast<std::size_t>(b) * seq_len;
    std::array<double, kSpokes> pr0, pc0, qr0, qc0;
    detail::segment_lengths(p, base, pr0, pc0);
    detail::segment_lengths(q, base, qr0, qc0);
    for (int k = 0; k < kSpokes; ++k) {
      if (!(pr0[k] > 0.0 && pc0[k] > 0.0 && qr0[k] > 0.0 && qc0[k] > 0.0)) {
        throw DegenerateGeometry("composite_tracking_loss: zero-length reference segment");
      }
    }
    // d(case loss)/d(frame-t strain), accumulated per reference segment for frame 0.
    std::array<double, kSpokes> ref_r_coef{}, ref_c_coef{};
    double case_loss = 0.0, case_mse = 0.0, case_r = 0.0, case_c = 0.0;
    for (int t = 0; t < steps; ++t) {
      const std::size_t off = base + frame_len * t;
      double mse = 0.0;
      for (std::size_t i = 0; i < frame_len; ++i) {
        const double d = static_cast<double>(p[off + i]) - q[off + i];
        mse += d * d;
      }
      mse /= kLandmarks;
      std::array<double, kSpokes> pr, pc, qr, qc;
      detail::segment_lengths(p, off, pr, pc);
      detail::segment_lengths(q, off, qr, qc);
      const double dr = detail::mean_green(pr, pr0) - detail::mean_green(qr, qr0);
      const double dc = detail::mean_green(pc, pc0) - detail::mean_green(qc, qc0);
      const double frame_loss = mse + omega * std::abs(dr) + omega * std::abs(dc);
      const double w = m[t] / msum;
      case_loss += w * frame_loss;
      case_mse += w * mse;
      case_r += w * std::abs(dr);
      case_c += w * std::abs(dc);
      out.per_frame[t] += frame_loss / batch;
      out.frame_mask[t] += m[t] / batch;
      if (w == 0.0) continue;

      const double gw = w / batch;
      for (std::size_t i = 0; i < frame_len; ++i) {
        grad[off + i] += gw * 2.0 * (static_cast<double>(p[off + i]) - q[off + i]) / kLandmarks;
      }
      // strain = (1/24) sum_k 0.5 (len_t^2 / len_0^2 - 1)
      const double sr = gw * omega * detail::sign(dr) * 0.5 / kSpokes;
      const double sc = gw * omega * detail::sign(dc) * 0.5 / kSpokes;
      for (int k = 0; k < kSpokes; ++k) {
        const auto i0 = off + 2 * static_cast<std::size_t>(landmark_index(0, k));
        const auto i6 = off + 2 * static_cast<std::size_t>(landmark_index(kRings - 1, k));
        const double gx = 2.0 * (static_cast<double>(p[i6]) - p[i0]) / pr0[k] * sr;
        const double gy = 2.0 * (static_cast<double>(p[i6 + 1]) - p[i0 + 1]) / pr0[k] * sr;
        grad[i6] += gx;
        grad[i6 + 1] += gy;
        grad[i0] -= gx;
        grad[i0 + 1] -= gy;
        ref_r_coef[k] -= sr * pr[k] / (pr0[k] * pr0[k]);

        const auto ia = off + 2 * static_cast<std::size_t>(landmark_index(kMidwallRing, k));
        const auto ib = off + 2 * static_cast<std::size_t>(landmark_index(kMidwallRing, (k + 1) % kSpokes));
        const double hx = 2.0 * (static_cast<double>(p[ib]) - p[ia]) / pc0[k] * sc;
        const double hy = 2.0 * (static_cast<double>(p[ib + 1]) - p[ia + 1]) / pc0[k] * sc;
        grad[ib] += hx;
        grad[ib + 1] += hy;
        grad[ia] -= hx;
        grad[ia + 1] -= hy;
        ref_c_coef[k] -= sc * pc[k] / (pc0[k] * pc0[k]);
      }
    }
    // Chain through the frame-0 reference lengths.
    for (int k = 0; k < kSpokes; ++k) {
      const auto i0 = base + 2 * static_cast<std::size_t>(landmark_index(0, k));
      const auto i6 = base + 2 * static_cast<std::size_t>(landmark_index(kRings - 1, k));
      const double gx = 2.0 * (static_cast<double>(p[i6]) - p[i0]) * ref_r_coef[k];
      const double gy = 2.0 * (static_cast<double>(p[i6 + 1]) - p[i0 + 1]) * ref_r_coef[k];
      grad[i6] += gx;
      grad[i6 + 1] += gy;
      grad[i0] -= gx;
      grad[i0 + 1] -= gy;
      const auto ia = base + 2 * static_cast<std::size_t>(landmark_index(kMidwallRing, k));
      const auto ib = base + 2 * static_cast<std::size_t>(landmark_index(kMidwallRing, (k + 1) % kSpokes));
      const double hx = 2.0 * (static_cast<double>(p[ib]) - p[ia]) * ref_c_coef[k];
      const double hy = 2.0 * (static_cast<double>(p[ib + 1]) - p[ia + 1]) * ref_c_coef[k];
      grad[ib] += hx;
      grad[ib + 1] += hy;
      grad[ia] -= hx;
      grad[ia + 1] -= hy;
    }
    total += case_loss / batch;
    out.mse_position += case_mse / batch;
    out.radial_term += case_r / batch;
    out.circ_term += case_c / batch;
  }
  out.total = total;

  auto node = detail::make_result<T>({1}, {&pred});
  node->value[0] = static_cast<T>(total);
  if (node->requires_grad) {
    Node<T>* self = node.get();
    node->backward_fn = [self, pred, grad = std::move(grad)]() {
      auto g = detail::grad_of(pred);
      const double s = self->grad[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += static_cast<T>(s * grad[i]);
    };
  }
  return {Tensor<T>(node), std::move(out)};
}

/// Flattens a landmark sequence into a [T, 336] tensor.
template <class T>
Tensor<T> sequence_tensor(const LandmarkSequence& seq) {
  std::vector<T> v;
  v.reserve(seq.size() * kCoordsPerFrame);
  for (const LandmarkGrid& g : seq.frames) {
    for (const Point2& pt : g.points) {
      v.push_back(static_cast<T>(pt.x));
      v.push_back(static_cast<T>(pt.y));
    }
  }
  return Tensor<T>::from({static_cast<int>(seq.size()), kCoordsPerFrame}, std::move(v));
}

/// Loss of a predicted sequence against truth, without gradients.
inline LossBreakdown composite_tracking_loss(const LandmarkSequence& pred, const LandmarkSequence& truth,
                                             double omega, std::vector<double> mask = {}) {
  return composite_tracking_loss(sequence_tensor<double>(pred), sequence_tensor<double>(truth), omega,
                                 std::move(mask))
      .breakdown;
}

}  // namespace tagstrain::nn
