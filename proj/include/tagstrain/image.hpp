#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tagstrain/error.hpp"

namespace tagstrain {

/// Row-major single-channel image.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
    if (w < 0 || h < 0) throw DomainError("image dimensions must be non-negative");
  }

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

  /// Pixel value with coordinates clamped to the border.
  double clamped(int x, int y) const {
    return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1));
  }

  bool empty_frame() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return v == 0.0; });
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// One slice's image sequence.
struct Cine {
  std::vector<Image> frames;
  double pixel_spacing_mm = 1.4;
  std::string case_id;

  int frame_count() const { return static_cast<int>(frames.size()); }
  int width() const { return frames.empty() ? 0 : frames.front().width; }
  int height() const { return frames.empty() ? 0 : frames.front().height; }

  void validate() const {
    if (frames.empty()) throw DomainError("cine has no frames");
    for (const Image& f : frames) {
      if (f.width != width() || f.height != height()) {
        throw ShapeError("cine frames differ in shape");
      }
      for (double v : f.data) {
        if (!std::isfinite(v)) throw DomainError("cine contains non-finite intensities");
      }
    }
  }
};

/// Bilinear sample at continuous pixel coordinates (pixel centres at i + 0.5),
/// clamped at the border.
inline double sample_bilinear(const Image& img, double x, double y) {
  const double fx = x - 0.5, fy = y - 0.5;
  const double x0f = std::floor(fx), y0f = std::floor(fy);
  const int x0 = static_cast<int>(x0f), y0 = static_cast<int>(y0f);
  const double ax = fx - x0f, ay = fy - y0f;
  const double top = (1.0 - ax) * img.clamped(x0, y0) + ax * img.clamped(x0 + 1, y0);
  const double bottom = (1.0 - ax) * img.clamped(x0, y0 + 1) + ax * img.clamped(x0 + 1, y0 + 1);
  return (1.0 - ay) * top + ay * bottom;
}

}  // namespace tagstrain
