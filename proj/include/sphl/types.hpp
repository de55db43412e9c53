// Domain types shared by every stage: histogram cubes, 2D maps, impulse
// responses, scale configuration and scene ground truth.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sphl {

// ----------------------------------------------------------------------------
// Errors
// ----------------------------------------------------------------------------
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class InvalidSir : public Error {
 public:
  using Error::Error;
};

class InvalidScene : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

// ----------------------------------------------------------------------------
// Cube<T>: counts indexed [wavelength][pixel row-major][time bin]
// ----------------------------------------------------------------------------
template <typename T>
class Cube {
 public:
  using value_type = T;

  Cube() = default;

  Cube(std::size_t rows, std::size_t cols, std::size_t bins,
       std::size_t wavelengths, double bin_width_ps = 1.0, T fill = T{})
      : rows_{rows},
        cols_{cols},
        bins_{bins},
        wavelengths_{wavelengths},
        bin_width_ps_{bin_width_ps} {
    if (rows == 0 || cols == 0 || bins == 0 || wavelengths == 0) {
      throw InvalidConfig("cube dimensions must be positive");
    }
    data_.assign(rows * cols * bins * wavelengths, fill);
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t bins() const noexcept { return bins_; }
  [[nodiscard]] std::size_t wavelengths() const noexcept { return wavelengths_; }
  [[nodiscard]] std::size_t pixels() const noexcept { return rows_ * cols_; }
  [[nodiscard]] double bin_width_ps() const noexcept { return bin_width_ps_; }
  void set_bin_width_ps(double w) noexcept { bin_width_ps_ = w; }

  [[nodiscard]] std::size_t index(std::size_t k, std::size_t pixel,
                                  std::size_t t) const noexcept {
    return (k * pixels() + pixel) * bins_ + t;
  }

  T& at(std::size_t k, std::size_t pixel, std::size_t t) noexcept {
    return data_[index(k, pixel, t)];
  }
  const T& at(std::size_t k, std::size_t pixel, std::size_t t) const noexcept {
    return data_[index(k, pixel, t)];
  }

  std::span<T> histogram(std::size_t k, std::size_t pixel) noexcept {
    return {data_.data() + index(k, pixel, 0), bins_};
  }
  std::span<const T> histogram(std::size_t k, std::size_t pixel) const noexcept {
    return {data_.data() + index(k, pixel, 0), bins_};
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  [[nodiscard]] double total() const {
    double s = 0.0;
    for (const T& v : data_) s += static_cast<double>(v);
    return s;
  }

  bool operator==(const Cube&) const = default;

 private:
  std::size_t rows_{0};
  std::size_t cols_{0};
  std::size_t bins_{0};
  std::size_t wavelengths_{0};
  double bin_width_ps_{1.0};
  std::vector<T> data_;
};

using HistogramCube = Cube<std::uint32_t>;
using SignalCube = Cube<double>;

// ----------------------------------------------------------------------------
// Image<T>: a row-major multi-channel 2D map, channels interleaved per pixel
// ----------------------------------------------------------------------------
template <typename T>
class Image {
 public:
  Image() = default;
  Image(std::size_t rows, std::size_t cols, std::size_t channels = 1,
        T fill = T{})
      : rows_{rows}, cols_{cols}, channels_{channels},
        data_(rows * cols * channels, fill) {}

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t channels() const noexcept { return channels_; }
  [[nodiscard]] std::size_t pixels() const noexcept { return rows_ * cols_; }

  T& operator()(std::size_t pixel, std::size_t ch = 0) noexcept {
    return data_[pixel * channels_ + ch];
  }
  const T& operator()(std::size_t pixel, std::size_t ch = 0) const noexcept {
    return data_[pixel * channels_ + ch];
  }
  T& at(std::size_t r, std::size_t c, std::size_t ch = 0) noexcept {
    return (*this)(r * cols_ + c, ch);
  }
  const T& at(std::size_t r, std::size_t c, std::size_t ch = 0) const noexcept {
    return (*this)(r * cols_ + c, ch);
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  [[nodiscard]] bool same_shape(std::size_t rows, std::size_t cols,
                                std::size_t channels) const noexcept {
    return rows_ == rows && cols_ == cols && channels_ == channels;
  }

  bool operator==(const Image&) const = default;

 private:
  std::size_t rows_{0};
  std::size_t cols_{0};
  std::size_t channels_{0};
  std::vector<T> data_;
};

using Map = Image<double>;
using Mask = Image<std::uint8_t>;

// ----------------------------------------------------------------------------
// Impulse response
// ----------------------------------------------------------------------------
struct SirChannel {
  std::vector<double> samples;  // normalized to unit sum
  double sigma{1.0};            // Gaussian-fit std, bins
  std::size_t peak_offset{0};
  std::size_t attack_width{0};
  std::size_t trail_width{0};

  /// Response at `offset` bins relative to the peak; zero outside support.
  [[nodiscard]] double at_offset(std::ptrdiff_t offset) const noexcept {
    const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(peak_offset) + offset;
    if (j < 0 || j >= static_cast<std::ptrdiff_t>(samples.size())) return 0.0;
    return samples[static_cast<std::size_t>(j)];
  }

  /// Linear interpolation for fractional offsets.
  [[nodiscard]] double at_offset(double offset) const noexcept {
    const double fl = std::floor(offset);
    const double frac = offset - fl;
    const auto i = static_cast<std::ptrdiff_t>(fl);
    const double a = at_offset(i);
    if (frac == 0.0) return a;
    return (1.0 - frac) * a + frac * at_offset(i + 1);
  }

  bool operator==(const SirChannel&) const = default;
};

struct ImpulseResponse {
  std::vector<SirChannel> channels;

  [[nodiscard]] std::size_t wavelengths() const noexcept {
    return channels.size();
  }
  const SirChannel& operator[](std::size_t k) const { return channels.at(k); }

  bool operator==(const ImpulseResponse&) const = default;
};

// ----------------------------------------------------------------------------
// Scale configuration
// ----------------------------------------------------------------------------
struct ScaleConfig {
  std::vector<std::size_t> windows{1, 3, 9};  // side lengths, q^(1) = 1
  std::size_t neighborhood{3};                // side of nu_n
  std::size_t guide_window{3};                // side of phi^0

  [[nodiscard]] std::size_t levels() const noexcept { return windows.size(); }

  /// q^(l) as a pixel count (side squared).
  [[nodiscard]] double area(std::size_t level) const {
    const double s = static_cast<double>(windows.at(level));
    return s * s;
  }

  /// Number of neighbours N-bar (centre included).
  [[nodiscard]] std::size_t neighbor_count() const noexcept {
    return neighborhood * neighborhood;
  }

  void validate() const {
    if (windows.empty()) throw InvalidConfig("scale config: no windows");
    if (windows.front() != 1) {
      throw InvalidConfig("scale config: first window must be 1");
    }
    for (std::size_t i = 0; i < windows.size(); ++i) {
      if (windows[i] % 2 == 0) {
        throw InvalidConfig("scale config: window sides must be odd");
      }
      if (i > 0 && windows[i] <= windows[i - 1]) {
        throw InvalidConfig("scale config: windows must be strictly increasing");
      }
    }
    if (neighborhood % 2 == 0 || guide_window % 2 == 0) {
      throw InvalidConfig("scale config: neighbourhood sides must be odd");
    }
    if (neighborhood != guide_window) {
      throw InvalidConfig(
          "scale config: neighborhood and guide_window must be equal");
    }
  }

  void validate(std::size_t rows, std::size_t cols) const {
    validate();
    const std::size_t lim = 2 * std::min(rows, cols);
    for (std::size_t w : windows) {
      if (w > lim) {
        throw InvalidConfig("scale config: window " + std::to_string(w) +
                            " larger than 2*min(rows,cols)=" +
                            std::to_string(lim));
      }
    }
    if (neighborhood > lim) {
      throw InvalidConfig("scale config: neighbourhood larger than image");
    }
  }

  bool operator==(const ScaleConfig&) const = default;
};

/// Windows 1, 3, 9, ... (3^(l-1)) for `levels` scales.
inline ScaleConfig default_scale_config(std::size_t levels) {
  if (levels == 0) throw InvalidConfig("scales must be >= 1");
  ScaleConfig cfg;
  cfg.windows.clear();
  std::size_t w = 1;
  for (std::size_t l = 0; l < levels; ++l) {
    cfg.windows.push_back(w);
    w *= 3;
  }
  return cfg;
}

// ----------------------------------------------------------------------------
// Scene ground truth
// ----------------------------------------------------------------------------
struct SceneGroundTruth {
  Map depth;         // bins; NaN where no target
  Map reflectivity;  // K channels, >= 0
  Mask mask;         // 1 = target present

  [[nodiscard]] std::size_t rows() const noexcept { return depth.rows(); }
  [[nodiscard]] std::size_t cols() const noexcept { return depth.cols(); }
  [[nodiscard]] std::size_t pixels() const noexcept { return depth.pixels(); }
  [[nodiscard]] std::size_t wavelengths() const noexcept {
    return reflectivity.channels();
  }
  [[nodiscard]] std::size_t target_count() const {
    return static_cast<std::size_t>(
        std::count(mask.data().begin(), mask.data().end(), std::uint8_t{1}));
  }

  void validate(std::size_t bins) const {
    if (!reflectivity.same_shape(depth.rows(), depth.cols(),
                                 reflectivity.channels()) ||
        !mask.same_shape(depth.rows(), depth.cols(), 1) ||
        depth.channels() != 1) {
      throw InvalidScene("scene maps have mismatched dimensions");
    }
    for (std::size_t n = 0; n < pixels(); ++n) {
      if (mask(n)) {
        const double d = depth(n);
        if (!std::isfinite(d) || d < 0.0 ||
            d > static_cast<double>(bins) - 1.0) {
          throw InvalidScene("depth " + std::to_string(d) +
                             " outside histogram range [0," +
                             std::to_string(bins - 1) + "]");
        }
      }
      for (std::size_t k = 0; k < wavelengths(); ++k) {
        if (!(reflectivity(n, k) >= 0.0)) {
          throw InvalidScene("negative or non-finite reflectivity");
        }
      }
    }
  }
};

}  // namespace sphl
