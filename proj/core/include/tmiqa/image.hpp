#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace tmiqa {

/// RGB image with values in [0, 1], stored row-major by (row, column, channel).
class ImageTensor {
 public:
  static constexpr std::size_t kChannels = 3;

  /// Zero-filled image. Throws ImageTooSmall for a zero dimension.
  ImageTensor(std::size_t height, std::size_t width);
  /// Takes ownership of `data`; validates length and the [0, 1] range.
  ImageTensor(std::size_t height, std::size_t width, std::vector<double> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return kChannels; }

  double at(std::size_t row, std::size_t col, std::size_t ch) const {
    return data_[(row * width_ + col) * kChannels + ch];
  }
  double& at(std::size_t row, std::size_t col, std::size_t ch) {
    return data_[(row * width_ + col) * kChannels + ch];
  }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  bool operator==(const ImageTensor&) const = default;

 private:
  std::size_t height_;
  std::size_t width_;
  std::vector<double> data_;
};

struct MultiScaleRepresentation {
  ImageTensor original;
  ImageTensor downsampled;
};

/// Per-channel standardization constants of a backbone.
struct Normalization {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> scale{1.0, 1.0, 1.0};
};

/// Backbone input: standardized values, same (row, column, channel) layout.
struct NormalizedTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  static constexpr std::size_t channels() noexcept { return 3; }
};

enum class DownsampleFilter { kBox, kBicubic };

/// Smallest side accepted by build_multiscale.
inline constexpr std::size_t kMinMultiscaleSide = 64;

/// Decodes a PNG, JPEG or BMP file. 8-bit value v maps to v / 255.
/// Errors: FileNotFound, UnsupportedFormat, CorruptImage (messages carry the path).
ImageTensor load_image(const std::filesystem::path& path);

/// Halves both dimensions (floor). The box filter averages each 2x2 block and
/// drops a trailing odd row/column. Throws ImageTooSmall if a side is < 2.
ImageTensor downsample2x(const ImageTensor& img, DownsampleFilter filter = DownsampleFilter::kBox);

MultiScaleRepresentation build_multiscale(const ImageTensor& img,
                                          DownsampleFilter filter = DownsampleFilter::kBox);

/// out = (in - mean[c]) / scale[c]. Throws InvalidNormalization for a scale <= 0.
NormalizedTensor normalize_for_backbone(const ImageTensor& img, const Normalization& norm);

}  // namespace tmiqa
