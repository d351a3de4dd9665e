#include "tmiqa/image.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <string>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tmiqa/error.hpp"

namespace tmiqa {

namespace {

enum class RasterKind { kPng, kJpeg, kBmp, kUnknown };

RasterKind sniff(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::array<unsigned char, 8> head{};
  in.read(reinterpret_cast<char*>(head.data()), head.size());
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got >= 8 && head[0] == 0x89 && head[1] == 'P' && head[2] == 'N' && head[3] == 'G') {
    return RasterKind::kPng;
  }
  if (got >= 3 && head[0] == 0xFF && head[1] == 0xD8 && head[2] == 0xFF) return RasterKind::kJpeg;
  if (got >= 2 && head[0] == 'B' && head[1] == 'M') return RasterKind::kBmp;
  return RasterKind::kUnknown;
}

void check_dims(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) {
    throw Error(Errc::kImageTooSmall, "image dimensions must be positive, got " +
                                          std::to_string(height) + "x" + std::to_string(width));
  }
}

}  // namespace

ImageTensor::ImageTensor(std::size_t height, std::size_t width)
    : height_(height), width_(width) {
  check_dims(height, width);
  data_.assign(height * width * kChannels, 0.0);
}

ImageTensor::ImageTensor(std::size_t height, std::size_t width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  check_dims(height, width);
  if (data_.size() != height * width * kChannels) {
    throw Error(Errc::kDimensionMismatch, "image data length " + std::to_string(data_.size()) +
                                              " does not match " + std::to_string(height) + "x" +
                                              std::to_string(width) + "x3");
  }
  for (double v : data_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(Errc::kInvalidConfig, "image value outside [0,1]: " + std::to_string(v));
    }
  }
}

ImageTensor load_image(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(Errc::kFileNotFound, path.string());
  }
  if (sniff(path) == RasterKind::kUnknown) {
    throw Error(Errc::kUnsupportedFormat, path.string() + " is not a PNG, JPEG or BMP file");
  }

  cv::Mat bgr;
  try {
    bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw Error(Errc::kCorruptImage, path.string() + ": " + e.what());
  }
  if (bgr.empty() || bgr.type() != CV_8UC3) {
    throw Error(Errc::kCorruptImage, path.string() + " could not be decoded");
  }

  const auto height = static_cast<std::size_t>(bgr.rows);
  const auto width = static_cast<std::size_t>(bgr.cols);
  std::vector<double> data(height * width * 3);
  for (std::size_t r = 0; r < height; ++r) {
    const auto* row = bgr.ptr<std::uint8_t>(static_cast<int>(r));
    for (std::size_t c = 0; c < width; ++c) {
      double* px = &data[(r * width + c) * 3];
      px[0] = row[c * 3 + 2] / 255.0;
      px[1] = row[c * 3 + 1] / 255.0;
      px[2] = row[c * 3 + 0] / 255.0;
    }
  }
  return ImageTensor(height, width, std::move(data));
}

ImageTensor downsample2x(const ImageTensor& img, DownsampleFilter filter) {
  if (img.height() < 2 || img.width() < 2) {
    throw Error(Errc::kImageTooSmall, "downsampling needs at least 2x2, got " +
                                          std::to_string(img.height()) + "x" +
                                          std::to_string(img.width()));
  }
  const std::size_t out_h = img.height() / 2;
  const std::size_t out_w = img.width() / 2;
  ImageTensor out(out_h, out_w);

  if (filter == DownsampleFilter::kBicubic) {
    cv::Mat src(static_cast<int>(img.height()), static_cast<int>(img.width()), CV_64FC3,
                const_cast<double*>(img.data().data()));
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(static_cast<int>(out_w), static_cast<int>(out_h)), 0, 0,
               cv::INTER_CUBIC);
    const auto* p = dst.ptr<double>(0);
    auto values = out.data();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::clamp(p[i], 0.0, 1.0);
    return out;
  }

  for (std::size_t r = 0; r < out_h; ++r) {
    for (std::size_t c = 0; c < out_w; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double sum = img.at(2 * r, 2 * c, ch) + img.at(2 * r, 2 * c + 1, ch) +
                           img.at(2 * r + 1, 2 * c, ch) + img.at(2 * r + 1, 2 * c + 1, ch);
        out.at(r, c, ch) = std::clamp(sum * 0.25, 0.0, 1.0);
      }
    }
  }
  return out;
}

MultiScaleRepresentation build_multiscale(const ImageTensor& img, DownsampleFilter filter) {
  if (img.height() < kMinMultiscaleSide || img.width() < kMinMultiscaleSide) {
    throw Error(Errc::kImageTooSmall,
                "multi-scale input must be at least " + std::to_string(kMinMultiscaleSide) + "x" +
                    std::to_string(kMinMultiscaleSide) + ", got " + std::to_string(img.height()) +
                    "x" + std::to_string(img.width()));
  }
  return MultiScaleRepresentation{img, downsample2x(img, filter)};
}

NormalizedTensor normalize_for_backbone(const ImageTensor& img, const Normalization& norm) {
  for (std::size_t c = 0; c < 3; ++c) {
    if (!(norm.scale[c] > 0.0)) {
      throw Error(Errc::kInvalidNormalization,
                  "scale for channel " + std::to_string(c) + " must be positive");
    }
  }
  NormalizedTensor out{img.height(), img.width(), std::vector<float>(img.data().size())};
  const auto in = img.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::size_t c = i % 3;
    out.data[i] = static_cast<float>((in[i] - norm.mean[c]) / norm.scale[c]);
  }
  return out;
}

}  // namespace tmiqa
