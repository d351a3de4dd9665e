#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tmiqa {

/// Dense float tensor in C x H x W order (batch of one).
struct ChwTensor {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
};

/// Minimal evaluator for ONNX graphs built from convolution-network operators:
/// Conv, BatchNormalization, Relu, Add, MaxPool, Identity and Constant.
///
/// The graph is parsed once and is immutable afterwards; run() is const and
/// keeps all scratch memory local, so one instance can serve many threads.
class OnnxGraph {
 public:
  /// Highest ONNX IR version and default-domain opset this runtime accepts.
  static constexpr std::int64_t kMaxIrVersion = 10;
  static constexpr std::int64_t kMaxOpset = 21;

  /// Throws PackageNotFound, UnsupportedGraphVersion or GraphExecutionFailure
  /// (malformed protobuf).
  static OnnxGraph load(const std::filesystem::path& path);
  static OnnxGraph parse(std::span<const std::byte> bytes, const std::string& origin);

  OnnxGraph(OnnxGraph&&) noexcept;
  OnnxGraph& operator=(OnnxGraph&&) noexcept;
  ~OnnxGraph();

  const std::string& input_name() const;
  const std::vector<std::string>& output_names() const;
  /// True if `name` is a declared graph output or any node output.
  bool has_value(const std::string& name) const;

  /// Evaluates only the nodes needed for `outputs`.
  /// Throws InputTooSmall when a spatial extent collapses to zero and
  /// GraphExecutionFailure for shape or operator inconsistencies.
  std::map<std::string, ChwTensor> run(const ChwTensor& input,
                                       std::span<const std::string> outputs) const;

 private:
  struct Impl;
  explicit OnnxGraph(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

}  // namespace tmiqa
