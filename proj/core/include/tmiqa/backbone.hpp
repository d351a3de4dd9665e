#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tmiqa/graph_runtime.hpp"
#include "tmiqa/image.hpp"

namespace tmiqa {

enum class ScaleId { kOriginal, kHalf };

std::string_view scale_name(ScaleId scale) noexcept;

/// Activations of one tapped layer at one scale, row-major by (row, column, channel).
struct FeatureMap {
  std::string layer_id;
  ScaleId scale = ScaleId::kOriginal;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> data;

  float at(std::size_t row, std::size_t col, std::size_t ch) const {
    return data[(row * width + col) * channels + ch];
  }
};

/// A truncated backbone loaded from a model package: a directory holding one
/// ONNX graph file plus manifest.json
///
///   {"format_version": 1, "tap_layers": [...], "channels": {layer: int},
///    "output_stride": {layer: int},
///    "preprocessing": {"mean": [3], "scale": [3]}, "source_checkpoint": "..."}
///
/// Immutable after loading and safe to share between threads.
class BackboneGraph {
 public:
  static constexpr int kFormatVersion = 1;

  /// Throws PackageNotFound, ManifestMismatch or UnsupportedGraphVersion.
  static BackboneGraph load(const std::filesystem::path& package_dir);

  const std::vector<std::string>& tap_layers() const noexcept { return tap_layers_; }
  bool has_layer(const std::string& layer) const { return channels_.contains(layer); }
  std::size_t channels(const std::string& layer) const;
  std::size_t output_stride(const std::string& layer) const;
  const Normalization& preprocessing() const noexcept { return preprocessing_; }
  const std::string& source_checkpoint() const noexcept { return source_checkpoint_; }

  /// Runs the graph once and returns one map per requested layer. Output
  /// spatial sizes are whatever the graph produces; channels are checked
  /// against the manifest.
  /// Throws LayerMismatch (layer not tapped), InputTooSmall (names the layer
  /// and the required minimum side) or GraphExecutionFailure.
  std::map<std::string, FeatureMap> extract_feature_maps(const NormalizedTensor& input,
                                                         std::span<const std::string> layers,
                                                         ScaleId scale) const;

 private:
  BackboneGraph(OnnxGraph graph) : graph_(std::move(graph)) {}

  OnnxGraph graph_;
  std::vector<std::string> tap_layers_;
  std::map<std::string, std::size_t> channels_;
  std::map<std::string, std::size_t> strides_;
  Normalization preprocessing_;
  std::string source_checkpoint_;
};

inline BackboneGraph load_graph(const std::filesystem::path& package_dir) {
  return BackboneGraph::load(package_dir);
}

}  // namespace tmiqa
