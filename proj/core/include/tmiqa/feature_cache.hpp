#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tmiqa/aggregation.hpp"
#include "tmiqa/backbone.hpp"
#include "tmiqa/dataset.hpp"
#include "tmiqa/matrix.hpp"

namespace tmiqa {

/// Pooled statistics of one layer at one scale, as stored on disk (float32).
struct CachedStats {
  std::vector<float> means;
  std::vector<float> stds;

  bool operator==(const CachedStats&) const = default;
};

struct CachedImage {
  std::string path;
  /// stats[layer][scale]: scale 0 = original, 1 = half.
  std::vector<std::array<CachedStats, 2>> stats;
};

/// Pooled statistics for every image and tapped layer, so any layer
/// combination can be assembled without re-running the backbone.
///
/// Binary layout (little-endian): "TMQF", u32 version, u32 n_images,
/// u32 n_layers, n_layers length-prefixed UTF-8 layer names; then per image a
/// length-prefixed UTF-8 path followed, per layer and per scale (original,
/// half), by u32 channel count, the means and the stds as float32.
class FeatureCache {
 public:
  static constexpr std::uint32_t kVersion = 1;

  std::vector<std::string> layers;
  std::vector<CachedImage> images;

  std::optional<std::size_t> layer_index(const std::string& name) const;
  const CachedImage* find(const std::string& path) const;

  /// Throws IoError.
  void write(const std::filesystem::path& path) const;
  /// Throws IoError or BadFileFormat (also for unknown versions).
  static FeatureCache read(const std::filesystem::path& path);

  /// Stats widened to double, in the same shape pool_mean_std returns.
  PooledStats stats(const CachedImage& image, std::size_t layer, ScaleId scale) const;

  /// Throws IncompleteCache if a layer is not cached.
  AggregatedFeatureVector assemble(const CachedImage& image, const LayerTriple& layers,
                                   const DescriptorOptions& options = {}) const;

  /// One descriptor row per manifest entry, in manifest order.
  /// Throws IncompleteCache if an entry or a layer is missing.
  Matrix assemble_matrix(const DatasetManifest& manifest, const LayerTriple& layers,
                         const DescriptorOptions& options = {}) const;
};

/// float32 rounding applied when stats are cached.
CachedStats quantize(const PooledStats& stats);

struct CacheReport {
  std::size_t processed = 0;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

struct CacheOptions {
  std::size_t jobs = 1;
  DownsampleFilter filter = DownsampleFilter::kBox;
};

/// Runs the backbone over every manifest image (both scales) and streams the
/// pooled statistics of `layers` to `out_path` in manifest order. Images that
/// fail to decode or are too small are skipped with a warning; I/O errors
/// abort. The file is written to a temporary name and renamed when complete.
CacheReport cache_features(const DatasetManifest& manifest, const BackboneGraph& graph,
                           std::span<const std::string> layers, const std::filesystem::path& out_path,
                           const CacheOptions& options = {});

}  // namespace tmiqa
