#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tmiqa/backbone.hpp"
#include "tmiqa/image.hpp"
#include "tmiqa/layers.hpp"

namespace tmiqa {

enum class Statistic { kMean, kStd };

/// kMeanOnly halves the descriptor; it exists to compare against the
/// 4608-dimensional configuration.
enum class PoolingMode { kMeanStd, kMeanOnly };
enum class ScaleMode { kDual, kOriginalOnly };

std::string_view statistic_name(Statistic s) noexcept;
std::string_view pooling_mode_name(PoolingMode m) noexcept;
std::string_view scale_mode_name(ScaleMode m) noexcept;

/// Per-channel spatial mean and population standard deviation of one map.
struct PooledStats {
  std::string layer_id;
  ScaleId scale = ScaleId::kOriginal;
  std::vector<double> means;
  std::vector<double> stds;

  std::size_t channels() const noexcept { return means.size(); }
  bool operator==(const PooledStats&) const = default;
};

/// Throws EmptyFeatureMap for a map without cells or channels.
PooledStats pool_mean_std(const FeatureMap& fm);

/// One contiguous block of a descriptor.
struct LayoutSegment {
  std::string layer_id;
  ScaleId scale = ScaleId::kOriginal;
  Statistic statistic = Statistic::kMean;
  std::size_t offset = 0;
  std::size_t length = 0;

  bool operator==(const LayoutSegment&) const = default;
};

/// All statistics of one layer, scale-major then statistic. Offsets in
/// `layout` are relative to `values`.
struct LayerSegment {
  std::string layer_id;
  std::vector<LayoutSegment> layout;
  std::vector<double> values;
};

/// [o.means, o.stds, d.means, d.stds] (stds omitted in kMeanOnly).
/// Throws LayerMismatch or ScaleMismatch.
LayerSegment concat_scales(const PooledStats& original, const PooledStats& half,
                           PoolingMode pooling = PoolingMode::kMeanStd);

/// Segment built from the original scale only.
LayerSegment single_scale_segment(const PooledStats& original,
                                  PoolingMode pooling = PoolingMode::kMeanStd);

/// Flat descriptor: layer-major (low, mid, high), then scale (original, half),
/// then statistic (means, stds).
struct AggregatedFeatureVector {
  std::vector<LayoutSegment> layout;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  /// Block for the `position`-th layer (0 = low). Throws LayerMismatch if absent.
  std::span<const double> slice(std::size_t position, ScaleId scale, Statistic statistic) const;
};

/// Throws WrongSegmentCount unless exactly three segments are given.
AggregatedFeatureVector concat_layers(std::span<const LayerSegment> segments);

struct DescriptorOptions {
  PoolingMode pooling = PoolingMode::kMeanStd;
  ScaleMode scales = ScaleMode::kDual;
};

/// Normalize, run the backbone on both scales, pool and concatenate.
AggregatedFeatureVector extract_descriptor(const BackboneGraph& graph,
                                           const MultiScaleRepresentation& msr,
                                           const LayerTriple& layers,
                                           const DescriptorOptions& options = {});

/// Pools every requested layer at every scale the options call for:
/// result[i] is original-scale stats of layers[i], followed (kDual) by the
/// half-scale stats in the same order.
std::vector<PooledStats> pool_layers(const BackboneGraph& graph,
                                     const MultiScaleRepresentation& msr,
                                     std::span<const std::string> layers,
                                     ScaleMode scales = ScaleMode::kDual);

/// Builds a descriptor from already pooled stats of the three layers.
AggregatedFeatureVector assemble_descriptor(std::span<const PooledStats* const, 3> original,
                                            std::span<const PooledStats* const, 3> half,
                                            const DescriptorOptions& options);

/// Descriptor length for layers with the given channel counts.
std::size_t descriptor_length(std::size_t low_channels, std::size_t mid_channels,
                              std::size_t high_channels, const DescriptorOptions& options = {});

}  // namespace tmiqa
