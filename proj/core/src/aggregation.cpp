#include "tmiqa/aggregation.hpp"

#include <array>
#include <cmath>
#include <map>

#include "tmiqa/error.hpp"

namespace tmiqa {

std::string_view statistic_name(Statistic s) noexcept { return s == Statistic::kMean ? "mean" : "std"; }

std::string_view pooling_mode_name(PoolingMode m) noexcept {
  return m == PoolingMode::kMeanStd ? "mean_std" : "mean_only";
}

std::string_view scale_mode_name(ScaleMode m) noexcept {
  return m == ScaleMode::kDual ? "dual" : "original_only";
}

PooledStats pool_mean_std(const FeatureMap& fm) {
  const std::size_t cells = fm.height * fm.width;
  if (cells == 0 || fm.channels == 0) {
    throw Error(Errc::kEmptyFeatureMap, "feature map of layer '" + fm.layer_id + "' is empty");
  }
  if (fm.data.size() != cells * fm.channels) {
    throw Error(Errc::kDimensionMismatch, "feature map of layer '" + fm.layer_id + "' has wrong size");
  }
  PooledStats out{fm.layer_id, fm.scale, std::vector<double>(fm.channels), std::vector<double>(fm.channels)};
  const double n = static_cast<double>(cells);
  const std::size_t ch = fm.channels;
  // Accumulate relative to the first cell: a constant channel yields its
  // value as the mean and a standard deviation of exactly zero. Cell-major
  // sweeps keep the reads contiguous; per channel the order is unchanged.
  std::vector<double> shifted(ch, 0.0);
  for (std::size_t i = 0; i < cells; ++i) {
    const float* cell = fm.data.data() + i * ch;
    for (std::size_t c = 0; c < ch; ++c) shifted[c] += static_cast<double>(cell[c]) - fm.data[c];
  }
  for (std::size_t c = 0; c < ch; ++c) out.means[c] = fm.data[c] + shifted[c] / n;
  std::vector<double> ss(ch, 0.0);
  for (std::size_t i = 0; i < cells; ++i) {
    const float* cell = fm.data.data() + i * ch;
    for (std::size_t c = 0; c < ch; ++c) {
      const double d = cell[c] - out.means[c];
      ss[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < ch; ++c) out.stds[c] = std::sqrt(ss[c] / n);
  return out;
}

namespace {

void append_stats(LayerSegment& seg, const PooledStats& stats, PoolingMode pooling) {
  auto push = [&](Statistic s, const std::vector<double>& v) {
    seg.layout.push_back({stats.layer_id, stats.scale, s, seg.values.size(), v.size()});
    seg.values.insert(seg.values.end(), v.begin(), v.end());
  };
  push(Statistic::kMean, stats.means);
  if (pooling == PoolingMode::kMeanStd) push(Statistic::kStd, stats.stds);
}

}  // namespace

LayerSegment concat_scales(const PooledStats& original, const PooledStats& half, PoolingMode pooling) {
  if (original.scale != ScaleId::kOriginal || half.scale != ScaleId::kHalf) {
    throw Error(Errc::kScaleMismatch, "expected (original, half) statistics for layer '" +
                                          original.layer_id + "'");
  }
  if (original.layer_id != half.layer_id || original.channels() != half.channels()) {
    throw Error(Errc::kLayerMismatch, "cannot join layer '" + original.layer_id + "' with '" +
                                          half.layer_id + "'");
  }
  LayerSegment seg{original.layer_id, {}, {}};
  append_stats(seg, original, pooling);
  append_stats(seg, half, pooling);
  return seg;
}

LayerSegment single_scale_segment(const PooledStats& original, PoolingMode pooling) {
  if (original.scale != ScaleId::kOriginal) {
    throw Error(Errc::kScaleMismatch, "expected original-scale statistics for layer '" +
                                          original.layer_id + "'");
  }
  LayerSegment seg{original.layer_id, {}, {}};
  append_stats(seg, original, pooling);
  return seg;
}

AggregatedFeatureVector concat_layers(std::span<const LayerSegment> segments) {
  if (segments.size() != 3) {
    throw Error(Errc::kWrongSegmentCount,
                "expected 3 layer segments (low, mid, high), got " + std::to_string(segments.size()));
  }
  AggregatedFeatureVector out;
  for (const auto& seg : segments) {
    if (seg.layout.empty()) throw Error(Errc::kWrongSegmentCount, "empty segment for '" + seg.layer_id + "'");
    const std::size_t base = out.values.size();
    for (auto entry : seg.layout) {
      if (entry.offset + entry.length > seg.values.size()) {
        throw Error(Errc::kDimensionMismatch, "segment layout of '" + seg.layer_id + "' overruns its values");
      }
      entry.offset += base;
      out.layout.push_back(std::move(entry));
    }
    out.values.insert(out.values.end(), seg.values.begin(), seg.values.end());
  }
  return out;
}

std::span<const double> AggregatedFeatureVector::slice(std::size_t position, ScaleId scale,
                                                       Statistic statistic) const {
  // Each layer contributes a run of segments starting with (original, mean).
  std::size_t layer_index = 0;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (i > 0 && layout[i].scale == ScaleId::kOriginal && layout[i].statistic == Statistic::kMean) {
      ++layer_index;
    }
    if (layer_index == position && layout[i].scale == scale && layout[i].statistic == statistic) {
      return std::span<const double>(values).subspan(layout[i].offset, layout[i].length);
    }
  }
  throw Error(Errc::kLayerMismatch, "descriptor has no block for layer position " +
                                        std::to_string(position) + " (" +
                                        std::string(scale_name(scale)) + ", " +
                                        std::string(statistic_name(statistic)) + ")");
}

std::vector<PooledStats> pool_layers(const BackboneGraph& graph, const MultiScaleRepresentation& msr,
                                     std::span<const std::string> layers, ScaleMode scales) {
  std::vector<PooledStats> out;
  auto run_scale = [&](const ImageTensor& img, ScaleId scale) {
    const auto input = normalize_for_backbone(img, graph.preprocessing());
    const auto maps = graph.extract_feature_maps(input, layers, scale);
    for (const auto& layer : layers) out.push_back(pool_mean_std(maps.at(layer)));
  };
  run_scale(msr.original, ScaleId::kOriginal);
  if (scales == ScaleMode::kDual) run_scale(msr.downsampled, ScaleId::kHalf);
  return out;
}

AggregatedFeatureVector assemble_descriptor(std::span<const PooledStats* const, 3> original,
                                            std::span<const PooledStats* const, 3> half,
                                            const DescriptorOptions& options) {
  std::array<LayerSegment, 3> segments;
  for (std::size_t i = 0; i < 3; ++i) {
    segments[i] = options.scales == ScaleMode::kDual
                      ? concat_scales(*original[i], *half[i], options.pooling)
                      : single_scale_segment(*original[i], options.pooling);
  }
  return concat_layers(segments);
}

AggregatedFeatureVector extract_descriptor(const BackboneGraph& graph, const MultiScaleRepresentation& msr,
                                           const LayerTriple& layers, const DescriptorOptions& options) {
  const auto names = layers.as_array();
  const auto stats = pool_layers(graph, msr, names, options.scales);
  std::array<const PooledStats*, 3> original{&stats[0], &stats[1], &stats[2]};
  std::array<const PooledStats*, 3> half{nullptr, nullptr, nullptr};
  if (options.scales == ScaleMode::kDual) half = {&stats[3], &stats[4], &stats[5]};
  return assemble_descriptor(original, half, options);
}

std::size_t descriptor_length(std::size_t low_channels, std::size_t mid_channels, std::size_t high_channels,
                              const DescriptorOptions& options) {
  const std::size_t stats = options.pooling == PoolingMode::kMeanStd ? 2 : 1;
  const std::size_t scales = options.scales == ScaleMode::kDual ? 2 : 1;
  return (low_channels + mid_channels + high_channels) * stats * scales;
}

}  // namespace tmiqa
