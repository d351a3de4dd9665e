#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tmiqa/aggregation.hpp"
#include "tmiqa/dataset.hpp"
#include "tmiqa/feature_cache.hpp"
#include "tmiqa/layers.hpp"
#include "tmiqa/metrics.hpp"
#include "tmiqa/plsr.hpp"

namespace tmiqa {

struct ComponentRange {
  std::size_t min = 10;
  std::size_t max = 20;

  /// Parses "10:20". Throws InvalidConfig.
  static ComponentRange parse(const std::string& text);
};

struct ExperimentConfig {
  LayerTriple layers = default_layers();
  std::size_t n_components = 15;
  /// When set, k is picked per run on a validation carve-out of the training set.
  std::optional<ComponentRange> sweep;
  std::size_t n_runs = 100;
  std::uint64_t base_seed = 0;
  DescriptorOptions descriptor;
  bool logistic_map = false;
  bool standardize = false;
  /// Worker threads; results do not depend on it.
  std::size_t jobs = 1;
};

using CategoryMetrics = std::array<std::optional<MetricTriple>, 3>;

struct RunResult {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
  std::size_t n_test = 0;
  std::size_t n_components = 0;
  MetricTriple overall;
  /// Indexed like kCategories; empty when a category has fewer than two
  /// test images or a constant MOS/prediction vector.
  CategoryMetrics per_category;
};

struct MedianMetrics {
  MetricTriple overall;
  CategoryMetrics per_category;
};

struct EvaluationReport {
  ExperimentConfig config;
  std::size_t n_images = 0;
  std::size_t feature_dim = 0;
  std::vector<RunResult> per_run;
  MedianMetrics medians;
  /// Wall time; deliberately left out of the serialized report.
  double elapsed_seconds = 0.0;
};

/// Run r uses make_split(seed = base_seed + r). PLSR is trained on the
/// training part only and evaluated on the test part. Any failed run aborts.
EvaluationReport run_experiment(const ExperimentConfig& config, const DatasetManifest& manifest,
                                const FeatureCache& cache);

/// Same, on an already assembled descriptor matrix (one row per entry).
EvaluationReport run_experiment(const ExperimentConfig& config, const DatasetManifest& manifest,
                                const Matrix& features);

MedianMetrics median_metrics(const std::vector<RunResult>& runs);

/// Pretty JSON with config, per_run and medians; byte-stable for equal inputs.
std::string report_to_json(const EvaluationReport& report);
/// One header line plus one line per run and a final "median" line.
std::string report_to_csv(const EvaluationReport& report);

/// Every choice of three depth sets (kept in depth order) and one layer per
/// chosen set.
std::vector<LayerTriple> enumerate_layer_combinations(const std::vector<std::vector<std::string>>& depth_sets);

struct SearchOptions {
  std::size_t n_runs = 100;
  std::uint64_t base_seed = 0;
  std::size_t n_components = 15;
  DescriptorOptions descriptor;
  bool standardize = false;
  std::size_t jobs = 1;
};

struct LayerSearchEntry {
  LayerTriple layers;
  double median_validation_srocc = 0.0;
};

/// Scores every combination by the median validation SROCC over n_runs
/// validation splits. Sorted descending, ties by combination name.
/// Throws IncompleteCache when a set layer is not cached.
std::vector<LayerSearchEntry> layer_search(const DatasetManifest& manifest, const FeatureCache& cache,
                                           const SearchOptions& options,
                                           const std::vector<std::vector<std::string>>& depth_sets =
                                               reference_depth_sets());

struct SweepEntry {
  std::size_t k = 0;
  double median_validation_srocc = 0.0;
};

struct SweepResult {
  std::size_t best_k = 0;
  std::vector<SweepEntry> entries;
};

/// Median validation SROCC of every k in the range across n_runs splits;
/// best_k maximizes it with ties toward smaller k.
SweepResult sweep_components(const DatasetManifest& manifest, const FeatureCache& cache,
                             const LayerTriple& layers, ComponentRange range, const SearchOptions& options);

/// Largest usable k for a training set of n rows and p features.
inline std::size_t max_components(std::size_t n_train, std::size_t p) {
  return n_train == 0 ? 0 : std::min(n_train - 1, p);
}

}  // namespace tmiqa
