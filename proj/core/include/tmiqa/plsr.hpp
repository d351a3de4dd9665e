#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tmiqa/matrix.hpp"

namespace tmiqa {

/// Provenance stored alongside a model (serialized as JSON in .plsr files).
struct TrainingMeta {
  std::size_t n_samples = 0;
  std::size_t feature_dim = 0;
  std::string layer_config;
  std::string pooling = "mean_std";
  std::string scales = "dual";
  std::size_t requested_components = 0;
  bool standardized = false;

  bool operator==(const TrainingMeta&) const = default;
};

/// Single-response PLS regression model: y_hat = y_mean + (x - x_mean) . b
class PlsrModel {
 public:
  PlsrModel() = default;
  PlsrModel(std::size_t n_components, std::vector<double> x_mean, double y_mean,
            std::vector<double> coefficients, TrainingMeta meta);

  std::size_t n_components() const noexcept { return n_components_; }
  std::size_t feature_dim() const noexcept { return x_mean_.size(); }
  const std::vector<double>& x_mean() const noexcept { return x_mean_; }
  double y_mean() const noexcept { return y_mean_; }
  const std::vector<double>& coefficients() const noexcept { return coefficients_; }
  const TrainingMeta& meta() const noexcept { return meta_; }
  TrainingMeta& meta() noexcept { return meta_; }

  /// Throws DimensionMismatch.
  double predict_one(std::span<const double> x) const;
  std::vector<double> predict(const Matrix& x) const;

  bool operator==(const PlsrModel&) const = default;

 private:
  std::size_t n_components_ = 0;
  std::vector<double> x_mean_;
  double y_mean_ = 0.0;
  std::vector<double> coefficients_;
  TrainingMeta meta_;
};

struct PlsrOptions {
  /// z-score columns before fitting; coefficients are mapped back to raw units.
  bool standardize = false;
  /// Stop extracting components once ||X'y|| of the deflated data drops below this.
  double residual_tolerance = 1e-12;
};

/// Model plus the latent score vectors t_1..t_k of the training rows.
struct PlsrFit {
  PlsrModel model;
  std::vector<std::vector<double>> scores;
};

/// NIPALS PLS1. Throws DegenerateTarget (constant y), TooManyComponents
/// (k outside [1, min(N-1, p)]), NumericalBreakdown, DimensionMismatch.
/// The returned model may hold fewer than k components if the residual
/// cross-covariance vanishes first.
PlsrModel fit(const Matrix& x, std::span<const double> y, std::size_t k, const PlsrOptions& options = {});
PlsrFit fit_detailed(const Matrix& x, std::span<const double> y, std::size_t k,
                     const PlsrOptions& options = {});

/// Models with 1..k components from one NIPALS pass; element i has i+1
/// components (or fewer after early stopping, in which case the list ends early).
std::vector<PlsrModel> fit_path(const Matrix& x, std::span<const double> y, std::size_t k,
                                const PlsrOptions& options = {});

std::vector<double> predict(const PlsrModel& model, const Matrix& x);

struct ComponentSelection {
  std::size_t best_k = 0;
  /// (k, validation SROCC) for every k in the range, ascending k.
  std::vector<std::pair<std::size_t, double>> per_k;
};

/// Fits k in [k_min, k_max] on the training rows and picks the highest
/// validation SROCC; ties go to the smaller k.
ComponentSelection select_components(const Matrix& x_train, std::span<const double> y_train,
                                     const Matrix& x_val, std::span<const double> y_val,
                                     std::size_t k_min, std::size_t k_max,
                                     const PlsrOptions& options = {});

/// Binary model file: "PLSR", u32 version, u32 k, u32 p, x_mean (p f64),
/// y_mean (f64), b (p f64), u32-length-prefixed UTF-8 JSON training meta.
/// All numbers little-endian.
inline constexpr std::uint32_t kPlsrFileVersion = 1;
void save_model(const PlsrModel& model, const std::filesystem::path& path);
/// Throws BadFileFormat (also for unknown versions) or IoError.
PlsrModel load_model(const std::filesystem::path& path);

}  // namespace tmiqa
