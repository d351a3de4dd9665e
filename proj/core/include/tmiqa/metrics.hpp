#pragma once

#include <array>
#include <span>
#include <vector>

namespace tmiqa {

struct MetricTriple {
  double srocc = 0.0;
  double plcc = 0.0;
  double rmse = 0.0;

  bool operator==(const MetricTriple&) const = default;
};

/// 1-based ranks; tied values share the average of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman correlation: Pearson correlation of average ranks.
/// Throws LengthMismatch, DegenerateInput (N < 2 or a constant vector).
double srocc(std::span<const double> a, std::span<const double> b);

/// Pearson linear correlation. Same errors as srocc.
double plcc(std::span<const double> a, std::span<const double> b);

/// Throws LengthMismatch or EmptyInput.
double rmse(std::span<const double> a, std::span<const double> b);

/// Middle order statistic; mean of the two middle values for even sizes.
/// Throws EmptyInput.
double median(std::span<const double> values);

/// Four-parameter logistic q = (b1 - b2) / (1 + exp(-(x - b3) / |b4|)) + b2.
struct LogisticMap {
  std::array<double, 4> beta{};

  double operator()(double x) const;
};

/// Least-squares fit of the logistic from predictions to MOS (Levenberg-Marquardt).
LogisticMap fit_logistic(std::span<const double> predictions, std::span<const double> mos);

/// SROCC on raw predictions; PLCC and RMSE on raw or logistic-mapped ones.
MetricTriple evaluate_predictions(std::span<const double> predictions, std::span<const double> mos,
                                  bool logistic_map = false);

}  // namespace tmiqa
