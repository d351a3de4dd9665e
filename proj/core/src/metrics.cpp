#include "tmiqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "tmiqa/error.hpp"

namespace tmiqa {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(Errc::kLengthMismatch,
                "vectors have lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
}

void check_correlation_input(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  if (a.size() < 2) throw Error(Errc::kDegenerateInput, "correlation needs at least 2 samples");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
  };
  if (constant(a) || constant(b)) throw Error(Errc::kDegenerateInput, "correlation of a constant vector");
}

double pearson_unchecked(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  const double r = sab / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(values.size());
  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t end = start + 1;
    while (end < order.size() && values[order[end]] == values[order[start]]) ++end;
    // Positions start..end-1 hold ranks start+1..end.
    const double rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) ranks[order[k]] = rank;
    start = end;
  }
  return ranks;
}

double srocc(std::span<const double> a, std::span<const double> b) {
  check_correlation_input(a, b);
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson_unchecked(ra, rb);
}

double plcc(std::span<const double> a, std::span<const double> b) {
  check_correlation_input(a, b);
  return pearson_unchecked(a, b);
}

double rmse(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  if (a.empty()) throw Error(Errc::kEmptyInput, "rmse of empty vectors");
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(a.size()));
}

double median(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::kEmptyInput, "median of an empty list");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double LogisticMap::operator()(double x) const {
  const double z = (x - beta[2]) / std::abs(beta[3]);
  return (beta[0] - beta[1]) / (1.0 + std::exp(-z)) + beta[1];
}

LogisticMap fit_logistic(std::span<const double> predictions, std::span<const double> mos) {
  check_correlation_input(predictions, mos);
  const std::size_t n = predictions.size();
  const double mean_x = std::accumulate(predictions.begin(), predictions.end(), 0.0) / n;
  double var_x = 0.0;
  for (double x : predictions) var_x += (x - mean_x) * (x - mean_x);
  const double sd_x = std::sqrt(var_x / n);

  LogisticMap map;
  map.beta = {*std::max_element(mos.begin(), mos.end()), *std::min_element(mos.begin(), mos.end()),
              mean_x, sd_x > 0.0 ? sd_x : 1.0};

  auto cost = [&](const LogisticMap& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = m(predictions[i]) - mos[i];
      s += r * r;
    }
    return s;
  };

  double lambda = 1e-3;
  double current = cost(map);
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
    Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
    const auto& b = map.beta;
    const double scale = std::abs(b[3]);
    const double sign = b[3] < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = (predictions[i] - b[2]) / scale;
      const double s = 1.0 / (1.0 + std::exp(-z));
      const double ds = s * (1.0 - s) * (b[0] - b[1]);
      Eigen::Vector4d g(s, 1.0 - s, -ds / scale, -ds * z * sign / scale);
      const double r = map(predictions[i]) - mos[i];
      jtj += g * g.transpose();
      jtr += g * r;
    }
    Eigen::Matrix4d damped = jtj;
    damped.diagonal() *= 1.0 + lambda;
    damped.diagonal().array() += 1e-12;
    const Eigen::Vector4d step = damped.ldlt().solve(-jtr);
    LogisticMap trial = map;
    for (int k = 0; k < 4; ++k) trial.beta[k] += step[k];
    const double next = std::abs(trial.beta[3]) > 0.0 ? cost(trial) : current + 1.0;
    if (std::isfinite(next) && next < current) {
      const bool converged = current - next < 1e-12 * (1.0 + current);
      map = trial;
      current = next;
      lambda = std::max(lambda * 0.3, 1e-12);
      if (converged) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }
  return map;
}

MetricTriple evaluate_predictions(std::span<const double> predictions, std::span<const double> mos,
                                  bool logistic_map) {
  MetricTriple out;
  out.srocc = srocc(predictions, mos);
  if (logistic_map) {
    const LogisticMap map = fit_logistic(predictions, mos);
    std::vector<double> mapped(predictions.size());
    std::transform(predictions.begin(), predictions.end(), mapped.begin(), map);
    out.plcc = plcc(mapped, mos);
    out.rmse = rmse(mapped, mos);
  } else {
    out.plcc = plcc(predictions, mos);
    out.rmse = rmse(predictions, mos);
  }
  return out;
}

}  // namespace tmiqa
