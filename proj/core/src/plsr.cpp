#include "tmiqa/plsr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tmiqa/binary_io.hpp"
#include "tmiqa/error.hpp"
#include "tmiqa/metrics.hpp"

namespace tmiqa {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Result of one NIPALS pass, kept in column-stacked form.
struct Nipals {
  std::vector<double> x_mean;
  std::vector<double> x_scale;  // empty unless standardized
  double y_mean = 0.0;
  MatrixXd weights;   // p x k
  MatrixXd loadings;  // p x k
  MatrixXd scores;    // N x k
  VectorXd y_loadings;
  std::size_t extracted = 0;
};

void check_inputs(const Matrix& x, std::span<const double> y, std::size_t k) {
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  if (y.size() != n) {
    throw Error(Errc::kDimensionMismatch, "X has " + std::to_string(n) + " rows but y has " +
                                              std::to_string(y.size()) + " entries");
  }
  if (n < 2 || p < 1) {
    throw Error(Errc::kTooManyComponents, "PLSR needs at least 2 samples and 1 feature");
  }
  if (k < 1 || k > std::min(n - 1, p)) {
    throw Error(Errc::kTooManyComponents, "k = " + std::to_string(k) + " outside [1, " +
                                              std::to_string(std::min(n - 1, p)) + "]");
  }
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw Error(Errc::kNumericalBreakdown, "non-finite feature value");
  }
  bool constant = true;
  for (double v : y) {
    if (!std::isfinite(v)) throw Error(Errc::kNumericalBreakdown, "non-finite target value");
    if (v != y[0]) constant = false;
  }
  if (constant) throw Error(Errc::kDegenerateTarget, "target vector is constant");
}

Nipals run_nipals(const Matrix& x, std::span<const double> y, std::size_t k, const PlsrOptions& options) {
  check_inputs(x, y, k);
  const auto n = static_cast<Index>(x.rows());
  const auto p = static_cast<Index>(x.cols());

  Nipals out;
  MatrixXd xc(n, p);
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < p; ++c) xc(r, c) = x(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  }
  const VectorXd mean = xc.colwise().mean().transpose();
  xc.rowwise() -= mean.transpose();
  out.x_mean.assign(mean.data(), mean.data() + p);

  if (options.standardize) {
    out.x_scale.resize(static_cast<std::size_t>(p));
    for (Index c = 0; c < p; ++c) {
      const double sd = std::sqrt(xc.col(c).squaredNorm() / static_cast<double>(n));
      const double s = sd > 0.0 ? sd : 1.0;
      out.x_scale[static_cast<std::size_t>(c)] = s;
      xc.col(c) /= s;
    }
  }

  VectorXd yc(n);
  for (Index r = 0; r < n; ++r) yc(r) = y[static_cast<std::size_t>(r)];
  out.y_mean = yc.mean();
  yc.array() -= out.y_mean;

  const auto kk = static_cast<Index>(k);
  out.weights.resize(p, kk);
  out.loadings.resize(p, kk);
  out.scores.resize(n, kk);
  out.y_loadings.resize(kk);

  for (Index i = 0; i < kk; ++i) {
    VectorXd w = xc.transpose() * yc;
    const double norm = w.norm();
    if (!(norm >= options.residual_tolerance)) break;
    w /= norm;
    const VectorXd t = xc * w;
    const double tt = t.squaredNorm();
    if (!(tt >= 1e-300)) {
      throw Error(Errc::kNumericalBreakdown, "latent score " + std::to_string(i + 1) + " has vanishing norm");
    }
    const VectorXd load = xc.transpose() * t / tt;
    const double q = yc.dot(t) / tt;
    xc.noalias() -= t * load.transpose();
    yc -= q * t;

    out.weights.col(i) = w;
    out.loadings.col(i) = load;
    out.scores.col(i) = t;
    out.y_loadings(i) = q;
    ++out.extracted;
  }
  if (out.extracted == 0) {
    throw Error(Errc::kDegenerateTarget, "X'y vanishes; no latent component can be extracted");
  }
  return out;
}

// b = W (P'W)^{-1} q using the leading `k` components. P'W is upper
// triangular for NIPALS weights, so the system is solved by back substitution.
std::vector<double> coefficients_for(const Nipals& fit, std::size_t k) {
  const auto kk = static_cast<Index>(k);
  const MatrixXd pw = fit.loadings.leftCols(kk).transpose() * fit.weights.leftCols(kk);
  VectorXd r(kk);
  for (Index i = kk - 1; i >= 0; --i) {
    const double diag = pw(i, i);
    if (!(std::abs(diag) >= 1e-12)) {
      throw Error(Errc::kNumericalBreakdown, "P'W diagonal " + std::to_string(i + 1) + " is near zero");
    }
    double acc = fit.y_loadings(i);
    for (Index j = i + 1; j < kk; ++j) acc -= pw(i, j) * r(j);
    r(i) = acc / diag;
  }
  const VectorXd b = fit.weights.leftCols(kk) * r;
  std::vector<double> out(b.data(), b.data() + b.size());
  if (!fit.x_scale.empty()) {
    for (std::size_t c = 0; c < out.size(); ++c) out[c] /= fit.x_scale[c];
  }
  for (double v : out) {
    if (!std::isfinite(v)) throw Error(Errc::kNumericalBreakdown, "non-finite regression coefficient");
  }
  return out;
}

PlsrModel make_model(const Nipals& fit, std::size_t k, std::size_t n_samples, std::size_t requested,
                     bool standardized) {
  TrainingMeta meta;
  meta.n_samples = n_samples;
  meta.feature_dim = fit.x_mean.size();
  meta.requested_components = requested;
  meta.standardized = standardized;
  return PlsrModel(k, fit.x_mean, fit.y_mean, coefficients_for(fit, k), std::move(meta));
}

nlohmann::json meta_to_json(const TrainingMeta& m) {
  return {{"n_samples", m.n_samples},
          {"feature_dim", m.feature_dim},
          {"layer_config", m.layer_config},
          {"pooling", m.pooling},
          {"scales", m.scales},
          {"requested_components", m.requested_components},
          {"standardized", m.standardized}};
}

TrainingMeta meta_from_json(const nlohmann::json& j) {
  TrainingMeta m;
  m.n_samples = j.value("n_samples", std::size_t{0});
  m.feature_dim = j.value("feature_dim", std::size_t{0});
  m.layer_config = j.value("layer_config", std::string{});
  m.pooling = j.value("pooling", std::string{"mean_std"});
  m.scales = j.value("scales", std::string{"dual"});
  m.requested_components = j.value("requested_components", std::size_t{0});
  m.standardized = j.value("standardized", false);
  return m;
}

}  // namespace

PlsrModel::PlsrModel(std::size_t n_components, std::vector<double> x_mean, double y_mean,
                     std::vector<double> coefficients, TrainingMeta meta)
    : n_components_(n_components),
      x_mean_(std::move(x_mean)),
      y_mean_(y_mean),
      coefficients_(std::move(coefficients)),
      meta_(std::move(meta)) {
  if (x_mean_.size() != coefficients_.size()) {
    throw Error(Errc::kDimensionMismatch, "x_mean and coefficient lengths differ");
  }
}

double PlsrModel::predict_one(std::span<const double> x) const {
  if (x.size() != x_mean_.size()) {
    throw Error(Errc::kDimensionMismatch, "model expects " + std::to_string(x_mean_.size()) +
                                              " features, got " + std::to_string(x.size()));
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) acc += (x[j] - x_mean_[j]) * coefficients_[j];
  return y_mean_ + acc;
}

std::vector<double> PlsrModel::predict(const Matrix& x) const {
  if (x.cols() != x_mean_.size()) {
    throw Error(Errc::kDimensionMismatch, "model expects " + std::to_string(x_mean_.size()) +
                                              " features, got " + std::to_string(x.cols()));
  }
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict_one(x.row(r));
  return out;
}

std::vector<double> predict(const PlsrModel& model, const Matrix& x) { return model.predict(x); }

PlsrFit fit_detailed(const Matrix& x, std::span<const double> y, std::size_t k, const PlsrOptions& options) {
  const Nipals nip = run_nipals(x, y, k, options);
  PlsrFit out{make_model(nip, nip.extracted, x.rows(), k, options.standardize), {}};
  for (std::size_t i = 0; i < nip.extracted; ++i) {
    const auto col = nip.scores.col(static_cast<Index>(i));
    out.scores.emplace_back(col.data(), col.data() + col.size());
  }
  return out;
}

PlsrModel fit(const Matrix& x, std::span<const double> y, std::size_t k, const PlsrOptions& options) {
  const Nipals nip = run_nipals(x, y, k, options);
  return make_model(nip, nip.extracted, x.rows(), k, options.standardize);
}

std::vector<PlsrModel> fit_path(const Matrix& x, std::span<const double> y, std::size_t k,
                                const PlsrOptions& options) {
  const Nipals nip = run_nipals(x, y, k, options);
  std::vector<PlsrModel> out;
  for (std::size_t i = 1; i <= nip.extracted; ++i) {
    out.push_back(make_model(nip, i, x.rows(), i, options.standardize));
  }
  return out;
}

ComponentSelection select_components(const Matrix& x_train, std::span<const double> y_train,
                                     const Matrix& x_val, std::span<const double> y_val,
                                     std::size_t k_min, std::size_t k_max, const PlsrOptions& options) {
  if (k_min < 1 || k_min > k_max) {
    throw Error(Errc::kInvalidConfig, "invalid component range [" + std::to_string(k_min) + ", " +
                                          std::to_string(k_max) + "]");
  }
  if (x_val.rows() != y_val.size()) {
    throw Error(Errc::kDimensionMismatch, "validation X and y lengths differ");
  }
  // The first k components of a NIPALS pass are exactly the k-component fit,
  // so one pass to k_max yields every model in the range.
  const auto path = fit_path(x_train, y_train, k_max, options);
  ComponentSelection out;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = k_min; k <= k_max; ++k) {
    // After early stopping every larger k reproduces the last extracted model.
    const PlsrModel& model = path[std::min(k, path.size()) - 1];
    const double score = srocc(model.predict(x_val), y_val);
    out.per_k.emplace_back(k, score);
    if (score > best) {
      best = score;
      out.best_k = k;
    }
  }
  return out;
}

void save_model(const PlsrModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIoError, "cannot write " + path.string());
  out.write("PLSR", 4);
  binary::put_u32(out, kPlsrFileVersion);
  binary::put_u32(out, static_cast<std::uint32_t>(model.n_components()));
  binary::put_u32(out, static_cast<std::uint32_t>(model.feature_dim()));
  for (double v : model.x_mean()) binary::put_f64(out, v);
  binary::put_f64(out, model.y_mean());
  for (double v : model.coefficients()) binary::put_f64(out, v);
  binary::put_string(out, meta_to_json(model.meta()).dump());
  if (!out) throw Error(Errc::kIoError, "failed writing " + path.string());
}

PlsrModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIoError, "cannot open model file " + path.string());
  binary::expect_magic(in, "PLSR", path.string());
  const auto version = binary::get_u32(in, "version");
  if (version != kPlsrFileVersion) {
    throw Error(Errc::kBadFileFormat, path.string() + ": unsupported model version " + std::to_string(version));
  }
  const auto k = binary::get_u32(in, "k");
  const auto p = binary::get_u32(in, "p");
  if (p == 0 || p > (1u << 26)) throw Error(Errc::kBadFileFormat, path.string() + ": implausible feature count");
  std::vector<double> x_mean(p);
  for (auto& v : x_mean) v = binary::get_f64(in, "x_mean");
  const double y_mean = binary::get_f64(in, "y_mean");
  std::vector<double> b(p);
  for (auto& v : b) v = binary::get_f64(in, "coefficients");
  const std::string meta_text = binary::get_string(in, "training meta");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kBadFileFormat, path.string() + ": training meta is not JSON: " + e.what());
  }
  return PlsrModel(k, std::move(x_mean), y_mean, std::move(b), meta_from_json(meta));
}

}  // namespace tmiqa
