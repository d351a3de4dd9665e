#include "tmiqa/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tmiqa/error.hpp"
#include "tmiqa/parallel.hpp"

namespace tmiqa {

namespace {

using nlohmann::ordered_json;

std::vector<double> pick(std::span<const double> values, std::span<const std::size_t> idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(values[i]);
  return out;
}

std::optional<MetricTriple> try_metrics(std::span<const double> pred, std::span<const double> mos,
                                        bool logistic_map) {
  try {
    return evaluate_predictions(pred, mos, logistic_map);
  } catch (const Error& e) {
    if (e.code() == Errc::kDegenerateInput) return std::nullopt;
    throw;
  }
}

ordered_json triple_json(const MetricTriple& m) {
  return {{"srocc", m.srocc}, {"plcc", m.plcc}, {"rmse", m.rmse}};
}

ordered_json categories_json(const CategoryMetrics& cats) {
  ordered_json out = ordered_json::object();
  for (std::size_t c = 0; c < kCategories.size(); ++c) {
    const std::string name(category_name(kCategories[c]));
    out[name] = cats[c] ? triple_json(*cats[c]) : ordered_json(nullptr);
  }
  return out;
}

ordered_json config_json(const ExperimentConfig& c) {
  ordered_json out;
  out["layers"] = c.layers.to_string();
  if (c.sweep) {
    out["components"] = nullptr;
    out["sweep"] = {{"min", c.sweep->min}, {"max", c.sweep->max}};
  } else {
    out["components"] = c.n_components;
    out["sweep"] = nullptr;
  }
  out["runs"] = c.n_runs;
  out["base_seed"] = c.base_seed;
  out["pooling"] = pooling_mode_name(c.descriptor.pooling);
  out["scales"] = scale_mode_name(c.descriptor.scales);
  out["logistic_map"] = c.logistic_map;
  out["standardize"] = c.standardize;
  out["split_rng"] = "xoshiro256**/splitmix64";
  return out;
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void check_dataset(const DatasetManifest& manifest, const Matrix& features) {
  if (features.rows() != manifest.size()) {
    throw Error(Errc::kDimensionMismatch, "feature matrix has " + std::to_string(features.rows()) +
                                              " rows for " + std::to_string(manifest.size()) + " images");
  }
}

// Validation SROCC per requested k for one split; k beyond the usable range
// is an error here, callers clip ranges beforehand.
std::vector<double> validation_scores(const Matrix& x, std::span<const double> y, const Split& split,
                                      std::size_t k_min, std::size_t k_max, bool standardize) {
  const Matrix x_tr = x.select_rows(split.train);
  const Matrix x_val = x.select_rows(split.validation);
  const auto y_tr = pick(y, split.train);
  const auto y_val = pick(y, split.validation);
  const auto sel = select_components(x_tr, y_tr, x_val, y_val, k_min, k_max, PlsrOptions{standardize});
  std::vector<double> out;
  for (const auto& [k, s] : sel.per_k) out.push_back(s);
  return out;
}

}  // namespace

ComponentRange ComponentRange::parse(const std::string& text) {
  const auto colon = text.find(':');
  ComponentRange r;
  auto parse_one = [&](std::string_view s, std::size_t& v) {
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc{} && ptr == s.data() + s.size() && !s.empty();
  };
  if (colon == std::string::npos || !parse_one(std::string_view(text).substr(0, colon), r.min) ||
      !parse_one(std::string_view(text).substr(colon + 1), r.max) || r.min < 1 || r.min > r.max) {
    throw Error(Errc::kInvalidConfig, "component range must look like MIN:MAX with 1 <= MIN <= MAX, got '" +
                                          text + "'");
  }
  return r;
}

MedianMetrics median_metrics(const std::vector<RunResult>& runs) {
  MedianMetrics out;
  if (runs.empty()) throw Error(Errc::kEmptyInput, "no runs to summarize");
  auto med = [](const std::vector<MetricTriple>& v) {
    std::vector<double> s, p, r;
    for (const auto& m : v) {
      s.push_back(m.srocc);
      p.push_back(m.plcc);
      r.push_back(m.rmse);
    }
    return MetricTriple{median(s), median(p), median(r)};
  };
  std::vector<MetricTriple> overall;
  for (const auto& run : runs) overall.push_back(run.overall);
  out.overall = med(overall);
  for (std::size_t c = 0; c < kCategories.size(); ++c) {
    std::vector<MetricTriple> cat;
    for (const auto& run : runs) {
      if (run.per_category[c]) cat.push_back(*run.per_category[c]);
    }
    if (!cat.empty()) out.per_category[c] = med(cat);
  }
  return out;
}

EvaluationReport run_experiment(const ExperimentConfig& config, const DatasetManifest& manifest,
                                const FeatureCache& cache) {
  const Matrix x = cache.assemble_matrix(manifest, config.layers, config.descriptor);
  return run_experiment(config, manifest, x);
}

EvaluationReport run_experiment(const ExperimentConfig& config, const DatasetManifest& manifest,
                                const Matrix& x) {
  if (config.n_runs < 1) throw Error(Errc::kInvalidConfig, "n_runs must be at least 1");
  check_dataset(manifest, x);
  const auto start = std::chrono::steady_clock::now();
  const auto y = manifest.mos();
  const bool with_validation = config.sweep.has_value();

  EvaluationReport report;
  report.config = config;
  report.n_images = manifest.size();
  report.feature_dim = x.cols();
  report.per_run.resize(config.n_runs);

  parallel_for(config.n_runs, config.jobs, [&](std::size_t run) {
    RunResult& res = report.per_run[run];
    res.run = run;
    res.seed = config.base_seed + run;
    const Split split = make_split(manifest, res.seed, with_validation);
    res.n_train = split.train.size();
    res.n_validation = split.validation.size();
    res.n_test = split.test.size();

    const Matrix x_tr = x.select_rows(split.train);
    const auto y_tr = pick(y, split.train);
    std::size_t k = config.n_components;
    if (config.sweep) {
      const std::size_t hi = std::min(config.sweep->max, max_components(split.train.size(), x.cols()));
      if (hi < config.sweep->min) {
        throw Error(Errc::kTooManyComponents, "run " + std::to_string(run) + ": training set of " +
                                                  std::to_string(split.train.size()) +
                                                  " images cannot support the component range");
      }
      const auto sel = select_components(x_tr, y_tr, x.select_rows(split.validation),
                                         pick(y, split.validation), config.sweep->min, hi,
                                         PlsrOptions{config.standardize});
      k = sel.best_k;
    }
    const PlsrModel model = fit(x_tr, y_tr, k, PlsrOptions{config.standardize});
    res.n_components = model.n_components();

    const auto pred = model.predict(x.select_rows(split.test));
    const auto y_te = pick(y, split.test);
    res.overall = evaluate_predictions(pred, y_te, config.logistic_map);
    for (std::size_t c = 0; c < kCategories.size(); ++c) {
      std::vector<double> p_cat, y_cat;
      for (std::size_t i = 0; i < split.test.size(); ++i) {
        if (manifest.entries[split.test[i]].category == kCategories[c]) {
          p_cat.push_back(pred[i]);
          y_cat.push_back(y_te[i]);
        }
      }
      if (p_cat.size() >= 2) res.per_category[c] = try_metrics(p_cat, y_cat, config.logistic_map);
    }
  });

  report.medians = median_metrics(report.per_run);
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string report_to_json(const EvaluationReport& report) {
  ordered_json j;
  j["config"] = config_json(report.config);
  j["n_images"] = report.n_images;
  j["feature_dim"] = report.feature_dim;
  ordered_json runs = ordered_json::array();
  for (const auto& r : report.per_run) {
    ordered_json run;
    run["run"] = r.run;
    run["seed"] = r.seed;
    run["n_train"] = r.n_train;
    run["n_validation"] = r.n_validation;
    run["n_test"] = r.n_test;
    run["n_components"] = r.n_components;
    run["overall"] = triple_json(r.overall);
    run["per_category"] = categories_json(r.per_category);
    runs.push_back(std::move(run));
  }
  j["per_run"] = std::move(runs);
  j["medians"] = {{"overall", triple_json(report.medians.overall)},
                  {"per_category", categories_json(report.medians.per_category)}};
  return j.dump(2) + "\n";
}

std::string report_to_csv(const EvaluationReport& report) {
  std::ostringstream os;
  os << "run,seed,n_components,srocc,plcc,rmse";
  for (auto c : kCategories) os << ',' << category_name(c) << "_srocc";
  os << '\n';
  auto cats = [&](const CategoryMetrics& m) {
    for (const auto& v : m) os << ',' << (v ? format_number(v->srocc) : std::string{});
  };
  for (const auto& r : report.per_run) {
    os << r.run << ',' << r.seed << ',' << r.n_components << ',' << format_number(r.overall.srocc) << ','
       << format_number(r.overall.plcc) << ',' << format_number(r.overall.rmse);
    cats(r.per_category);
    os << '\n';
  }
  os << "median,,," << format_number(report.medians.overall.srocc) << ','
     << format_number(report.medians.overall.plcc) << ',' << format_number(report.medians.overall.rmse);
  cats(report.medians.per_category);
  os << '\n';
  return os.str();
}

std::vector<LayerTriple> enumerate_layer_combinations(const std::vector<std::vector<std::string>>& depth_sets) {
  std::vector<LayerTriple> out;
  const std::size_t n = depth_sets.size();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      for (std::size_t c = b + 1; c < n; ++c) {
        for (const auto& low : depth_sets[a]) {
          for (const auto& mid : depth_sets[b]) {
            for (const auto& high : depth_sets[c]) out.push_back({low, mid, high});
          }
        }
      }
    }
  }
  return out;
}

std::vector<LayerSearchEntry> layer_search(const DatasetManifest& manifest, const FeatureCache& cache,
                                           const SearchOptions& options,
                                           const std::vector<std::vector<std::string>>& depth_sets) {
  if (depth_sets.size() < 3) {
    throw Error(Errc::kIncompleteCache, "insufficient layer sets: need at least 3 depth sets");
  }
  for (const auto& set : depth_sets) {
    for (const auto& layer : set) {
      if (!cache.layer_index(layer)) {
        throw Error(Errc::kIncompleteCache, "insufficient layer sets: layer '" + layer + "' is not cached");
      }
    }
  }
  if (options.n_runs < 1) throw Error(Errc::kInvalidConfig, "n_runs must be at least 1");

  const auto combos = enumerate_layer_combinations(depth_sets);
  std::vector<Split> splits;
  for (std::size_t r = 0; r < options.n_runs; ++r) {
    splits.push_back(make_split(manifest, options.base_seed + r, true));
  }
  const auto y = manifest.mos();

  std::vector<LayerSearchEntry> out(combos.size());
  std::vector<std::vector<double>> scores(combos.size(), std::vector<double>(options.n_runs));
  // One matrix per combination at a time keeps memory bounded on full caches.
  for (std::size_t ci = 0; ci < combos.size(); ++ci) {
    const Matrix x = cache.assemble_matrix(manifest, combos[ci], options.descriptor);
    parallel_for(options.n_runs, options.jobs, [&](std::size_t r) {
      const std::size_t k = std::min(options.n_components, max_components(splits[r].train.size(), x.cols()));
      scores[ci][r] = validation_scores(x, y, splits[r], k, k, options.standardize).front();
    });
    out[ci] = {combos[ci], median(scores[ci])};
  }
  std::stable_sort(out.begin(), out.end(), [](const LayerSearchEntry& a, const LayerSearchEntry& b) {
    if (a.median_validation_srocc != b.median_validation_srocc) {
      return a.median_validation_srocc > b.median_validation_srocc;
    }
    return a.layers.to_string() < b.layers.to_string();
  });
  return out;
}

SweepResult sweep_components(const DatasetManifest& manifest, const FeatureCache& cache,
                             const LayerTriple& layers, ComponentRange range, const SearchOptions& options) {
  if (options.n_runs < 1) throw Error(Errc::kInvalidConfig, "n_runs must be at least 1");
  const Matrix x = cache.assemble_matrix(manifest, layers, options.descriptor);
  const auto y = manifest.mos();
  std::vector<Split> splits;
  std::size_t smallest_train = x.rows();
  for (std::size_t r = 0; r < options.n_runs; ++r) {
    splits.push_back(make_split(manifest, options.base_seed + r, true));
    smallest_train = std::min(smallest_train, splits.back().train.size());
  }
  if (range.max > max_components(smallest_train, x.cols())) {
    throw Error(Errc::kTooManyComponents,
                "component range up to " + std::to_string(range.max) + " exceeds " +
                    std::to_string(max_components(smallest_train, x.cols())) + " for the smallest training set");
  }

  const std::size_t width = range.max - range.min + 1;
  std::vector<std::vector<double>> per_run(options.n_runs);
  parallel_for(options.n_runs, options.jobs, [&](std::size_t r) {
    per_run[r] = validation_scores(x, y, splits[r], range.min, range.max, options.standardize);
  });

  SweepResult out;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < width; ++i) {
    std::vector<double> col;
    for (const auto& run : per_run) col.push_back(run[i]);
    const SweepEntry e{range.min + i, median(col)};
    if (e.median_validation_srocc > best) {
      best = e.median_validation_srocc;
      out.best_k = e.k;
    }
    out.entries.push_back(e);
  }
  return out;
}

}  // namespace tmiqa
