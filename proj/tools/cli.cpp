#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "tmiqa/aggregation.hpp"
#include "tmiqa/backbone.hpp"
#include "tmiqa/dataset.hpp"
#include "tmiqa/error.hpp"
#include "tmiqa/experiment.hpp"
#include "tmiqa/feature_cache.hpp"
#include "tmiqa/plsr.hpp"

namespace tmiqa::cli {

namespace {

namespace fs = std::filesystem;

constexpr const char* kCacheDirEnv = "TONEMAP_IQA_CACHE_DIR";
constexpr const char* kDefaultCacheName = "features.tmqf";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string cache;
  std::string manifest;
  std::string layers = default_layers().to_string();
  bool mean_only = false;
  bool single_scale = false;
  bool standardize = false;
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
  bool force = false;
};

struct ExtractFlags {
  std::string manifest;
  std::string model_dir;
  std::string out_cache;
  std::string layers = "all";
  std::string downsample = "box";
  bool mean_only = false;
  bool force = false;
  std::size_t jobs = 1;
};

struct TrainFlags : CommonFlags {
  std::optional<std::size_t> components;
  std::string sweep;
  std::string out_model;
};

struct PredictFlags {
  std::string model;
  std::string cache;
  std::string manifest;
  std::string model_dir;
  std::vector<std::string> images;
  std::string downsample = "box";
};

struct EvaluateFlags : CommonFlags {
  std::optional<std::size_t> components;
  std::string sweep;
  std::size_t runs = 100;
  std::string out_report;
  std::string out_csv;
  bool logistic_map = false;
};

struct SearchFlags : CommonFlags {
  std::size_t runs = 100;
  std::size_t components = 15;
  std::string out;
};

struct SweepFlags : CommonFlags {
  std::size_t runs = 100;
  std::string range = "10:20";
  std::string out;
};

std::string default_cache_path() {
  const char* dir = std::getenv(kCacheDirEnv);
  if (dir == nullptr || *dir == '\0') return {};
  return (fs::path(dir) / kDefaultCacheName).string();
}

std::string require_cache(const std::string& given) {
  if (!given.empty()) return given;
  auto def = default_cache_path();
  if (def.empty()) {
    throw UsageError(std::string("--cache is required (or set ") + kCacheDirEnv + ")");
  }
  return def;
}

void guard_output(const std::string& path, bool force, const char* what) {
  if (!path.empty() && fs::exists(path) && !force) {
    throw Error(Errc::kIoError, std::string(what) + " exists: " + path + " (use --force to overwrite)");
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIoError, "cannot write " + path);
  out << text;
  if (!out) throw Error(Errc::kIoError, "failed writing " + path);
}

DownsampleFilter parse_filter(const std::string& name) {
  if (name == "box") return DownsampleFilter::kBox;
  if (name == "bicubic") return DownsampleFilter::kBicubic;
  throw UsageError("--downsample must be 'box' or 'bicubic'");
}

DescriptorOptions descriptor_options(const CommonFlags& f) {
  DescriptorOptions d;
  d.pooling = f.mean_only ? PoolingMode::kMeanOnly : PoolingMode::kMeanStd;
  d.scales = f.single_scale ? ScaleMode::kOriginalOnly : ScaleMode::kDual;
  return d;
}

DescriptorOptions descriptor_from_meta(const TrainingMeta& meta) {
  DescriptorOptions d;
  d.pooling = meta.pooling == "mean_only" ? PoolingMode::kMeanOnly : PoolingMode::kMeanStd;
  d.scales = meta.scales == "original_only" ? ScaleMode::kOriginalOnly : ScaleMode::kDual;
  return d;
}

DatasetManifest load_checked_manifest(const std::string& path, std::ostream& err) {
  auto manifest = load_manifest(path);
  if (manifest.missing_scene_ids > 0) {
    err << "WARNING: " << manifest.missing_scene_ids << " of " << manifest.size()
        << " manifest rows have no scene_id; each such image is its own split group, so images of "
           "one scene may land in both training and test sets\n";
  }
  return manifest;
}

// Clips a component range to what the smallest training set supports.
ComponentRange clip_range(ComponentRange range, std::size_t limit, std::ostream& err) {
  if (limit == 0) throw Error(Errc::kTooManyComponents, "training set too small for any component");
  if (range.max > limit) {
    ComponentRange clipped{std::min(range.min, limit), limit};
    err << "WARNING: component range " << range.min << ":" << range.max << " clipped to " << clipped.min << ":"
        << clipped.max << " (training set supports at most " << limit << ")\n";
    return clipped;
  }
  return range;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << v;
  return os.str();
}

int cmd_extract(const ExtractFlags& f, std::ostream& out, std::ostream& err) {
  const std::string out_cache = f.out_cache.empty() ? default_cache_path() : f.out_cache;
  if (out_cache.empty()) {
    throw UsageError(std::string("--out-cache is required (or set ") + kCacheDirEnv + ")");
  }
  const auto filter = parse_filter(f.downsample);
  if (fs::exists(out_cache) && !f.force) {
    throw Error(Errc::kIoError, "cache exists: " + out_cache + " (use --force to overwrite)");
  }
  const auto manifest = load_checked_manifest(f.manifest, err);
  const auto graph = BackboneGraph::load(f.model_dir);

  std::vector<std::string> layers;
  if (f.layers == "all") {
    layers = graph.tap_layers();
  } else {
    std::stringstream ss(f.layers);
    for (std::string item; std::getline(ss, item, ',');) {
      if (!item.empty()) layers.push_back(item);
    }
    for (const auto& l : layers) {
      if (!graph.has_layer(l)) throw Error(Errc::kLayerMismatch, "layer '" + l + "' is not tapped by the model");
    }
  }
  if (layers.empty()) throw UsageError("--layers selects no layers");

  if (!fs::path(out_cache).parent_path().empty()) fs::create_directories(fs::path(out_cache).parent_path());
  const auto report = cache_features(manifest, graph, layers, out_cache, CacheOptions{f.jobs, filter});
  for (const auto& w : report.warnings) err << "WARNING: skipped " << w << "\n";

  out << report.processed << " images, " << report.skipped << " skipped\n";
  if (f.mean_only) {
    // The cache always keeps both statistics; this only reports the reduced size.
    err << "note: --paper-dim descriptors use means only (half the default length)\n";
  }
  return kOk;
}

int cmd_train(const TrainFlags& f, std::ostream& out, std::ostream& err) {
  if (f.components.has_value() == !f.sweep.empty()) {
    throw UsageError("exactly one of --components or --sweep is required");
  }
  if (f.out_model.empty()) throw UsageError("--out-model is required");
  guard_output(f.out_model, f.force, "model file");

  const auto manifest = load_checked_manifest(f.manifest, err);
  const auto cache = FeatureCache::read(require_cache(f.cache));
  const auto layers = LayerTriple::parse(f.layers);
  const auto descriptor = descriptor_options(f);
  const Matrix x = cache.assemble_matrix(manifest, layers, descriptor);
  const auto y = manifest.mos();
  const PlsrOptions options{f.standardize};

  std::size_t k = 0;
  if (f.components) {
    k = *f.components;
  } else {
    const auto split = make_split(manifest, f.seed, true);
    auto pick = [&](const std::vector<std::size_t>& idx) {
      std::vector<double> v;
      for (auto i : idx) v.push_back(y[i]);
      return v;
    };
    const auto range =
        clip_range(ComponentRange::parse(f.sweep), max_components(split.train.size(), x.cols()), err);
    const auto sel = select_components(x.select_rows(split.train), pick(split.train),
                                       x.select_rows(split.validation), pick(split.validation), range.min,
                                       range.max, options);
    k = sel.best_k;
    for (const auto& [kk, s] : sel.per_k) err << "k=" << kk << " validation SROCC " << fmt(s) << "\n";
    err << "selected k = " << k << "\n";
  }

  PlsrModel model = fit(x, y, k, options);
  model.meta().layer_config = layers.to_string();
  model.meta().pooling = std::string(pooling_mode_name(descriptor.pooling));
  model.meta().scales = std::string(scale_mode_name(descriptor.scales));
  save_model(model, f.out_model);
  out << "model " << f.out_model << ": " << model.n_components() << " components, " << model.feature_dim()
      << " features, " << x.rows() << " images\n";
  return kOk;
}

int cmd_predict(const PredictFlags& f, std::ostream& out, std::ostream&) {
  const PlsrModel model = load_model(f.model);
  const auto layers = LayerTriple::parse(model.meta().layer_config);
  const auto descriptor = descriptor_from_meta(model.meta());

  out << "image_path,prediction\n";
  out << std::setprecision(17);
  if (!f.images.empty()) {
    if (f.model_dir.empty()) throw UsageError("--image requires --model-dir");
    const auto graph = BackboneGraph::load(f.model_dir);
    const auto filter = parse_filter(f.downsample);
    for (const auto& path : f.images) {
      const auto v = extract_descriptor(graph, build_multiscale(load_image(path), filter), layers, descriptor);
      out << path << ',' << model.predict_one(v.values) << '\n';
    }
    return kOk;
  }
  if (f.manifest.empty()) throw UsageError("give either --image (with --model-dir) or --manifest (with --cache)");
  const auto manifest = load_manifest(f.manifest);
  const auto cache = FeatureCache::read(require_cache(f.cache));
  const Matrix x = cache.assemble_matrix(manifest, layers, descriptor);
  const auto pred = model.predict(x);
  for (std::size_t i = 0; i < pred.size(); ++i) out << manifest.entries[i].image_path << ',' << pred[i] << '\n';
  return kOk;
}

int cmd_evaluate(const EvaluateFlags& f, std::ostream& out, std::ostream& err) {
  if (f.components.has_value() && !f.sweep.empty()) {
    throw UsageError("--components and --sweep are mutually exclusive");
  }
  if (f.runs < 1) throw UsageError("--runs must be at least 1");
  guard_output(f.out_report, f.force, "report");
  guard_output(f.out_csv, f.force, "CSV summary");

  ExperimentConfig config;
  config.layers = LayerTriple::parse(f.layers);
  config.n_components = f.components.value_or(15);
  if (!f.sweep.empty()) config.sweep = ComponentRange::parse(f.sweep);
  config.n_runs = f.runs;
  config.base_seed = f.seed;
  config.descriptor = descriptor_options(f);
  config.logistic_map = f.logistic_map;
  config.standardize = f.standardize;
  config.jobs = f.jobs;

  const auto manifest = load_checked_manifest(f.manifest, err);
  const auto cache = FeatureCache::read(require_cache(f.cache));
  const auto report = run_experiment(config, manifest, cache);

  const std::string json = report_to_json(report);
  if (f.out_report.empty()) {
    out << json;
  } else {
    write_text(f.out_report, json);
  }
  if (!f.out_csv.empty()) write_text(f.out_csv, report_to_csv(report));

  const auto& m = report.medians.overall;
  err << report.per_run.size() << " runs in " << fmt(report.elapsed_seconds) << " s; median SROCC "
      << fmt(m.srocc) << ", PLCC " << fmt(m.plcc) << ", RMSE " << fmt(m.rmse) << "\n";
  return kOk;
}

int cmd_search_layers(const SearchFlags& f, std::ostream& out, std::ostream& err) {
  if (f.runs < 1) throw UsageError("--runs must be at least 1");
  guard_output(f.out, f.force, "output table");
  const auto manifest = load_checked_manifest(f.manifest, err);
  const auto cache = FeatureCache::read(require_cache(f.cache));
  SearchOptions options;
  options.n_runs = f.runs;
  options.base_seed = f.seed;
  options.n_components = f.components;
  options.descriptor = descriptor_options(f);
  options.standardize = f.standardize;
  options.jobs = f.jobs;
  const auto ranked = layer_search(manifest, cache, options);

  std::ostringstream table;
  table << "rank,layers,median_validation_srocc\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    table << i + 1 << ",\"" << ranked[i].layers.to_string() << "\"," << fmt(ranked[i].median_validation_srocc)
          << "\n";
  }
  out << table.str();
  if (!f.out.empty()) write_text(f.out, table.str());
  return kOk;
}

int cmd_sweep_components(const SweepFlags& f, std::ostream& out, std::ostream& err) {
  if (f.runs < 1) throw UsageError("--runs must be at least 1");
  guard_output(f.out, f.force, "output table");
  const auto manifest = load_checked_manifest(f.manifest, err);
  const auto cache = FeatureCache::read(require_cache(f.cache));
  const auto layers = LayerTriple::parse(f.layers);
  SearchOptions options;
  options.n_runs = f.runs;
  options.base_seed = f.seed;
  options.descriptor = descriptor_options(f);
  options.standardize = f.standardize;
  options.jobs = f.jobs;

  std::size_t smallest_train = manifest.size();
  for (std::size_t r = 0; r < f.runs; ++r) {
    smallest_train = std::min(smallest_train, make_split(manifest, f.seed + r, true).train.size());
  }
  const auto p = cache.assemble(cache.images.at(0), layers, options.descriptor).size();
  const auto range = clip_range(ComponentRange::parse(f.range), max_components(smallest_train, p), err);
  const auto result = sweep_components(manifest, cache, layers, range, options);

  std::ostringstream table;
  table << "k,median_validation_srocc\n";
  for (const auto& e : result.entries) table << e.k << "," << fmt(e.median_validation_srocc) << "\n";
  out << table.str();
  if (!f.out.empty()) write_text(f.out, table.str());
  err << "best k = " << result.best_k << "\n";
  return kOk;
}

void add_common(CLI::App* cmd, CommonFlags& f, bool with_layers) {
  cmd->add_option("--cache", f.cache, std::string("Feature cache file (default: $") + kCacheDirEnv + "/" +
                                          kDefaultCacheName + ")");
  cmd->add_option("--manifest", f.manifest, "Dataset manifest CSV (image_path,mos,category,scene_id)")->required();
  if (with_layers) {
    cmd->add_option("--layers", f.layers, "Low,mid,high layers")->capture_default_str();
  }
  cmd->add_option("--seed", f.seed, "Base seed; run r uses seed + r")->capture_default_str();
  cmd->add_flag("--paper-dim", f.mean_only, "Pool means only (4608-dimensional default descriptor)");
  cmd->add_flag("--single-scale", f.single_scale, "Use the original scale only");
  cmd->add_flag("--standardize", f.standardize, "z-score features before PLSR");
  cmd->add_option("--jobs", f.jobs, "Worker threads (results do not depend on it)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--force", f.force, "Overwrite existing output files");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Blind quality scores for tone-mapped images from pooled backbone features and PLSR"};
  app.name(args.empty() ? "tonemap-iqa" : fs::path(args.front()).filename().string());
  app.require_subcommand(1);

  ExtractFlags ex;
  auto* extract = app.add_subcommand("extract", "Run the backbone over a manifest and write a feature cache");
  extract->add_option("--manifest", ex.manifest, "Dataset manifest CSV")->required();
  extract->add_option("--model-dir", ex.model_dir, "Model package directory (graph + manifest.json)")->required();
  extract->add_option("--out-cache", ex.out_cache,
                      std::string("Output cache file (default: $") + kCacheDirEnv + "/" + kDefaultCacheName + ")");
  extract->add_option("--layers", ex.layers, "'all' or a comma-separated list of tap layers")->capture_default_str();
  extract->add_option("--downsample", ex.downsample, "Half-scale filter: box or bicubic")->capture_default_str();
  extract->add_flag("--paper-dim", ex.mean_only, "Report descriptor sizes for mean-only pooling");
  extract->add_flag("--force", ex.force, "Overwrite an existing cache");
  extract->add_option("--jobs", ex.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  TrainFlags tr;
  auto* train = app.add_subcommand("train", "Fit a PLSR model on cached features of all manifest images");
  add_common(train, tr, true);
  train->add_option("--components", tr.components, "Number of latent components");
  train->add_option("--sweep", tr.sweep, "Pick k in MIN:MAX on a validation split (e.g. 10:20)");
  train->add_option("--out-model", tr.out_model, "Output .plsr file")->required();

  PredictFlags pr;
  auto* predict = app.add_subcommand("predict", "Predict quality scores with a trained model");
  predict->add_option("--model", pr.model, ".plsr model file")->required();
  predict->add_option("--cache", pr.cache, "Feature cache (with --manifest)");
  predict->add_option("--manifest", pr.manifest, "Manifest of images to score from the cache");
  predict->add_option("--model-dir", pr.model_dir, "Model package for scoring image files directly");
  predict->add_option("--image", pr.images, "Image file to score (repeatable)");
  predict->add_option("--downsample", pr.downsample, "Half-scale filter: box or bicubic")->capture_default_str();

  EvaluateFlags ev;
  auto* evaluate = app.add_subcommand("evaluate", "Repeated random-split evaluation with median SROCC/PLCC/RMSE");
  add_common(evaluate, ev, true);
  evaluate->add_option("--components", ev.components, "Number of latent components (default 15)");
  evaluate->add_option("--sweep", ev.sweep, "Pick k in MIN:MAX per run on a validation carve-out");
  evaluate->add_option("--runs", ev.runs, "Number of random splits")->capture_default_str();
  evaluate->add_option("--out-report", ev.out_report, "JSON report path (default: stdout)");
  evaluate->add_option("--csv", ev.out_csv, "Optional CSV summary path");
  evaluate->add_flag("--logistic-map", ev.logistic_map, "Fit a 4-parameter logistic before PLCC/RMSE");

  SearchFlags se;
  auto* search = app.add_subcommand("search-layers", "Rank all layer combinations by median validation SROCC");
  add_common(search, se, false);
  search->add_option("--runs", se.runs, "Validation splits per combination")->capture_default_str();
  search->add_option("--components", se.components, "Latent components per fit")->capture_default_str();
  search->add_option("--out", se.out, "Also write the table to this file");

  SweepFlags sw;
  auto* sweep = app.add_subcommand("sweep-components", "Median validation SROCC for each k in a range");
  add_common(sweep, sw, true);
  sweep->add_option("--runs", sw.runs, "Validation splits")->capture_default_str();
  sweep->add_option("--range", sw.range, "Component range MIN:MAX")->capture_default_str();
  sweep->add_option("--out", sw.out, "Also write the table to this file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsageError;
  }

  try {
    if (extract->parsed()) return cmd_extract(ex, out, err);
    if (train->parsed()) return cmd_train(tr, out, err);
    if (predict->parsed()) return cmd_predict(pr, out, err);
    if (evaluate->parsed()) return cmd_evaluate(ev, out, err);
    if (search->parsed()) return cmd_search_layers(se, out, err);
    if (sweep->parsed()) return cmd_sweep_components(sw, out, err);
    return kUsageError;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
}

}  // namespace tmiqa::cli
