#include "tmiqa/feature_cache.hpp"

#include <fstream>
#include <unordered_map>

#include "tmiqa/binary_io.hpp"
#include "tmiqa/error.hpp"
#include "tmiqa/parallel.hpp"

namespace tmiqa {

namespace {

namespace fs = std::filesystem;

constexpr std::size_t kScaleCount = 2;

void write_header(std::ostream& out, std::uint32_t n_images, std::span<const std::string> layers) {
  out.write("TMQF", 4);
  binary::put_u32(out, FeatureCache::kVersion);
  binary::put_u32(out, n_images);
  binary::put_u32(out, static_cast<std::uint32_t>(layers.size()));
  for (const auto& name : layers) binary::put_string(out, name);
}

void write_image(std::ostream& out, const CachedImage& image) {
  binary::put_string(out, image.path);
  for (const auto& per_scale : image.stats) {
    for (const auto& s : per_scale) {
      binary::put_u32(out, static_cast<std::uint32_t>(s.means.size()));
      for (float v : s.means) binary::put_f32(out, v);
      for (float v : s.stds) binary::put_f32(out, v);
    }
  }
}

}  // namespace

CachedStats quantize(const PooledStats& stats) {
  CachedStats out;
  out.means.assign(stats.means.begin(), stats.means.end());
  out.stds.assign(stats.stds.begin(), stats.stds.end());
  return out;
}

std::optional<std::size_t> FeatureCache::layer_index(const std::string& name) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i] == name) return i;
  }
  return std::nullopt;
}

const CachedImage* FeatureCache::find(const std::string& path) const {
  for (const auto& img : images) {
    if (img.path == path) return &img;
  }
  return nullptr;
}

void FeatureCache::write(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIoError, "cannot write cache " + path.string());
  write_header(out, static_cast<std::uint32_t>(images.size()), layers);
  for (const auto& img : images) write_image(out, img);
  if (!out) throw Error(Errc::kIoError, "failed writing cache " + path.string());
}

FeatureCache FeatureCache::read(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIoError, "cannot open cache " + path.string());
  binary::expect_magic(in, "TMQF", path.string());
  const auto version = binary::get_u32(in, "cache version");
  if (version != kVersion) {
    throw Error(Errc::kBadFileFormat, path.string() + ": unsupported cache version " + std::to_string(version));
  }
  const auto n_images = binary::get_u32(in, "image count");
  const auto n_layers = binary::get_u32(in, "layer count");
  if (n_layers == 0 || n_layers > 4096) throw Error(Errc::kBadFileFormat, path.string() + ": bad layer count");

  FeatureCache cache;
  for (std::uint32_t l = 0; l < n_layers; ++l) cache.layers.push_back(binary::get_string(in, "layer name"));
  cache.images.reserve(n_images);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    CachedImage img;
    img.path = binary::get_string(in, "image path");
    img.stats.resize(n_layers);
    for (std::uint32_t l = 0; l < n_layers; ++l) {
      for (std::size_t s = 0; s < kScaleCount; ++s) {
        const auto channels = binary::get_u32(in, "channel count");
        if (channels == 0 || channels > (1u << 20)) {
          throw Error(Errc::kBadFileFormat, path.string() + ": implausible channel count");
        }
        auto& st = img.stats[l][s];
        st.means.resize(channels);
        st.stds.resize(channels);
        for (auto& v : st.means) v = binary::get_f32(in, "means");
        for (auto& v : st.stds) v = binary::get_f32(in, "stds");
      }
    }
    cache.images.push_back(std::move(img));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(Errc::kBadFileFormat, path.string() + ": trailing bytes after last record");
  }
  return cache;
}

PooledStats FeatureCache::stats(const CachedImage& image, std::size_t layer, ScaleId scale) const {
  const auto& s = image.stats.at(layer)[scale == ScaleId::kOriginal ? 0 : 1];
  return PooledStats{layers.at(layer), scale, std::vector<double>(s.means.begin(), s.means.end()),
                     std::vector<double>(s.stds.begin(), s.stds.end())};
}

AggregatedFeatureVector FeatureCache::assemble(const CachedImage& image, const LayerTriple& triple,
                                               const DescriptorOptions& options) const {
  std::array<PooledStats, 3> original;
  std::array<PooledStats, 3> half;
  const auto names = triple.as_array();
  for (std::size_t i = 0; i < 3; ++i) {
    const auto idx = layer_index(names[i]);
    if (!idx) throw Error(Errc::kIncompleteCache, "layer '" + names[i] + "' is not in the cache");
    original[i] = stats(image, *idx, ScaleId::kOriginal);
    half[i] = stats(image, *idx, ScaleId::kHalf);
  }
  const std::array<const PooledStats*, 3> o{&original[0], &original[1], &original[2]};
  const std::array<const PooledStats*, 3> h{&half[0], &half[1], &half[2]};
  return assemble_descriptor(o, h, options);
}

Matrix FeatureCache::assemble_matrix(const DatasetManifest& manifest, const LayerTriple& triple,
                                     const DescriptorOptions& options) const {
  std::unordered_map<std::string, const CachedImage*> by_path;
  for (const auto& img : images) by_path.emplace(img.path, &img);
  for (const auto& name : triple.as_array()) {
    if (!layer_index(name)) throw Error(Errc::kIncompleteCache, "layer '" + name + "' is not in the cache");
  }

  Matrix x;
  for (std::size_t r = 0; r < manifest.size(); ++r) {
    const auto& path = manifest.entries[r].image_path;
    auto it = by_path.find(path);
    if (it == by_path.end()) throw Error(Errc::kIncompleteCache, "no cached features for '" + path + "'");
    const auto v = assemble(*it->second, triple, options);
    if (r == 0) x = Matrix(manifest.size(), v.size());
    if (v.size() != x.cols()) {
      throw Error(Errc::kDimensionMismatch, "descriptor length differs for '" + path + "'");
    }
    std::copy(v.values.begin(), v.values.end(), x.row(r).begin());
  }
  return x;
}

CacheReport cache_features(const DatasetManifest& manifest, const BackboneGraph& graph,
                           std::span<const std::string> layers, const fs::path& out_path,
                           const CacheOptions& options) {
  if (layers.empty()) throw Error(Errc::kInvalidConfig, "no layers requested for caching");
  for (const auto& layer : layers) graph.channels(layer);

  const fs::path tmp_path = out_path.string() + ".partial";
  std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIoError, "cannot write cache " + tmp_path.string());
  write_header(out, 0, layers);

  CacheReport report;
  const std::size_t chunk = std::max<std::size_t>(options.jobs, 1) * 4;
  for (std::size_t begin = 0; begin < manifest.size(); begin += chunk) {
    const std::size_t end = std::min(manifest.size(), begin + chunk);
    std::vector<std::optional<CachedImage>> results(end - begin);
    std::vector<std::string> failures(end - begin);

    parallel_for(end - begin, options.jobs, [&](std::size_t k) {
      const auto& entry = manifest.entries[begin + k];
      try {
        const auto msr = build_multiscale(load_image(manifest.resolve(entry)), options.filter);
        const auto pooled = pool_layers(graph, msr, layers, ScaleMode::kDual);
        CachedImage img{entry.image_path, std::vector<std::array<CachedStats, 2>>(layers.size())};
        for (std::size_t l = 0; l < layers.size(); ++l) {
          img.stats[l][0] = quantize(pooled[l]);
          img.stats[l][1] = quantize(pooled[layers.size() + l]);
        }
        results[k] = std::move(img);
      } catch (const Error& e) {
        failures[k] = entry.image_path + ": " + e.what();
      }
    });

    for (std::size_t k = 0; k < results.size(); ++k) {
      if (results[k]) {
        write_image(out, *results[k]);
        ++report.processed;
      } else {
        report.warnings.push_back(std::move(failures[k]));
        ++report.skipped;
      }
    }
    if (!out) throw Error(Errc::kIoError, "failed writing cache " + tmp_path.string());
  }

  // Patch the image count now that it is known.
  out.seekp(8);
  binary::put_u32(out, static_cast<std::uint32_t>(report.processed));
  out.close();
  if (!out) throw Error(Errc::kIoError, "failed finalizing cache " + tmp_path.string());
  std::error_code ec;
  fs::rename(tmp_path, out_path, ec);
  if (ec) throw Error(Errc::kIoError, "cannot move cache into place: " + ec.message());
  return report;
}

}  // namespace tmiqa
