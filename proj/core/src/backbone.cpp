#include "tmiqa/backbone.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "tmiqa/error.hpp"

namespace tmiqa {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path find_graph_file(const fs::path& dir) {
  if (fs::is_regular_file(dir / "backbone.onnx")) return dir / "backbone.onnx";
  std::vector<fs::path> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".onnx") found.push_back(entry.path());
  }
  if (found.size() != 1) {
    throw Error(Errc::kPackageNotFound, dir.string() + " must contain exactly one .onnx graph, found " +
                                            std::to_string(found.size()));
  }
  return found.front();
}

std::size_t positive_count(const json& obj, const std::string& key, const std::string& layer,
                           const fs::path& manifest) {
  if (!obj.is_object() || !obj.contains(layer) || !obj.at(layer).is_number_integer() ||
      obj.at(layer).get<long long>() <= 0) {
    throw Error(Errc::kManifestMismatch, manifest.string() + ": " + key + " of layer '" + layer +
                                             "' missing or not a positive integer");
  }
  return obj.at(layer).get<std::size_t>();
}

}  // namespace

std::string_view scale_name(ScaleId scale) noexcept {
  return scale == ScaleId::kOriginal ? "original" : "half";
}

BackboneGraph BackboneGraph::load(const fs::path& package_dir) {
  std::error_code ec;
  if (!fs::is_directory(package_dir, ec)) {
    throw Error(Errc::kPackageNotFound, "model package directory not found: " + package_dir.string());
  }
  const fs::path manifest_path = package_dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw Error(Errc::kPackageNotFound, "missing " + manifest_path.string());

  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::kManifestMismatch, manifest_path.string() + ": " + e.what());
  }

  try {
    if (!m.contains("format_version") || !m.at("format_version").is_number_integer()) {
      throw Error(Errc::kManifestMismatch, manifest_path.string() + ": missing format_version");
    }
    if (m.at("format_version").get<int>() != kFormatVersion) {
      throw Error(Errc::kUnsupportedGraphVersion,
                  manifest_path.string() + ": format_version " +
                      std::to_string(m.at("format_version").get<int>()));
    }

    BackboneGraph bg(OnnxGraph::load(find_graph_file(package_dir)));

    const auto& taps = m.at("tap_layers");
    if (!taps.is_array() || taps.empty()) {
      throw Error(Errc::kManifestMismatch, manifest_path.string() + ": tap_layers must be a nonempty list");
    }
    const auto& declared = bg.graph_.output_names();
    for (const auto& t : taps) {
      const auto name = t.get<std::string>();
      if (bg.channels_.contains(name)) {
        throw Error(Errc::kManifestMismatch, manifest_path.string() + ": duplicate tap '" + name + "'");
      }
      if (std::find(declared.begin(), declared.end(), name) == declared.end()) {
        throw Error(Errc::kManifestMismatch,
                    manifest_path.string() + ": tap '" + name + "' is not a declared graph output");
      }
      bg.tap_layers_.push_back(name);
      bg.channels_[name] = positive_count(m.at("channels"), "channels", name, manifest_path);
      bg.strides_[name] = positive_count(m.at("output_stride"), "output_stride", name, manifest_path);
    }

    const auto& pre = m.at("preprocessing");
    const auto mean = pre.at("mean").get<std::vector<double>>();
    const auto scale = pre.at("scale").get<std::vector<double>>();
    if (mean.size() != 3 || scale.size() != 3) {
      throw Error(Errc::kManifestMismatch, manifest_path.string() + ": preprocessing needs 3 means and 3 scales");
    }
    for (std::size_t c = 0; c < 3; ++c) {
      if (!(scale[c] > 0.0)) {
        throw Error(Errc::kManifestMismatch, manifest_path.string() + ": preprocessing scale must be positive");
      }
      bg.preprocessing_.mean[c] = mean[c];
      bg.preprocessing_.scale[c] = scale[c];
    }
    bg.source_checkpoint_ = m.value("source_checkpoint", std::string{});
    return bg;
  } catch (const json::exception& e) {
    throw Error(Errc::kManifestMismatch, manifest_path.string() + ": " + e.what());
  }
}

std::size_t BackboneGraph::channels(const std::string& layer) const {
  auto it = channels_.find(layer);
  if (it == channels_.end()) throw Error(Errc::kLayerMismatch, "layer '" + layer + "' is not tapped");
  return it->second;
}

std::size_t BackboneGraph::output_stride(const std::string& layer) const {
  auto it = strides_.find(layer);
  if (it == strides_.end()) throw Error(Errc::kLayerMismatch, "layer '" + layer + "' is not tapped");
  return it->second;
}

std::map<std::string, FeatureMap> BackboneGraph::extract_feature_maps(
    const NormalizedTensor& input, std::span<const std::string> layers, ScaleId scale) const {
  if (input.data.size() != input.height * input.width * 3) {
    throw Error(Errc::kGraphExecutionFailure, "normalized tensor buffer size mismatch");
  }
  std::set<std::string> unique;
  for (const auto& layer : layers) {
    const std::size_t stride = output_stride(layer);
    if (input.height < stride || input.width < stride) {
      throw Error(Errc::kInputTooSmall,
                  "layer '" + layer + "' needs inputs of at least " + std::to_string(stride) + "x" +
                      std::to_string(stride) + ", got " + std::to_string(input.height) + "x" +
                      std::to_string(input.width));
    }
    unique.insert(layer);
  }

  ChwTensor chw{3, input.height, input.width, std::vector<float>(input.data.size())};
  const std::size_t plane = input.height * input.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) chw.data[c * plane + i] = input.data[i * 3 + c];
  }

  const std::vector<std::string> wanted(unique.begin(), unique.end());
  auto produced = graph_.run(chw, wanted);

  std::map<std::string, FeatureMap> out;
  for (const auto& layer : wanted) {
    const ChwTensor& t = produced.at(layer);
    if (t.channels != channels(layer)) {
      throw Error(Errc::kGraphExecutionFailure,
                  "layer '" + layer + "' produced " + std::to_string(t.channels) +
                      " channels, manifest declares " + std::to_string(channels(layer)));
    }
    if (t.height == 0 || t.width == 0) {
      throw Error(Errc::kInputTooSmall, "layer '" + layer + "' produced an empty map");
    }
    FeatureMap fm{layer, scale, t.height, t.width, t.channels, std::vector<float>(t.data.size())};
    const std::size_t cells = t.height * t.width;
    for (std::size_t c = 0; c < t.channels; ++c) {
      for (std::size_t i = 0; i < cells; ++i) fm.data[i * t.channels + c] = t.data[c * cells + i];
    }
    out.emplace(layer, std::move(fm));
  }
  return out;
}

}  // namespace tmiqa
