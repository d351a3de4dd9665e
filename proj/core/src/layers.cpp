#include "tmiqa/layers.hpp"

#include "tmiqa/error.hpp"

namespace tmiqa {

std::vector<std::vector<std::string>> reference_depth_sets() {
  return {
      {"res2a", "res2b", "res2c"},
      {"res3a", "res3b", "res3c", "res3d"},
      {"res4a", "res4b", "res4c"},
      {"res4d", "res4e", "res4f"},
  };
}

std::string LayerTriple::to_string() const { return low + "," + mid + "," + high; }

LayerTriple LayerTriple::parse(std::string_view csv) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto comma = csv.find(',', start);
    parts.emplace_back(csv.substr(start, comma == std::string_view::npos ? csv.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (parts.size() != 3) {
    throw Error(Errc::kInvalidConfig,
                "expected three comma-separated layers (low,mid,high), got '" + std::string(csv) + "'");
  }
  for (const auto& p : parts) {
    if (p.empty()) throw Error(Errc::kInvalidConfig, "empty layer name in '" + std::string(csv) + "'");
  }
  return {parts[0], parts[1], parts[2]};
}

}  // namespace tmiqa
