#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace tmiqa {

/// The 13 residual-block-ending layers of the reference backbone that may be
/// tapped, in network order, with their channel widths.
struct ReferenceLayer {
  std::string_view name;
  std::size_t channels;
};

inline constexpr std::array<ReferenceLayer, 13> kReferenceLayers{{
    {"res2a", 256}, {"res2b", 256}, {"res2c", 256},
    {"res3a", 512}, {"res3b", 512}, {"res3c", 512}, {"res3d", 512},
    {"res4a", 1024}, {"res4b", 1024}, {"res4c", 1024},
    {"res4d", 1024}, {"res4e", 1024}, {"res4f", 1024},
}};

/// Reference layers grouped by depth. A combination picks three of the four
/// sets and one layer from each.
std::vector<std::vector<std::string>> reference_depth_sets();

/// Low / mid / high layer choice for one descriptor.
struct LayerTriple {
  std::string low;
  std::string mid;
  std::string high;

  std::array<std::string, 3> as_array() const { return {low, mid, high}; }
  /// "low,mid,high"
  std::string to_string() const;
  /// Parses "a,b,c". Throws InvalidConfig otherwise.
  static LayerTriple parse(std::string_view csv);

  auto operator<=>(const LayerTriple&) const = default;
};

/// The layers of the best-performing combination reported for the method.
inline LayerTriple default_layers() { return {"res2a", "res4b", "res4f"}; }

}  // namespace tmiqa
