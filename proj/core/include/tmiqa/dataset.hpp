#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tmiqa {

/// How a tone-mapped image was produced: tone mapping operator, multi-exposure
/// fusion, or post-processing.
enum class Category { kTM, kMEF, kPP };

inline constexpr std::array<Category, 3> kCategories{Category::kTM, Category::kMEF, Category::kPP};

std::string_view category_name(Category c) noexcept;
std::optional<Category> parse_category(std::string_view s) noexcept;

struct ManifestEntry {
  std::string image_path;
  double mos = 0.0;
  Category category = Category::kTM;
  std::string scene_id;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  /// Relative image paths resolve against this directory.
  std::filesystem::path base_dir;
  /// Rows whose scene_id was empty and fell back to the image stem.
  std::size_t missing_scene_ids = 0;

  std::size_t size() const noexcept { return entries.size(); }
  std::filesystem::path resolve(const ManifestEntry& e) const;
  std::vector<double> mos() const;
};

/// CSV with header image_path,mos,category,scene_id (scene_id may be absent
/// or empty). Throws MissingColumn, MosOutOfRange (names the data row),
/// DuplicatePath, InvalidManifest, FileNotFound.
DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(std::istream& in, const std::string& origin,
                               const std::filesystem::path& base_dir = {});

/// Entry indices partitioned by scene group.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;

  bool operator==(const Split&) const = default;
};

/// Scene groups (in order of first appearance) are shuffled with
/// Xoshiro256(seed) and moved to the test set until it holds at least 20% of
/// the entries. With validation, the remaining groups are shuffled again with
/// the same generator and moved to validation until it holds at least 20% of
/// them. Index lists are sorted. Throws TooFewGroups for fewer than 5 groups.
Split make_split(const DatasetManifest& manifest, std::uint64_t seed, bool with_validation);

/// Group index of every entry, numbered by first appearance of its scene_id.
std::vector<std::size_t> scene_groups(const DatasetManifest& manifest);

}  // namespace tmiqa
