#include "tmiqa/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include "tmiqa/error.hpp"
#include "tmiqa/rng.hpp"

namespace tmiqa {

namespace {

// Splits one CSV record; supports double-quoted fields with "" escapes.
std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  return fields;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string_view category_name(Category c) noexcept {
  switch (c) {
    case Category::kTM: return "TM";
    case Category::kMEF: return "MEF";
    case Category::kPP: return "PP";
  }
  return "?";
}

std::optional<Category> parse_category(std::string_view s) noexcept {
  if (s == "TM") return Category::kTM;
  if (s == "MEF") return Category::kMEF;
  if (s == "PP") return Category::kPP;
  return std::nullopt;
}

std::filesystem::path DatasetManifest::resolve(const ManifestEntry& e) const {
  const std::filesystem::path p(e.image_path);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

std::vector<double> DatasetManifest::mos() const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.mos);
  return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kFileNotFound, "manifest " + path.string());
  return parse_manifest(in, path.string(), path.parent_path());
}

DatasetManifest parse_manifest(std::istream& in, const std::string& origin,
                               const std::filesystem::path& base_dir) {
  DatasetManifest manifest;
  manifest.base_dir = base_dir;

  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::kMissingColumn, origin + ": empty manifest");
  if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
  const auto header = split_csv(line);
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[trim(header[i])] = i;
  for (const char* required : {"image_path", "mos", "category"}) {
    if (!column.contains(required)) {
      throw Error(Errc::kMissingColumn, origin + ": header lacks column '" + required + "'");
    }
  }
  const std::size_t path_col = column.at("image_path");
  const std::size_t mos_col = column.at("mos");
  const std::size_t cat_col = column.at("category");
  const std::optional<std::size_t> scene_col =
      column.contains("scene_id") ? std::optional(column.at("scene_id")) : std::nullopt;

  std::set<std::string> seen;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_csv(line);
    auto field = [&](std::size_t col) { return col < fields.size() ? trim(fields[col]) : std::string{}; };
    const std::string where = origin + " row " + std::to_string(row);

    ManifestEntry e;
    e.image_path = field(path_col);
    if (e.image_path.empty()) throw Error(Errc::kInvalidManifest, where + ": empty image_path");

    const std::string mos_text = field(mos_col);
    const auto [ptr, ec] = std::from_chars(mos_text.data(), mos_text.data() + mos_text.size(), e.mos);
    if (ec != std::errc{} || ptr != mos_text.data() + mos_text.size() || mos_text.empty()) {
      throw Error(Errc::kInvalidManifest, where + ": mos '" + mos_text + "' is not a number");
    }
    if (!(e.mos >= 0.0 && e.mos <= 100.0)) {
      throw Error(Errc::kMosOutOfRange, where + ": mos " + mos_text + " outside [0, 100]");
    }

    const std::string cat_text = field(cat_col);
    const auto cat = parse_category(cat_text);
    if (!cat) throw Error(Errc::kInvalidManifest, where + ": unknown category '" + cat_text + "'");
    e.category = *cat;

    e.scene_id = scene_col ? field(*scene_col) : std::string{};
    if (e.scene_id.empty()) {
      e.scene_id = std::filesystem::path(e.image_path).stem().string();
      ++manifest.missing_scene_ids;
    }
    if (!seen.insert(e.image_path).second) {
      throw Error(Errc::kDuplicatePath, where + ": duplicate image_path '" + e.image_path + "'");
    }
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

std::vector<std::size_t> scene_groups(const DatasetManifest& manifest) {
  std::unordered_map<std::string, std::size_t> ids;
  std::vector<std::size_t> out;
  out.reserve(manifest.size());
  for (const auto& e : manifest.entries) {
    auto [it, inserted] = ids.try_emplace(e.scene_id, ids.size());
    out.push_back(it->second);
  }
  return out;
}

Split make_split(const DatasetManifest& manifest, std::uint64_t seed, bool with_validation) {
  const auto group_of = scene_groups(manifest);
  const std::size_t n_groups =
      group_of.empty() ? 0 : *std::max_element(group_of.begin(), group_of.end()) + 1;
  if (n_groups < 5) {
    throw Error(Errc::kTooFewGroups,
                "splitting needs at least 5 scene groups, found " + std::to_string(n_groups));
  }
  std::vector<std::vector<std::size_t>> members(n_groups);
  for (std::size_t i = 0; i < group_of.size(); ++i) members[group_of[i]].push_back(i);

  Xoshiro256 rng(seed);
  std::vector<std::size_t> order(n_groups);
  for (std::size_t g = 0; g < n_groups; ++g) order[g] = g;
  shuffle(std::span(order), rng);

  Split split;
  split.seed = seed;
  const std::size_t total = manifest.size();
  std::size_t cursor = 0;
  // Take whole groups until the test share reaches one fifth.
  while (cursor < order.size() && split.test.size() * 5 < total) {
    const auto& m = members[order[cursor++]];
    split.test.insert(split.test.end(), m.begin(), m.end());
  }
  std::vector<std::size_t> remaining(order.begin() + static_cast<std::ptrdiff_t>(cursor), order.end());

  if (with_validation) {
    std::size_t pool = 0;
    for (auto g : remaining) pool += members[g].size();
    shuffle(std::span(remaining), rng);
    std::size_t taken = 0;
    while (taken < remaining.size() && split.validation.size() * 5 < pool) {
      const auto& m = members[remaining[taken++]];
      split.validation.insert(split.validation.end(), m.begin(), m.end());
    }
    remaining.erase(remaining.begin(), remaining.begin() + static_cast<std::ptrdiff_t>(taken));
  }
  for (auto g : remaining) split.train.insert(split.train.end(), members[g].begin(), members[g].end());
  if (split.train.empty()) {
    throw Error(Errc::kTooFewGroups, "scene groups too uneven: no entries left for training");
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace tmiqa
