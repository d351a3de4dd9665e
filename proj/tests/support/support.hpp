#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tmiqa/dataset.hpp"
#include "tmiqa/error.hpp"
#include "tmiqa/matrix.hpp"
#include "tmiqa/rng.hpp"

namespace tmiqa::testing {

std::filesystem::path fixture(const std::string& name);

// Removed with its contents on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Code of the tmiqa::Error thrown by fn, or nullopt if it returns normally.
std::optional<Errc> error_of(const std::function<void()>& fn);

double normal(Xoshiro256& rng);
Matrix random_matrix(std::size_t rows, std::size_t cols, Xoshiro256& rng);

// --- oracles, written without the library's code paths ---

// Least-squares fit with intercept via normal equations and Gaussian elimination.
std::vector<double> ols_predictions(const Matrix& x, std::span<const double> y, const Matrix& x_eval);

// Rank by counting smaller and equal values, then Pearson by the textbook formula.
double rank_then_pearson(std::span<const double> a, std::span<const double> b);
double naive_pearson(std::span<const double> a, std::span<const double> b);

// Descriptor-free manifest with the given scene id per entry; MOS cycles in [0, 100].
DatasetManifest synthetic_manifest(const std::vector<std::string>& scene_ids);

// Procedural benchmark images: `scenes` scenes at `levels` blur/contrast levels,
// written as PNGs plus manifest.csv into dir. MOS falls monotonically with level.
std::filesystem::path write_graded_dataset(const std::filesystem::path& dir, std::size_t scenes,
                                           std::size_t levels, std::size_t side, std::uint64_t seed);

// Copy of a manifest CSV with MOS values permuted across rows. Paths are kept
// verbatim, so dst should sit next to src.
std::filesystem::path write_permuted_manifest(const std::filesystem::path& src, const std::filesystem::path& dst,
                                              std::uint64_t seed);

}  // namespace tmiqa::testing
