#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#ifndef TMIQA_FIXTURE_DIR
#error "TMIQA_FIXTURE_DIR must be defined"
#endif

namespace tmiqa::testing {

namespace fs = std::filesystem;

fs::path fixture(const std::string& name) { return fs::path(TMIQA_FIXTURE_DIR) / name; }

TempDir::TempDir() {
  static std::uint64_t counter = 0;
  Xoshiro256 rng(static_cast<std::uint64_t>(reinterpret_cast<std::uintptr_t>(this)) ^ ++counter);
  for (;;) {
    std::ostringstream name;
    name << "tmiqa-test-" << std::hex << rng.next();
    path_ = fs::temp_directory_path() / name.str();
    if (fs::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::optional<Errc> error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

double normal(Xoshiro256& rng) {
  // Box-Muller; u1 kept away from zero.
  const double u1 = 1.0 - rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Xoshiro256& rng) {
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = normal(rng);
  }
  return m;
}

std::vector<double> ols_predictions(const Matrix& x, std::span<const double> y, const Matrix& x_eval) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols() + 1;
  auto design = [&](const Matrix& m, std::size_t r, std::size_t j) { return j == 0 ? 1.0 : m(r, j - 1); };

  // Augmented [A'A | A'y] in long double.
  std::vector<std::vector<long double>> a(d, std::vector<long double>(d + 1, 0.0L));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) a[i][j] += static_cast<long double>(design(x, r, i)) * design(x, r, j);
      a[i][d] += static_cast<long double>(design(x, r, i)) * y[r];
    }
  }
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < d; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    for (std::size_t r = 0; r < d; ++r) {
      if (r == col) continue;
      const long double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= d; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<long double> beta(d);
  for (std::size_t i = 0; i < d; ++i) beta[i] = a[i][d] / a[i][i];

  std::vector<double> out(x_eval.rows());
  for (std::size_t r = 0; r < x_eval.rows(); ++r) {
    long double s = 0.0L;
    for (std::size_t j = 0; j < d; ++j) s += beta[j] * design(x_eval, r, j);
    out[r] = static_cast<double>(s);
  }
  return out;
}

namespace {

std::vector<double> counting_ranks(std::span<const double> v) {
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      if (w < v[i]) less += 1;
      if (w == v[i]) equal += 1;
    }
    ranks[i] = less + (equal + 1.0) / 2.0;
  }
  return ranks;
}

}  // namespace

double naive_pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double rank_then_pearson(std::span<const double> a, std::span<const double> b) {
  const auto ra = counting_ranks(a);
  const auto rb = counting_ranks(b);
  return naive_pearson(ra, rb);
}

DatasetManifest synthetic_manifest(const std::vector<std::string>& scene_ids) {
  DatasetManifest m;
  for (std::size_t i = 0; i < scene_ids.size(); ++i) {
    m.entries.push_back({"img_" + std::to_string(i) + ".png", static_cast<double>((i * 37) % 101),
                         kCategories[i % 3], scene_ids[i]});
  }
  return m;
}

namespace {

cv::Mat3b render_scene(std::size_t side, Xoshiro256& rng) {
  cv::Mat3f img(static_cast<int>(side), static_cast<int>(side));
  const double gx = rng.uniform() - 0.5, gy = rng.uniform() - 0.5;
  const double freq = 0.15 + 0.35 * rng.uniform();
  const double angle = 3.14159265358979323846 * rng.uniform();
  std::array<double, 3> tint{};
  for (auto& t : tint) t = 0.3 + 0.4 * rng.uniform();
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) {
      const double u = static_cast<double>(c) / side - 0.5, v = static_cast<double>(r) / side - 0.5;
      const double wave = std::sin(freq * (c * std::cos(angle) + r * std::sin(angle)));
      for (int ch = 0; ch < 3; ++ch) {
        img(r, c)[ch] = static_cast<float>(tint[ch] + 0.3 * (gx * u + gy * v) + 0.2 * wave);
      }
    }
  }
  for (int k = 0; k < 6; ++k) {
    const cv::Point center(static_cast<int>(rng.below(side)), static_cast<int>(rng.below(side)));
    const int radius = 3 + static_cast<int>(rng.below(side / 5));
    const cv::Scalar color(rng.uniform(), rng.uniform(), rng.uniform());
    if (k % 2 == 0) {
      cv::circle(img, center, radius, color, cv::FILLED);
    } else {
      cv::rectangle(img, center, center + cv::Point(radius, radius / 2 + 2), color, cv::FILLED);
    }
  }
  cv::Mat3b out;
  img.convertTo(out, CV_8UC3, 255.0);
  return out;
}

cv::Mat3b distort(const cv::Mat3b& clean, std::size_t level) {
  cv::Mat3f f;
  clean.convertTo(f, CV_32FC3, 1.0 / 255.0);
  if (level > 0) cv::GaussianBlur(f, f, cv::Size(0, 0), 0.9 * static_cast<double>(level));
  const double contrast = 1.0 - 0.14 * static_cast<double>(level);
  const cv::Scalar mean = cv::mean(f);
  f = (f - mean) * contrast + mean;
  cv::Mat3b out;
  f.convertTo(out, CV_8UC3, 255.0);
  return out;
}

}  // namespace

fs::path write_graded_dataset(const fs::path& dir, std::size_t scenes, std::size_t levels, std::size_t side,
                              std::uint64_t seed) {
  fs::create_directories(dir);
  Xoshiro256 rng(seed);
  const fs::path manifest = dir / "manifest.csv";
  std::ofstream csv(manifest);
  csv << "image_path,mos,category,scene_id\n";
  for (std::size_t s = 0; s < scenes; ++s) {
    const cv::Mat3b clean = render_scene(side, rng);
    for (std::size_t level = 0; level < levels; ++level) {
      const std::string name = "s" + std::to_string(s) + "_l" + std::to_string(level) + ".png";
      cv::imwrite((dir / name).string(), distort(clean, level));
      const double mos = 90.0 - 80.0 * static_cast<double>(level) / static_cast<double>(std::max<std::size_t>(levels - 1, 1));
      csv << name << ',' << mos << ',' << category_name(kCategories[s % 3]) << ",scene" << s << '\n';
    }
  }
  return manifest;
}

fs::path write_permuted_manifest(const fs::path& src, const fs::path& dst, std::uint64_t seed) {
  auto m = load_manifest(src);
  std::vector<double> mos = m.mos();
  Xoshiro256 rng(seed);
  shuffle(std::span<double>(mos), rng);
  std::ofstream csv(dst);
  csv << "image_path,mos,category,scene_id\n";
  csv.precision(17);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& e = m.entries[i];
    csv << e.image_path << ',' << mos[i] << ',' << category_name(e.category) << ','
        << e.scene_id << '\n';
  }
  return dst;
}

}  // namespace tmiqa::testing
