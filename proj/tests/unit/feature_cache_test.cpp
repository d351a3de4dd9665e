#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include "support.hpp"
#include "tmiqa/feature_cache.hpp"

using namespace tmiqa;
using tmiqa::testing::error_of;
using tmiqa::testing::fixture;
using tmiqa::testing::TempDir;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kTaps{"t1", "t2"};
const LayerTriple kTriple{"t1", "t2", "t2"};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path write_manifest(const fs::path& path, const std::vector<std::string>& images) {
  std::ofstream out(path);
  out << "image_path,mos,category,scene_id\n";
  for (std::size_t i = 0; i < images.size(); ++i) {
    out << images[i] << ',' << 10 * (i + 1) << ",TM,s" << i << '\n';
  }
  return path;
}

class CacheTest : public ::testing::Test {
 protected:
  void SetUp() override {
    graph_.emplace(load_graph(fixture("tiny_backbone")));
    manifest_ = load_manifest(fixture("small_manifest.csv"));
  }
  std::optional<BackboneGraph> graph_;
  DatasetManifest manifest_;
  TempDir dir_;
};

}  // namespace

TEST_F(CacheTest, RecordCounts) {
  const auto report = cache_features(manifest_, *graph_, kTaps, dir_ / "c.tmqf");
  EXPECT_EQ(report.processed, 3u);
  EXPECT_EQ(report.skipped, 0u);
  EXPECT_TRUE(report.warnings.empty());
  EXPECT_FALSE(fs::exists(dir_ / "c.tmqf.partial"));
  const auto cache = FeatureCache::read(dir_ / "c.tmqf");
  EXPECT_EQ(cache.layers, kTaps);
  ASSERT_EQ(cache.images.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(cache.images[i].path, manifest_.entries[i].image_path);
    ASSERT_EQ(cache.images[i].stats.size(), 2u);
    EXPECT_EQ(cache.images[i].stats[0][0].means.size(), 4u);
    EXPECT_EQ(cache.images[i].stats[1][1].stds.size(), 8u);
  }
}

TEST_F(CacheTest, RoundTripBitIdentical) {
  cache_features(manifest_, *graph_, kTaps, dir_ / "c.tmqf");
  const auto cache = FeatureCache::read(dir_ / "c.tmqf");
  cache.write(dir_ / "again.tmqf");
  EXPECT_EQ(slurp(dir_ / "c.tmqf"), slurp(dir_ / "again.tmqf"));
  const auto back = FeatureCache::read(dir_ / "again.tmqf");
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.images[i].stats, cache.images[i].stats);

  // Stored stats are exactly the float32 rounding of the directly pooled ones.
  const auto msr = build_multiscale(load_image(manifest_.resolve(manifest_.entries[1])));
  const auto direct = pool_layers(*graph_, msr, kTaps);
  ASSERT_EQ(direct.size(), 4u);
  EXPECT_EQ(cache.images[1].stats[0][0], quantize(direct[0]));
  EXPECT_EQ(cache.images[1].stats[1][0], quantize(direct[1]));
  EXPECT_EQ(cache.images[1].stats[0][1], quantize(direct[2]));
  EXPECT_EQ(cache.images[1].stats[1][1], quantize(direct[3]));
}

TEST_F(CacheTest, AssembledEqualsDirectPath) {
  cache_features(manifest_, *graph_, kTaps, dir_ / "c.tmqf");
  const auto cache = FeatureCache::read(dir_ / "c.tmqf");
  for (const auto& entry : manifest_.entries) {
    const auto msr = build_multiscale(load_image(manifest_.resolve(entry)));
    // Direct path with the cache's float32 storage applied to each pooled block.
    auto widen = [](const PooledStats& s) {
      const auto q = quantize(s);
      return PooledStats{s.layer_id, s.scale, {q.means.begin(), q.means.end()}, {q.stds.begin(), q.stds.end()}};
    };
    const auto direct = pool_layers(*graph_, msr, kTaps);
    const std::array<PooledStats, 4> w{widen(direct[0]), widen(direct[1]), widen(direct[2]), widen(direct[3])};
    const std::array<const PooledStats*, 3> o{&w[0], &w[1], &w[1]}, h{&w[2], &w[3], &w[3]};
    for (const DescriptorOptions opts : {DescriptorOptions{}, DescriptorOptions{PoolingMode::kMeanOnly, ScaleMode::kDual},
                                         DescriptorOptions{PoolingMode::kMeanStd, ScaleMode::kOriginalOnly}}) {
      const auto from_cache = cache.assemble(*cache.find(entry.image_path), kTriple, opts);
      const auto expect = assemble_descriptor(o, h, opts);
      EXPECT_EQ(from_cache.values, expect.values);
      EXPECT_EQ(from_cache.layout, expect.layout);
    }
    // And within float32 rounding of the unquantized descriptor.
    const auto exact = extract_descriptor(*graph_, msr, kTriple);
    const auto cached = cache.assemble(*cache.find(entry.image_path), kTriple);
    for (std::size_t i = 0; i < exact.size(); ++i) {
      EXPECT_NEAR(cached.values[i], exact.values[i], 1e-6 * std::max(1.0, std::fabs(exact.values[i])));
    }
  }
}

TEST_F(CacheTest, Matrix) {
  cache_features(manifest_, *graph_, kTaps, dir_ / "c.tmqf");
  const auto cache = FeatureCache::read(dir_ / "c.tmqf");
  const auto x = cache.assemble_matrix(manifest_, kTriple);
  ASSERT_EQ(x.rows(), 3u);
  ASSERT_EQ(x.cols(), 80u);
  const auto row2 = cache.assemble(cache.images[2], kTriple);
  EXPECT_TRUE(std::equal(row2.values.begin(), row2.values.end(), x.row(2).begin()));

  EXPECT_EQ(error_of([&] { cache.assemble_matrix(manifest_, default_layers()); }), Errc::kIncompleteCache);
  auto extra = manifest_;
  extra.entries.push_back({"missing.png", 5.0, Category::kTM, "m"});
  EXPECT_EQ(error_of([&] { cache.assemble_matrix(extra, kTriple); }), Errc::kIncompleteCache);
}

TEST_F(CacheTest, SkipsBadImagesWithWarnings) {
  const auto m = load_manifest(write_manifest(
      dir_ / "m.csv", {fixture("scene_a.png").string(), fixture("corrupt.png").string(),
                       fixture("white_1x1.png").string(), fixture("nothing_here.png").string(),
                       fixture("scene_b.png").string()}));
  const auto report = cache_features(m, *graph_, kTaps, dir_ / "c.tmqf");
  EXPECT_EQ(report.processed, 2u);
  EXPECT_EQ(report.skipped, 3u);
  ASSERT_EQ(report.warnings.size(), 3u);
  EXPECT_NE(report.warnings[0].find("corrupt.png"), std::string::npos);
  const auto cache = FeatureCache::read(dir_ / "c.tmqf");
  ASSERT_EQ(cache.images.size(), 2u);
  EXPECT_EQ(cache.images[1].path, fixture("scene_b.png").string());
}

TEST_F(CacheTest, JobsDoNotChangeBytes) {
  cache_features(manifest_, *graph_, kTaps, dir_ / "one.tmqf", {1});
  cache_features(manifest_, *graph_, kTaps, dir_ / "four.tmqf", {4});
  EXPECT_EQ(slurp(dir_ / "one.tmqf"), slurp(dir_ / "four.tmqf"));
}

TEST_F(CacheTest, HeaderLayout) {
  const std::vector<std::string> only{"t1"};
  cache_features(manifest_, *graph_, only, dir_ / "c.tmqf");
  const auto bytes = slurp(dir_ / "c.tmqf");
  EXPECT_EQ(bytes.substr(0, 4), "TMQF");
  auto u32 = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[off + i]);
    return v;
  };
  EXPECT_EQ(u32(4), 1u);   // version
  EXPECT_EQ(u32(8), 3u);   // images
  EXPECT_EQ(u32(12), 1u);  // layers
  EXPECT_EQ(u32(16), 2u);  // name length
  EXPECT_EQ(bytes.substr(20, 2), "t1");
  // path, then 2 scales x (u32 + 4 means + 4 stds as f32)
  const std::size_t record = 4 + std::string("scene_a.png").size() + 2 * (4 + 8 * 4);
  EXPECT_EQ(u32(22 + 4 + 11), 4u);
  EXPECT_EQ(bytes.size(), 22 + record * 3);
}

TEST_F(CacheTest, ReaderRejectsDamage) {
  cache_features(manifest_, *graph_, kTaps, dir_ / "c.tmqf");
  const auto bytes = slurp(dir_ / "c.tmqf");
  auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream(dir_ / name, std::ios::binary) << data;
    return dir_ / name;
  };
  std::string bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_EQ(error_of([&] { FeatureCache::read(write("v.tmqf", bad_version)); }), Errc::kBadFileFormat);
  EXPECT_EQ(error_of([&] { FeatureCache::read(write("m.tmqf", "XXXX" + bytes.substr(4))); }), Errc::kBadFileFormat);
  EXPECT_EQ(error_of([&] { FeatureCache::read(write("t.tmqf", bytes.substr(0, bytes.size() - 3))); }),
            Errc::kBadFileFormat);
  EXPECT_EQ(error_of([&] { FeatureCache::read(write("x.tmqf", bytes + "junk")); }), Errc::kBadFileFormat);
  EXPECT_EQ(error_of([&] { FeatureCache::read(dir_ / "none.tmqf"); }), Errc::kIoError);
}
