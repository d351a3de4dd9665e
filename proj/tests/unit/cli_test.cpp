#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"
#include "tmiqa/feature_cache.hpp"
#include "tmiqa/plsr.hpp"

using namespace tmiqa;
using tmiqa::testing::fixture;
using tmiqa::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "tonemap-iqa");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool contains(const std::string& s, const std::string& needle) { return s.find(needle) != std::string::npos; }

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir;
    fixture_cache_ = (*dir_ / "fixture.tmqf").string();
    const auto r = invoke({"extract", "--manifest", fixture("small_manifest.csv").string(), "--model-dir",
                           fixture("tiny_backbone").string(), "--out-cache", fixture_cache_});
    ASSERT_EQ(r.code, 0) << r.err;
    // 6 scenes x 3 levels: enough groups to split, fewer than 21 images.
    synth_manifest_ = tmiqa::testing::write_graded_dataset(*dir_ / "synth", 6, 3, 64, 4).string();
    synth_cache_ = (*dir_ / "synth.tmqf").string();
    const auto s = invoke({"extract", "--manifest", synth_manifest_, "--model-dir", fixture("tiny_backbone").string(),
                           "--out-cache", synth_cache_, "--jobs", "2"});
    ASSERT_EQ(s.code, 0) << s.err;
  }
  static void TearDownTestSuite() { delete dir_; }

  static TempDir* dir_;
  static std::string fixture_cache_, synth_manifest_, synth_cache_;
  TempDir scratch_;
};

TempDir* CliTest::dir_ = nullptr;
std::string CliTest::fixture_cache_, CliTest::synth_manifest_, CliTest::synth_cache_;

}  // namespace

TEST_F(CliTest, ExtractSummaryAndGuard) {
  const auto cache = (scratch_ / "c.tmqf").string();
  const std::vector<std::string> args{"extract", "--manifest", fixture("small_manifest.csv").string(), "--model-dir",
                                      fixture("tiny_backbone").string(), "--out-cache", cache};
  auto r = invoke(args);
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "3 images, 0 skipped\n");
  EXPECT_TRUE(contains(r.err, "scene_id"));  // one row lacks a scene id
  EXPECT_EQ(slurp(cache), slurp(fixture_cache_));

  r = invoke(args);
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(contains(r.err, "cache exists"));

  auto forced = args;
  forced.push_back("--force");
  r = invoke(forced);
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(slurp(cache), slurp(fixture_cache_));
}

TEST_F(CliTest, ExtractMissingModelDir) {
  const auto r = invoke({"extract", "--manifest", fixture("small_manifest.csv").string(), "--model-dir",
                         (scratch_ / "nope").string(), "--out-cache", (scratch_ / "c.tmqf").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(contains(r.err, "PackageNotFound"));
}

TEST_F(CliTest, ExtractLayerSubsetAndDefaultLocation) {
  ::setenv("TONEMAP_IQA_CACHE_DIR", scratch_.path().c_str(), 1);
  const auto r = invoke({"extract", "--manifest", fixture("small_manifest.csv").string(), "--model-dir",
                         fixture("tiny_backbone").string(), "--layers", "t2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cache = FeatureCache::read(scratch_ / "features.tmqf");
  EXPECT_EQ(cache.layers, std::vector<std::string>{"t2"});
  // The same variable serves as the default for reading commands.
  const auto t = invoke({"train", "--manifest", fixture("small_manifest.csv").string(), "--layers", "t2,t2,t2",
                         "--components", "1", "--out-model", (scratch_ / "m.plsr").string()});
  ::unsetenv("TONEMAP_IQA_CACHE_DIR");
  EXPECT_EQ(t.code, 0) << t.err;

  const auto bad = invoke({"extract", "--manifest", fixture("small_manifest.csv").string(), "--model-dir",
                           fixture("tiny_backbone").string(), "--out-cache", (scratch_ / "x.tmqf").string(),
                           "--layers", "t1,res4f"});
  EXPECT_EQ(bad.code, 2);
}

TEST_F(CliTest, TrainFixedComponents) {
  const auto model_path = scratch_ / "m.plsr";
  const auto r = invoke({"train", "--cache", fixture_cache_, "--manifest", fixture("small_manifest.csv").string(),
                         "--layers", "t1,t2,t2", "--components", "2", "--out-model", model_path.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = load_model(model_path);
  EXPECT_EQ(model.n_components(), 2u);
  EXPECT_EQ(model.feature_dim(), 80u);
  EXPECT_EQ(model.meta().layer_config, "t1,t2,t2");
  EXPECT_EQ(model.meta().n_samples, 3u);

  const auto again = invoke({"train", "--cache", fixture_cache_, "--manifest", fixture("small_manifest.csv").string(),
                             "--layers", "t1,t2,t2", "--components", "2", "--out-model", model_path.string()});
  EXPECT_EQ(again.code, 2);
}

TEST_F(CliTest, TrainMeanOnlyHalvesFeatures) {
  const auto model_path = scratch_ / "m.plsr";
  const auto r = invoke({"train", "--cache", fixture_cache_, "--manifest", fixture("small_manifest.csv").string(),
                         "--layers", "t1,t2,t2", "--components", "1", "--paper-dim", "--out-model",
                         model_path.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = load_model(model_path);
  EXPECT_EQ(model.feature_dim(), 40u);
  EXPECT_EQ(model.meta().pooling, "mean_only");
}

TEST_F(CliTest, TrainSweepClipsRange) {
  const auto model_path = scratch_ / "m.plsr";
  const auto r = invoke({"train", "--cache", synth_cache_, "--manifest", synth_manifest_, "--layers", "t1,t2,t2",
                         "--sweep", "10:20", "--out-model", model_path.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(contains(r.err, "clipped"));
  EXPECT_TRUE(contains(r.err, "selected k"));
  const auto model = load_model(model_path);
  EXPECT_LE(model.n_components(), 17u);
}

TEST_F(CliTest, TrainErrors) {
  auto r = invoke({"train", "--cache", fixture_cache_, "--manifest", fixture("small_manifest.csv").string(),
                   "--components", "2", "--out-model", (scratch_ / "m.plsr").string()});
  EXPECT_EQ(r.code, 2);  // default reference layers are not in the fixture cache
  EXPECT_TRUE(contains(r.err, "IncompleteCache"));
  r = invoke({"train", "--cache", fixture_cache_, "--manifest", fixture("small_manifest.csv").string(), "--layers",
              "t1,t2,t2", "--out-model", (scratch_ / "m.plsr").string()});
  EXPECT_EQ(r.code, 1);  // neither --components nor --sweep
  r = invoke({"train", "--cache", fixture_cache_, "--manifest", fixture("small_manifest.csv").string(), "--layers",
              "t1,t2,t2", "--components", "5", "--out-model", (scratch_ / "m.plsr").string()});
  EXPECT_EQ(r.code, 2);  // k above N - 1
  r = invoke({"train", "--manifest", fixture("small_manifest.csv").string()});
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, PredictFromCacheAndImage) {
  const auto model_path = (scratch_ / "m.plsr").string();
  ASSERT_EQ(invoke({"train", "--cache", fixture_cache_, "--manifest", fixture("small_manifest.csv").string(),
                    "--layers", "t1,t2,t2", "--components", "2", "--out-model", model_path})
                .code,
            0);
  const auto r = invoke({"predict", "--model", model_path, "--cache", fixture_cache_, "--manifest",
                         fixture("small_manifest.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string header, first;
  std::getline(lines, header);
  std::getline(lines, first);
  EXPECT_EQ(header, "image_path,prediction");
  EXPECT_EQ(first.rfind("scene_a.png,", 0), 0u);
  // Two components on three images interpolate the training MOS.
  EXPECT_NEAR(std::stod(first.substr(first.find(',') + 1)), 62.5, 1e-6);

  const auto img = invoke({"predict", "--model", model_path, "--model-dir", fixture("tiny_backbone").string(),
                           "--image", fixture("scene_a.png").string()});
  ASSERT_EQ(img.code, 0) << img.err;
  const auto value = std::stod(img.out.substr(img.out.rfind(',') + 1));
  EXPECT_NEAR(value, 62.5, 1e-3);  // float32 cache vs exact features

  EXPECT_EQ(invoke({"predict", "--model", model_path}).code, 1);
  EXPECT_EQ(invoke({"predict", "--model", (scratch_ / "none.plsr").string(), "--cache", fixture_cache_, "--manifest",
                    fixture("small_manifest.csv").string()})
                .code,
            2);
}

TEST_F(CliTest, EvaluateReportStructureAndDeterminism) {
  const std::vector<std::string> base{"evaluate", "--cache", synth_cache_, "--manifest", synth_manifest_,
                                      "--layers", "t1,t2,t2", "--components", "3", "--runs", "11"};
  const auto a = invoke(base);
  ASSERT_EQ(a.code, 0) << a.err;
  const auto j = nlohmann::json::parse(a.out);
  EXPECT_EQ(j["per_run"].size(), 11u);
  EXPECT_TRUE(j["medians"]["overall"].contains("srocc"));
  EXPECT_EQ(j["config"]["runs"], 11);

  auto jobs = base;
  jobs.insert(jobs.end(), {"--jobs", "4"});
  EXPECT_EQ(invoke(jobs).out, a.out);

  auto to_file = base;
  const auto report = (scratch_ / "r.json").string();
  const auto csv = (scratch_ / "r.csv").string();
  to_file.insert(to_file.end(), {"--out-report", report, "--csv", csv});
  ASSERT_EQ(invoke(to_file).code, 0);
  EXPECT_EQ(slurp(report), a.out);
  EXPECT_TRUE(contains(slurp(csv), "median,"));
  EXPECT_EQ(invoke(to_file).code, 2);
  to_file.push_back("--force");
  EXPECT_EQ(invoke(to_file).code, 0);
}

TEST_F(CliTest, EvaluateFailedRunExitsTwo) {
  const auto r = invoke({"evaluate", "--cache", synth_cache_, "--manifest", synth_manifest_, "--layers", "t1,t2,t2",
                         "--components", "30", "--runs", "2"});
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, SearchLayersNeedsFourSets) {
  const auto r = invoke({"search-layers", "--cache", fixture_cache_, "--manifest",
                         fixture("small_manifest.csv").string(), "--runs", "2"});
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(contains(r.err, "insufficient layer sets"));
}

TEST_F(CliTest, SweepComponents) {
  const auto r = invoke({"sweep-components", "--cache", synth_cache_, "--manifest", synth_manifest_, "--layers",
                         "t1,t2,t2", "--runs", "3", "--range", "2:6"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::vector<std::string> rows;
  for (std::string line; std::getline(lines, line);) rows.push_back(line);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], "k,median_validation_srocc");
  EXPECT_EQ(rows[1].rfind("2,", 0), 0u);
  EXPECT_TRUE(contains(r.err, "best k"));

  const auto clipped = invoke({"sweep-components", "--cache", synth_cache_, "--manifest", synth_manifest_,
                               "--layers", "t1,t2,t2", "--runs", "2"});
  ASSERT_EQ(clipped.code, 0) << clipped.err;
  EXPECT_TRUE(contains(clipped.err, "clipped"));
}

TEST_F(CliTest, HelpDocumentsFlags) {
  const std::map<std::string, std::vector<std::string>> flags{
      {"extract", {"--manifest", "--model-dir", "--out-cache", "--layers", "--paper-dim", "--force", "--jobs"}},
      {"train", {"--cache", "--manifest", "--layers", "--components", "--sweep", "--seed", "--out-model"}},
      {"predict", {"--model", "--cache", "--manifest", "--model-dir", "--image"}},
      {"evaluate", {"--cache", "--manifest", "--layers", "--components", "--runs", "--seed", "--out-report", "--jobs"}},
      {"search-layers", {"--cache", "--manifest", "--runs", "--seed"}},
      {"sweep-components", {"--cache", "--manifest", "--layers", "--seed"}},
  };
  for (const auto& [cmd, names] : flags) {
    const auto r = invoke({cmd, "--help"});
    EXPECT_EQ(r.code, 0) << cmd;
    for (const auto& f : names) EXPECT_TRUE(contains(r.out, f)) << cmd << " " << f;
  }
  EXPECT_EQ(invoke({"--help"}).code, 0);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(invoke({}).code, 1);
  EXPECT_EQ(invoke({"frobnicate"}).code, 1);
  EXPECT_EQ(invoke({"evaluate", "--cache", synth_cache_}).code, 1);
  EXPECT_EQ(invoke({"evaluate", "--cache", synth_cache_, "--manifest", synth_manifest_, "--jobs", "0"}).code, 1);
  EXPECT_EQ(invoke({"extract", "--manifest", "m.csv", "--model-dir", "d", "--out-cache", "c", "--downsample", "x"})
                .code,
            1);
}
