#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <sstream>

#include <unistd.h>

#include "ttpchain/pipeline.hpp"

using namespace ttpchain;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("ttpchain_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

PipelineConfig e2e_config(const fs::path& out) {
  auto c = pipeline::load_config(TTPCHAIN_TEST_DATA "/e2e/pipeline.json");
  c.out_dir = out;
  return c;
}

std::string slurp(const fs::path& p) { return corpus::read_file(p); }

}  // namespace

TEST(Pipeline, EndToEndFindsTheChain) {
  TempDir tmp;
  std::ostringstream log;
  auto result = pipeline::run_pipeline(e2e_config(tmp.path()), log);
  ASSERT_EQ(result.patterns.size(), 1u);
  const auto& p = result.patterns[0];
  EXPECT_EQ(p.tx, "T1566");
  EXPECT_EQ(p.ty, "T1204");
  EXPECT_EQ(p.relation, Relation::Before);
  EXPECT_EQ(p.count, 3u);
  EXPECT_EQ(p.category, "Baiting towards malicious execution");
  for (auto name : {"catalog.json", "usage.json", "techniques.model.json", "classify.jsonl", "features.csv",
                    "features.layout.json", "relations.model.json", "predictions.jsonl", "patterns.csv"})
    EXPECT_TRUE(fs::exists(tmp.path() / name)) << name;
  EXPECT_NE(log.str().find("[mine]"), std::string::npos);
}

TEST(Pipeline, RerunsAreByteIdentical) {
  TempDir a, b;
  std::ostringstream log;
  auto ca = e2e_config(a.path());
  auto cb = e2e_config(b.path());
  cb.workers = 3;
  pipeline::run_pipeline(ca, log);
  pipeline::run_pipeline(cb, log);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a.path())) {
    auto other = b.path() / entry.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(slurp(entry.path()), slurp(other)) << entry.path().filename();
    ++files;
  }
  EXPECT_GE(files, 9u);
}

TEST(Pipeline, HighSupportYieldsNoPatterns) {
  TempDir tmp;
  auto c = e2e_config(tmp.path());
  c.min_support = 4;
  std::ostringstream log;
  EXPECT_TRUE(pipeline::run_pipeline(c, log).patterns.empty());
  EXPECT_EQ(slurp(tmp.path() / "patterns.csv"), std::string(patterns::kCsvHeader) + "\n");
  c.min_support = 999;
  EXPECT_TRUE(pipeline::run_pipeline(c, log).patterns.empty());
}

TEST(Pipeline, MissingInputNamesTheStage) {
  TempDir tmp;
  auto c = e2e_config(tmp.path());
  c.stix = tmp.path() / "nope.json";
  std::ostringstream log;
  try {
    pipeline::run_pipeline(c, log);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "kb");
  }
}

TEST(Pipeline, ConfigHashIgnoresOutputLocation) {
  PipelineConfig a, b;
  a.out_dir = "x";
  b.out_dir = "y";
  b.workers = 8;
  EXPECT_EQ(pipeline::config_hash(a), pipeline::config_hash(b));
  b.min_support = 3;
  EXPECT_NE(pipeline::config_hash(a), pipeline::config_hash(b));
  EXPECT_EQ(pipeline::config_hash(a).size(), 16u);
}

TEST(Pipeline, ConfigValidation) {
  nlohmann::json j = {{"technique_threshold", 0.0}};
  EXPECT_THROW(pipeline::config_from_json(j), ValidationError);
  j = {{"export_format", "png"}};
  EXPECT_THROW(pipeline::config_from_json(j), ValidationError);
  j = {{"stix", "a.json"}, {"reports", "r"}, {"seed", 5}};
  auto c = pipeline::config_from_json(j, "/base");
  EXPECT_EQ(c.stix, fs::path("/base/a.json"));
  EXPECT_EQ(c.train.seed, 5u);
  EXPECT_EQ(c.min_support, 2u);
  EXPECT_EQ(c.technique_threshold, 0.95);
}

TEST(Pipeline, FeatureSidecarMismatchIsDetected) {
  TempDir tmp;
  std::ostringstream log;
  pipeline::run_pipeline(e2e_config(tmp.path()), log);
  auto csv = tmp.path() / "features.csv";
  EXPECT_NO_THROW(pipeline::read_features(csv));
  pipeline::write_json(pipeline::sidecar_path(csv), FeatureLayout(5).descriptor());
  EXPECT_THROW(pipeline::read_features(csv), ValidationError);
}

TEST(ParallelMap, KeepsIndexOrder) {
  for (std::size_t workers : {1u, 2u, 7u, 0u}) {
    auto out = pipeline::parallel_map(100, workers, [](std::size_t i) {
      if (i % 7 == 0) std::this_thread::sleep_for(std::chrono::microseconds(50));
      return i * i;
    });
    ASSERT_EQ(out.size(), 100u);
    for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(out[i], i * i);
  }
  EXPECT_TRUE(pipeline::parallel_map(0, 4, [](std::size_t i) { return i; }).empty());
}

TEST(ParallelMap, PropagatesExceptions) {
  EXPECT_THROW(pipeline::parallel_map(50, 4,
                                      [](std::size_t i) {
                                        if (i == 31) throw ValidationError("boom");
                                        return i;
                                      }),
               ValidationError);
}

TEST(Pipeline, Fnv1aKnownValues) {
  EXPECT_EQ(pipeline::hex64(pipeline::fnv1a64("")), "cbf29ce484222325");
  EXPECT_EQ(pipeline::hex64(pipeline::fnv1a64("a")), "af63dc4c8601ec8c");
}
