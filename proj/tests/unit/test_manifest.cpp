#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "ctsgan/error.hpp"
#include "ctsgan/manifest.hpp"
#include "ctsgan/pipeline.hpp"
#include "temp_dir.hpp"
#include "tiny_manifest.hpp"

namespace {

using namespace ctsgan;
using nlohmann::json;

TEST(Manifest, DefaultsRoundtripThroughJson) {
  const auto m = ExperimentManifest::defaults();
  const json j = m;
  EXPECT_EQ(json(j.get<ExperimentManifest>()), j);
  for (const char* key : {"phantom", "sgan_train", "generate", "metrics", "nodulesim", "detect"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(m.require_detect().sizes.size(), 6u);
  EXPECT_EQ(m.require_sgan_train().steps, 3000);
}

TEST(Manifest, MissingSectionNamesIt) {
  ExperimentManifest m;
  try {
    m.require_nodulesim();
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("nodulesim"), std::string::npos);
  }
  EXPECT_THROW(m.require_phantom(), UsageError);
}

TEST(Manifest, FileLoadingResolvesRelativeOutputDir) {
  testutil::TempDir dir("manifest");
  auto m = ExperimentManifest::defaults();
  m.output_dir = "run";
  save_manifest(m, dir.path() / "m.json");
  const auto back = load_manifest(dir.path() / "m.json");
  EXPECT_EQ(back.output_dir, dir.path() / "run");

  std::ofstream(dir.path() / "bad.json") << "{ not json";
  EXPECT_THROW(load_manifest(dir.path() / "bad.json"), UsageError);
  std::ofstream(dir.path() / "version.json") << R"({"format_version": 99})";
  EXPECT_THROW(load_manifest(dir.path() / "version.json"), UsageError);
  EXPECT_THROW(load_manifest(dir.path() / "absent.json"), UsageError);
}

TEST(Pipeline, PhantomParamsAndIdsAreStable) {
  const PhantomParams base;
  const auto a = phantom_params(base, 3, PhantomStream::corpus, 5);
  EXPECT_EQ(a.seed, phantom_params(base, 3, PhantomStream::corpus, 5).seed);
  std::set<std::uint64_t> seeds;
  for (auto stream : {PhantomStream::corpus, PhantomStream::nodule_training, PhantomStream::domain_a,
                      PhantomStream::domain_b}) {
    for (std::int64_t i = 0; i < 10; ++i) seeds.insert(phantom_params(base, 3, stream, i).seed);
  }
  EXPECT_EQ(seeds.size(), 40u);
  EXPECT_EQ(phantom_id(7), "phantom-0007");
  EXPECT_EQ(generated_id(7), "synthetic-7");
}

TEST(Pipeline, StagesFailCleanlyWithoutInputs) {
  testutil::TempDir dir("nostage");
  const auto m = testutil::tiny_manifest(dir.path());
  const LogSink quiet = [](const json&) {};
  EXPECT_THROW(stage_generate(m, quiet), Error);
  EXPECT_THROW(load_nodule_model(m, NoduleDirection::inject), Error);
  auto bare = m;
  bare.phantom.reset();
  EXPECT_THROW(stage_phantom(bare, quiet), UsageError);
}

TEST(Pipeline, TrainingLogRecordsCarryTheDocumentedFields) {
  testutil::TempDir dir("logs");
  const auto m = testutil::tiny_manifest(dir.path());
  std::vector<json> records;
  const LogSink sink = [&](const json& r) { records.push_back(r); };
  stage_phantom(m, sink);
  stage_train_sgan(m, sink);
  int steps = 0;
  for (const auto& r : records) {
    if (!r.contains("d_loss")) continue;
    ++steps;
    for (const char* key : {"step", "d_loss", "g_loss", "gp", "loss_kind", "wall_ms"}) EXPECT_TRUE(r.contains(key));
  }
  EXPECT_GE(steps, 3);
  EXPECT_TRUE(std::filesystem::exists(paths::phantoms(m) / "index.json"));
}

}  // namespace
