#include <fstream>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <vector>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "ctsgan/dataset_mix.hpp"
#include "ctsgan/error.hpp"
#include "ctsgan/nodule.hpp"
#include "ctsgan/nodule_cgan.hpp"
#include "ctsgan/phantom.hpp"
#include "frozen.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

namespace {

using namespace ctsgan;

// chi-square critical value, 3 degrees of freedom, alpha = 0.01
constexpr double kChi2Df3At01 = 11.3449;

Volume ramp(std::int64_t edge) {
  std::vector<float> vox(static_cast<std::size_t>(edge * edge * edge));
  for (std::size_t i = 0; i < vox.size(); ++i) vox[i] = static_cast<float>(i % 97) / 97.0f;
  return Volume({edge, edge, edge}, std::move(vox));
}

NodulePhantom nodule_phantom(std::uint64_t seed) {
  PhantomParams p;
  p.seed = seed;
  Rng rng(seed);
  return make_nodule_phantom(p, CountDistribution{}, RadiusDistribution{}, 16, rng);
}

std::int64_t count_differences(const Volume& a, const Volume& b, const Voi* footprint) {
  std::int64_t n = 0;
  for (std::int64_t z = 0; z < a.depth(); ++z)
    for (std::int64_t y = 0; y < a.height(); ++y)
      for (std::int64_t x = 0; x < a.width(); ++x) {
        if (footprint != nullptr) {
          const bool inside = z >= footprint->origin[0] && z < footprint->origin[0] + footprint->edge &&
                              y >= footprint->origin[1] && y < footprint->origin[1] + footprint->edge &&
                              x >= footprint->origin[2] && x < footprint->origin[2] + footprint->edge;
          if (inside) continue;
        }
        n += a.at(z, y, x) != b.at(z, y, x);
      }
  return n;
}

// A lung voxel whose 16-VOI fits, and a body voxel outside the lungs.
std::pair<Index3, Index3> lung_and_body_sites(const NodulePhantom& p) {
  const auto& v = p.clean.volume;
  std::optional<Index3> lung, body;
  for (std::int64_t z = 8; z <= 24; ++z)
    for (std::int64_t y = 8; y <= 24; ++y)
      for (std::int64_t x = 8; x <= 24; ++x) {
        const Index3 c{z, y, x};
        if (!lung && inside_mask(p.clean.lung_mask, v.shape(), c)) lung = c;
        if (!body && !inside_mask(p.clean.lung_mask, v.shape(), c) && v.at(z, y, x) > 0.5f) body = c;
      }
  return {lung.value(), body.value()};
}

TEST(Voi, ExtractPasteRoundtripIsIdentity) {
  const auto v = ramp(32);
  const auto voi = extract_voi(v, {16, 10, 20}, 16);
  EXPECT_EQ(voi.origin, (Index3{8, 2, 12}));
  EXPECT_TRUE(paste_back(v, voi) == v);
}

TEST(Voi, PasteTouchesOnlyTheFootprint) {
  const auto v = ramp(32);
  auto voi = extract_voi(v, {12, 12, 12}, 8);
  for (auto& x : voi.cube) x = 1.0f - x;
  const auto out = paste_back(v, voi);
  EXPECT_EQ(count_differences(out, v, &voi), 0);
  EXPECT_GT(count_differences(out, v, nullptr), 0);
}

TEST(Voi, BoundsAndEdgeChecks) {
  const auto v = ramp(32);
  EXPECT_THROW(extract_voi(v, {4, 16, 16}, 16), IndexError);
  EXPECT_THROW(extract_voi(v, {16, 16, 30}, 8), IndexError);
  EXPECT_THROW(extract_voi(v, {16, 16, 16}, 7), ArgumentError);
  EXPECT_NO_THROW(extract_voi(v, {8, 8, 8}, 16));
}

TEST(MaskCenter, RadiusZeroIsIdentity) {
  const auto voi = extract_voi(ramp(32), {16, 16, 16}, 16);
  EXPECT_EQ(mask_center(voi, 0.0).cube, voi.cube);
  EXPECT_THROW(mask_center(voi, 8.0), ArgumentError);
}

TEST(MaskCenter, MaskedCountTracksSphereVolume) {
  auto voi = extract_voi(ramp(32), {16, 16, 16}, 16);
  for (auto& x : voi.cube) x = 1.0f;
  for (double r : {4.0, 5.0, 6.0, 7.0, 7.9}) {
    const auto masked = mask_center(voi, r);
    std::int64_t zeros = 0;
    for (float x : masked.cube) zeros += x == 0.0f;
    EXPECT_EQ(zeros, oracle::sphere_voxels(16, r)) << r;
    const double analytic = 4.0 / 3.0 * std::numbers::pi * r * r * r;
    EXPECT_NEAR(static_cast<double>(zeros), analytic, 0.1 * analytic) << r;
    for (std::int64_t z : {0, 15})
      for (std::int64_t y : {0, 15})
        for (std::int64_t x : {0, 15}) EXPECT_EQ(masked.at(z, y, x), 1.0f);
  }
}

TEST(RenderNodule, BrightensSphereAndLeavesRestAlone) {
  const auto p = nodule_phantom(1);
  const auto [lung, body] = lung_and_body_sites(p);
  (void)body;
  const NoduleSpec spec{lung, 3.0, 0.62f};
  const auto out = render_nodule(p.clean.volume, spec);
  EXPECT_GT(sphere_mean(out, spec), sphere_mean(p.clean.volume, spec));
  const auto voi = extract_voi(out, lung, 8);
  EXPECT_EQ(count_differences(out, p.clean.volume, &voi), 0);
}

TEST(CountDistribution, ChiSquareMatchesConfiguredProbabilities) {
  const CountDistribution d;
  Rng rng(2024);
  std::map<int, double> observed;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) observed[d.sample(rng)] += 1.0;
  double chi2 = 0.0;
  for (int k = 1; k <= 4; ++k) {
    const double expected = draws * frozen::kCountProbabilities[k - 1];
    chi2 += (observed[k] - expected) * (observed[k] - expected) / expected;
  }
  EXPECT_EQ(observed.size(), 4u);
  EXPECT_LT(chi2, kChi2Df3At01);
}

TEST(RadiusDistribution, ClippedAndFixed) {
  RadiusDistribution d;
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const double r = d.sample(rng);
    EXPECT_GE(r, 2.0);
    EXPECT_LE(r, 8.0);
  }
  d.fixed = 3.5;
  EXPECT_EQ(d.sample(rng), 3.5);
}

TEST(NodulePlan, PointMassAtZeroGivesEmptyPlan) {
  const auto p = nodule_phantom(2);
  CountDistribution none;
  none.probabilities = {{0, 1.0}};
  Rng rng(0);
  EXPECT_TRUE(
      sample_nodule_plan(rng, none, RadiusDistribution{}, p.clean.lung_mask, p.clean.volume.shape(), 16).empty());
}

TEST(NodulePlan, CentersInsideMaskNonOverlappingAndDeterministic) {
  const auto p = nodule_phantom(3);
  const auto& shape = p.clean.volume.shape();
  CountDistribution four;
  four.probabilities = {{4, 1.0}};
  RadiusDistribution radii;
  radii.fixed = 2.5;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng a(seed), b(seed);
    const auto plan = sample_nodule_plan(a, four, radii, p.clean.lung_mask, shape, 16);
    const auto again = sample_nodule_plan(b, four, radii, p.clean.lung_mask, shape, 16);
    ASSERT_EQ(plan.size(), 4u);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      EXPECT_TRUE(inside_mask(p.clean.lung_mask, shape, plan[i].center));
      EXPECT_EQ(plan[i].center, again[i].center);
      for (std::size_t j = 0; j < i; ++j) {
        double d2 = 0.0;
        for (int k = 0; k < 3; ++k) d2 += std::pow(double(plan[i].center[k] - plan[j].center[k]), 2);
        EXPECT_GE(std::sqrt(d2), plan[i].radius_vox + plan[j].radius_vox);
      }
    }
  }
}

TEST(NodulePlan, TinyMaskRaisesPlacementError) {
  const Shape3 shape{32, 32, 32};
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(shape.numel()), 0);
  mask[static_cast<std::size_t>((16 * 32 + 16) * 32 + 16)] = 1;
  CountDistribution two;
  two.probabilities = {{2, 1.0}};
  Rng rng(0);
  EXPECT_THROW(sample_nodule_plan(rng, two, RadiusDistribution{}, mask, shape, 16), PlacementError);

  Rng partial(0);
  const auto plan =
      sample_nodule_plan(partial, two, RadiusDistribution{}, mask, shape, 16, 100, PlacementPolicy::at_least_one);
  ASSERT_EQ(plan.size(), 1u);
  EXPECT_EQ(plan[0].center, (Index3{16, 16, 16}));

  std::vector<std::uint8_t> empty(mask.size(), 0);
  Rng none(0);
  EXPECT_THROW(sample_nodule_plan(none, two, RadiusDistribution{}, empty, shape, 16, 100, PlacementPolicy::at_least_one),
               PlacementError);
}

class CganFixture : public ::testing::Test {
 protected:
  CganFixture() : injector_(spec(), NoduleDirection::inject, 1), eraser_(spec(), NoduleDirection::erase, 2) {}
  static NoduleCganSpec spec() {
    NoduleCganSpec s;
    s.width = 8;
    s.batch = 4;
    return s;
  }
  NoduleCgan injector_;
  NoduleCgan eraser_;
};

TEST_F(CganFixture, EditsAreLocalBoundedAndDeterministic) {
  const auto p = nodule_phantom(4);
  const auto [lung, body] = lung_and_body_sites(p);
  const NoduleSpec spec{lung, 3.0, 0.62f};
  const auto voi = extract_voi(p.clean.volume, lung, 16);
  const auto injected = inject_nodule(injector_, p.clean.volume, spec, p.clean.lung_mask);
  EXPECT_EQ(injected.provenance(), Provenance::injected);
  EXPECT_EQ(count_differences(injected, p.clean.volume, &voi), 0);
  EXPECT_TRUE(injected == inject_nodule(injector_, p.clean.volume, spec, p.clean.lung_mask));
  for (float x : injected.voxels()) {
    EXPECT_GE(x, 0.0f);
    EXPECT_LE(x, 1.0f);
  }
  const auto erased = erase_nodule(eraser_, p.clean.volume, spec, p.clean.lung_mask);
  EXPECT_EQ(erased.provenance(), Provenance::erased);
  EXPECT_EQ(count_differences(erased, p.clean.volume, &voi), 0);

  const NoduleSpec wall{body, 3.0, 0.62f};
  EXPECT_THROW(inject_nodule(injector_, p.clean.volume, wall, p.clean.lung_mask), PlacementError);
  EXPECT_THROW(erase_nodule(eraser_, p.clean.volume, wall, p.clean.lung_mask), PlacementError);
  EXPECT_THROW(inject_nodule(eraser_, p.clean.volume, spec, p.clean.lung_mask), ArgumentError);
}

TEST_F(CganFixture, TrainingPairsAndPersistence) {
  std::vector<NodulePhantom> ps{nodule_phantom(5), nodule_phantom(6)};
  const auto pairs = injector_pairs(ps, 16);
  std::size_t nodules = 0;
  for (const auto& p : ps) nodules += p.nodules.size();
  ASSERT_EQ(pairs.size(), nodules);
  for (const auto& pair : pairs) {
    EXPECT_EQ(pair.input.cube, mask_center(pair.target, mask_radius(pair.nodule, 16)).cube);
  }
  Rng rng(0);
  std::int64_t reports = 0;
  injector_.train(pairs, 3, rng, [&](const CganStepReport& r, double) {
    ++reports;
    EXPECT_TRUE(std::isfinite(r.d_loss));
    EXPECT_GE(r.gp, 0.0);
  });
  EXPECT_EQ(reports, 3);
  EXPECT_EQ(eraser_pairs(injector_, ps).size(), nodules);

  testutil::TempDir dir("cgan");
  injector_.save(dir.path());
  auto back = NoduleCgan::load(dir.path());
  EXPECT_EQ(back.direction(), NoduleDirection::inject);
  EXPECT_EQ(back.apply(pairs[0].input, pairs[0].nodule).cube, injector_.apply(pairs[0].input, pairs[0].nodule).cube);
  EXPECT_THROW(injector_.train({}, 1, rng), ArgumentError);
}

TEST(CganSpec, EdgeMustBeMultipleOfEight) {
  NoduleCganSpec s;
  s.voi_edge = 12;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(SplitSizes, DefaultRatiosOn1200) {
  const auto s = split_sizes(frozen::kSplitTotal, SplitRatios{});
  EXPECT_EQ(s.train, frozen::kSplitTrain);
  EXPECT_EQ(s.val, frozen::kSplitVal);
  EXPECT_EQ(s.test, frozen::kSplitTest);
  for (std::int64_t total = 0; total < 300; ++total) {
    const auto t = split_sizes(total, SplitRatios{});
    EXPECT_EQ(t.train + t.val + t.test, total);
  }
  EXPECT_THROW(split_sizes(10, SplitRatios{0.5, 0.5, 0.5}), ConfigError);
}

std::vector<SourceEntry> sources(int per_domain) {
  std::vector<SourceEntry> out;
  for (int i = 0; i < per_domain; ++i) out.push_back({"a-" + std::to_string(i), Domain::a});
  for (int i = 0; i < per_domain; ++i) out.push_back({"b-" + std::to_string(i), Domain::b});
  return out;
}

void expect_fair(const DatasetMix& mix) {
  std::map<Domain, std::map<Label, int>> counts;
  for (const auto& e : mix.entries) ++counts[e.domain][e.label];
  for (auto d : {Domain::a, Domain::b}) EXPECT_LE(std::abs(counts[d][Label::nodule] - counts[d][Label::clean]), 1);
  for (auto s : {Split::val, Split::test}) {
    int nodule = 0, clean = 0;
    for (const auto& e : mix.split(s)) (e.label == Label::nodule ? nodule : clean)++;
    EXPECT_EQ(nodule, clean) << to_string(s);
  }
  double table[2][2] = {};
  for (const auto& e : mix.entries) table[e.domain == Domain::a ? 0 : 1][e.label == Label::nodule ? 0 : 1] += 1.0;
  const double mi = label_domain_mutual_information(mix.entries);
  EXPECT_NEAR(mi, oracle::mutual_information_bits(table), 1e-12);
  EXPECT_LT(mi, 0.01);
}

TEST(UnbiasedPlan, FairOn160Volumes) {
  Rng rng(11);
  const auto mix = plan_unbiased_dataset(sources(80), rng);
  ASSERT_EQ(mix.entries.size(), 160u);
  expect_fair(mix);
  const auto sizes = split_sizes(160, SplitRatios{});
  EXPECT_EQ(static_cast<std::int64_t>(mix.split(Split::train).size()), sizes.train);
  EXPECT_EQ(static_cast<std::int64_t>(mix.split(Split::val).size()), sizes.val);
  EXPECT_EQ(static_cast<std::int64_t>(mix.split(Split::test).size()), sizes.test);
  std::set<std::string> ids;
  for (const auto& e : mix.entries) EXPECT_TRUE(ids.insert(e.id).second);
  for (const auto& e : mix.entries) {
    if (e.domain == Domain::a) EXPECT_EQ(e.label == Label::clean, e.pathway == Pathway::erased);
    if (e.domain == Domain::b) EXPECT_EQ(e.label == Label::nodule, e.pathway == Pathway::injected);
  }
  Rng again(11);
  EXPECT_EQ(nlohmann::json(plan_unbiased_dataset(sources(80), again)), nlohmann::json(mix));
}

TEST(UnbiasedPlan, TooSmallCorpusIsConfigError) {
  Rng rng(0);
  EXPECT_THROW(plan_unbiased_dataset(sources(3), rng), ConfigError);
}

TEST(DatasetMix, JsonRoundtripAndDuplicateIds) {
  Rng rng(1);
  const auto mix = plan_unbiased_dataset(sources(8), rng);
  testutil::TempDir dir("mix");
  save_dataset_mix(mix, dir.path() / "mix.json");
  EXPECT_EQ(nlohmann::json(load_dataset_mix(dir.path() / "mix.json")), nlohmann::json(mix));
  auto placed = mix;
  for (auto& e : placed.entries) e.path = (dir.path() / "volumes" / e.id).string();
  save_dataset_mix(placed, dir.path() / "placed.json");
  std::ifstream raw(dir.path() / "placed.json");
  EXPECT_EQ(nlohmann::json::parse(raw)["entries"][0]["path"], "volumes/" + placed.entries[0].id);
  EXPECT_EQ(load_dataset_mix(dir.path() / "placed.json").entries[0].path, placed.entries[0].path);
  auto dup = mix;
  dup.entries.push_back(dup.entries.front());
  EXPECT_THROW(dup.validate(), FormatError);
}

TEST_F(CganFixture, BuildUnbiasedDatasetWritesEditedVolumes) {
  std::vector<SourceVolume> src;
  for (int i = 0; i < 8; ++i) {
    auto p = nodule_phantom(100 + static_cast<std::uint64_t>(i));
    src.push_back({p.with_nodules.with_id("a-" + std::to_string(i)), p.clean.lung_mask, p.nodules, Domain::a});
    auto q = nodule_phantom(200 + static_cast<std::uint64_t>(i));
    src.push_back({q.clean.volume.with_id("b-" + std::to_string(i)), q.clean.lung_mask, {}, Domain::b});
  }
  NoduleTools tools{&injector_, &eraser_, CountDistribution{}, RadiusDistribution{}};
  testutil::TempDir dir("build");
  Rng rng(3);
  const auto mix = build_unbiased_dataset(src, tools, rng, dir.path());
  expect_fair(mix);
  for (const auto& e : mix.entries) {
    const auto v = load_volume(e.path);
    EXPECT_EQ(v.id(), e.id);
    const auto expected = e.pathway == Pathway::erased     ? Provenance::erased
                          : e.pathway == Pathway::injected ? Provenance::injected
                                                           : Provenance::real_phantom;
    EXPECT_EQ(v.provenance(), expected);
  }
}

Volume as_synthetic(const Volume& v, const std::string& id) {
  return Volume(v.shape(), std::vector<float>(v.voxels().begin(), v.voxels().end()), v.spacing_mm(),
                Provenance::synthetic, id);
}

TEST_F(CganFixture, SyntheticDatasetSkipsVolumesWithoutLung) {
  const Shape3 shape{32, 32, 32};
  std::vector<Volume> volumes;
  for (int i = 0; i < 4; ++i) {
    volumes.push_back(as_synthetic(nodule_phantom(300 + static_cast<std::uint64_t>(i)).clean.volume,
                                   "lung-" + std::to_string(i)));
    volumes.emplace_back(shape, std::vector<float>(static_cast<std::size_t>(shape.numel()), 0.6f),
                         Spacing{1.0, 1.0, 1.0}, Provenance::synthetic, "solid-" + std::to_string(i));
  }
  NoduleTools tools{&injector_, nullptr, CountDistribution{}, RadiusDistribution{}};
  testutil::TempDir dir("synthetic");
  Rng rng(4);
  const auto mix = build_synthetic_dataset(volumes, tools, rng, dir.path());
  ASSERT_EQ(mix.entries.size(), 8u);
  int nodules = 0;
  for (const auto& e : mix.entries) {
    EXPECT_EQ(e.split, Split::train);
    if (e.label == Label::nodule) {
      ++nodules;
      EXPECT_EQ(e.id.rfind("lung-", 0), 0u) << e.id;
      EXPECT_EQ(load_volume(e.path).provenance(), Provenance::injected);
    }
  }
  EXPECT_EQ(nodules, 4);

  std::vector<Volume> solid(volumes.begin() + 1, volumes.begin() + 2);
  solid.push_back(volumes[3]);
  Rng again(4);
  EXPECT_THROW(build_synthetic_dataset(solid, tools, again, dir.path() / "solid"), PlacementError);
}

}  // namespace
