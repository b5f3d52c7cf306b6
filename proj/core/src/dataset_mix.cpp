#include "ctsgan/dataset_mix.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "ctsgan/error.hpp"
#include "ctsgan/phantom.hpp"

namespace ctsgan {
namespace {

using nlohmann::json;

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<E, std::string_view>, N>& table, const char* what) {
  for (const auto& [e, name] : table) {
    if (name == s) return e;
  }
  throw FormatError("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

constexpr std::array<std::pair<Label, std::string_view>, 2> kLabels{{{Label::clean, "clean"}, {Label::nodule, "nodule"}}};
constexpr std::array<std::pair<Pathway, std::string_view>, 3> kPathways{
    {{Pathway::untouched, "untouched"}, {Pathway::erased, "erased"}, {Pathway::injected, "injected"}}};
constexpr std::array<std::pair<Domain, std::string_view>, 3> kDomains{
    {{Domain::a, "a"}, {Domain::b, "b"}, {Domain::synthetic, "synthetic"}}};
constexpr std::array<std::pair<Split, std::string_view>, 3> kSplits{
    {{Split::train, "train"}, {Split::val, "val"}, {Split::test, "test"}}};

template <typename E, std::size_t N>
std::string_view name_of(E e, const std::array<std::pair<E, std::string_view>, N>& table) {
  for (const auto& [k, name] : table) {
    if (k == e) return name;
  }
  return "unknown";
}

}  // namespace

std::string_view to_string(Label v) { return name_of(v, kLabels); }
std::string_view to_string(Pathway v) { return name_of(v, kPathways); }
std::string_view to_string(Domain v) { return name_of(v, kDomains); }
std::string_view to_string(Split v) { return name_of(v, kSplits); }
Label label_from_string(std::string_view s) { return parse_enum(s, kLabels, "label"); }
Pathway pathway_from_string(std::string_view s) { return parse_enum(s, kPathways, "pathway"); }
Domain domain_from_string(std::string_view s) { return parse_enum(s, kDomains, "domain"); }
Split split_from_string(std::string_view s) { return parse_enum(s, kSplits, "split"); }

void to_json(json& j, const MixEntry& e) {
  j = {{"id", e.id},
       {"path", e.path},
       {"label", to_string(e.label)},
       {"pathway", to_string(e.pathway)},
       {"domain", to_string(e.domain)},
       {"split", to_string(e.split)}};
}

void from_json(const json& j, MixEntry& e) {
  e.id = j.at("id").get<std::string>();
  e.path = j.value("path", std::string{});
  e.label = label_from_string(j.at("label").get<std::string>());
  e.pathway = pathway_from_string(j.at("pathway").get<std::string>());
  e.domain = domain_from_string(j.at("domain").get<std::string>());
  e.split = split_from_string(j.at("split").get<std::string>());
}

std::vector<MixEntry> DatasetMix::split(Split s) const {
  std::vector<MixEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out), [s](const MixEntry& e) { return e.split == s; });
  return out;
}

void DatasetMix::validate() const {
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.id).second) throw FormatError("volume id '" + e.id + "' appears twice in the dataset mix");
  }
}

void to_json(json& j, const DatasetMix& m) { j = {{"format_version", 1}, {"entries", m.entries}}; }

void from_json(const json& j, DatasetMix& m) {
  m.entries = j.at("entries").get<std::vector<MixEntry>>();
  m.validate();
}

void save_dataset_mix(const DatasetMix& mix, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw FormatError("cannot write " + file.string());
  const auto base = std::filesystem::absolute(file).parent_path();
  auto relative = mix;
  for (auto& e : relative.entries) {
    if (!e.path.empty()) e.path = std::filesystem::absolute(e.path).lexically_relative(base).generic_string();
  }
  out << json(relative).dump(2) << '\n';
}

DatasetMix load_dataset_mix(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("missing dataset manifest " + file.string());
  try {
    auto mix = json::parse(in).get<DatasetMix>();
    const auto base = std::filesystem::absolute(file).parent_path();
    for (auto& e : mix.entries) {
      if (!e.path.empty() && std::filesystem::path(e.path).is_relative()) e.path = (base / e.path).string();
    }
    return mix;
  } catch (const json::exception& e) {
    throw FormatError("malformed dataset manifest " + file.string() + ": " + e.what());
  }
}

SplitSizes split_sizes(std::int64_t total, const SplitRatios& ratios) {
  const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
  for (double x : r) {
    if (x < 0.0) throw ConfigError("split ratios must be non-negative");
  }
  const double sum = r[0] + r[1] + r[2];
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  if (total < 0) throw ArgumentError("total must be non-negative");

  std::array<std::int64_t, 3> n{};
  std::array<double, 3> frac{};
  std::int64_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double exact = static_cast<double>(total) * r[k];
    n[k] = static_cast<std::int64_t>(std::floor(exact + 1e-9));
    frac[k] = exact - static_cast<double>(n[k]);
    assigned += n[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++n[order[k % 3]];
  return {n[0], n[1], n[2]};
}

DatasetMix plan_unbiased_dataset(std::span<const SourceEntry> sources, Rng& rng, const SplitRatios& ratios) {
  std::map<Domain, std::vector<std::string>> by_domain;
  std::set<std::string> ids;
  for (const auto& s : sources) {
    if (s.domain == Domain::synthetic) throw ArgumentError("synthetic volumes do not belong in the unbiased mix");
    if (!ids.insert(s.id).second) throw ArgumentError("duplicate source id '" + s.id + "'");
    by_domain[s.domain].push_back(s.id);
  }
  if (by_domain[Domain::a].size() < 4 || by_domain[Domain::b].size() < 4) {
    throw ConfigError("corpus too small for stratification: each domain needs at least 4 volumes");
  }

  // Half of each domain crosses over to the other label.
  std::map<std::pair<Domain, Label>, std::vector<MixEntry>> strata;
  for (auto& [domain, list] : by_domain) {
    std::shuffle(list.begin(), list.end(), rng.engine());
    const auto half = list.size() / 2;
    for (std::size_t i = 0; i < list.size(); ++i) {
      MixEntry e;
      e.id = list[i];
      e.domain = domain;
      const bool flipped = i < half;
      if (domain == Domain::a) {
        e.label = flipped ? Label::clean : Label::nodule;
        e.pathway = flipped ? Pathway::erased : Pathway::untouched;
      } else {
        e.label = flipped ? Label::nodule : Label::clean;
        e.pathway = flipped ? Pathway::injected : Pathway::untouched;
      }
      strata[{domain, e.label}].push_back(e);
    }
  }

  const auto sizes = split_sizes(static_cast<std::int64_t>(sources.size()), ratios);
  std::map<std::pair<Domain, Label>, std::size_t> taken;
  DatasetMix mix;
  const auto fill = [&](Split split, std::int64_t count) {
    for (Label label : {Label::nodule, Label::clean}) {
      auto want = count / 2 + (label == Label::nodule ? count % 2 : 0);
      const auto left = [&](Domain d) {
        return static_cast<std::int64_t>(strata[{d, label}].size() - taken[{d, label}]);
      };
      // Even split across domains; the odd one goes where more is left.
      std::int64_t from_a = want / 2;
      std::int64_t from_b = want / 2;
      if (want % 2 != 0) (left(Domain::a) >= left(Domain::b) ? from_a : from_b) += 1;
      for (auto [domain, k] : {std::pair{Domain::a, from_a}, std::pair{Domain::b, from_b}}) {
        if (left(domain) < k) {
          throw ConfigError("corpus too small for stratification: stratum (" + std::string(to_string(domain)) + ", " +
                            std::string(to_string(label)) + ") cannot fill the " + std::string(to_string(split)) +
                            " split");
        }
        auto& pos = taken[{domain, label}];
        for (std::int64_t i = 0; i < k; ++i, ++pos) {
          auto e = strata[{domain, label}][pos];
          e.split = split;
          mix.entries.push_back(e);
        }
      }
    }
  };
  fill(Split::test, sizes.test);
  fill(Split::val, sizes.val);
  for (auto& [key, list] : strata) {
    for (std::size_t i = taken[key]; i < list.size(); ++i) {
      auto e = list[i];
      e.split = Split::train;
      mix.entries.push_back(e);
    }
  }
  std::stable_sort(mix.entries.begin(), mix.entries.end(),
                   [](const MixEntry& x, const MixEntry& y) { return x.split < y.split; });
  return mix;
}

double label_domain_mutual_information(std::span<const MixEntry> entries) {
  if (entries.empty()) return 0.0;
  std::map<std::pair<Domain, Label>, double> joint;
  std::map<Domain, double> pd;
  std::map<Label, double> pl;
  const double n = static_cast<double>(entries.size());
  for (const auto& e : entries) {
    joint[{e.domain, e.label}] += 1.0 / n;
    pd[e.domain] += 1.0 / n;
    pl[e.label] += 1.0 / n;
  }
  double mi = 0.0;
  for (const auto& [key, p] : joint) {
    if (p > 0.0) mi += p * std::log2(p / (pd[key.first] * pl[key.second]));
  }
  return std::max(mi, 0.0);
}

DatasetMix build_unbiased_dataset(std::span<const SourceVolume> sources, NoduleTools& tools, Rng& rng,
                                  const std::filesystem::path& out_dir, const SplitRatios& ratios) {
  if (tools.injector == nullptr || tools.eraser == nullptr) throw ArgumentError("dataset mix needs injector and eraser");
  std::vector<SourceEntry> plan_in;
  std::map<std::string, const SourceVolume*> lookup;
  for (const auto& s : sources) {
    plan_in.push_back({s.volume.id(), s.domain});
    lookup[s.volume.id()] = &s;
  }
  auto mix = plan_unbiased_dataset(plan_in, rng, ratios);
  const auto E = tools.injector->spec().voi_edge;
  for (auto& e : mix.entries) {
    const auto& src = *lookup.at(e.id);
    auto edit_rng = rng.fork();
    Volume out = src.volume;
    if (e.pathway == Pathway::erased) {
      out = erase_nodules(*tools.eraser, src.volume, src.nodules, src.lung_mask);
    } else if (e.pathway == Pathway::injected) {
      const auto plan =
          sample_nodule_plan(edit_rng, tools.counts, tools.radii, src.lung_mask, src.volume.shape(), E, 100,
                             PlacementPolicy::at_least_one);
      out = inject_nodules(*tools.injector, src.volume, plan, src.lung_mask);
    }
    const auto base = out_dir / e.id;
    save_volume(out.with_id(e.id), base);
    e.path = base.string();
  }
  return mix;
}

DatasetMix build_synthetic_dataset(std::span<const Volume> volumes, NoduleTools& tools, Rng& rng,
                                   const std::filesystem::path& out_dir) {
  if (tools.injector == nullptr) throw ArgumentError("synthetic dataset needs an injector");
  std::vector<std::size_t> order(volumes.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto E = tools.injector->spec().voi_edge;
  DatasetMix mix;
  const auto quota = order.size() / 2;
  std::size_t injected = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& v = volumes[order[i]];
    auto edit_rng = rng.fork();
    MixEntry e;
    e.id = v.id().empty() ? "synthetic-" + std::to_string(order[i]) : v.id();
    e.domain = Domain::synthetic;
    e.split = Split::train;
    Volume out = v;
    if (injected < quota) {
      // Volumes without room for a nodule stay clean; the next one takes the slot.
      const auto mask = estimate_lung_mask(v);
      try {
        const auto plan = sample_nodule_plan(edit_rng, tools.counts, tools.radii, mask, v.shape(), E, 100,
                                             PlacementPolicy::at_least_one);
        out = inject_nodules(*tools.injector, v, plan, mask);
        e.label = Label::nodule;
        e.pathway = Pathway::injected;
        ++injected;
      } catch (const PlacementError&) {
      }
    }
    const auto base = out_dir / e.id;
    save_volume(out.with_id(e.id), base);
    e.path = base.string();
    mix.entries.push_back(e);
  }
  if (injected < quota) {
    throw PlacementError("only " + std::to_string(injected) + " of " + std::to_string(quota) +
                         " synthetic volumes have room for a nodule");
  }
  mix.validate();
  return mix;
}

}  // namespace ctsgan
