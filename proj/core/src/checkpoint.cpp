#include "ctsgan/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctsgan/error.hpp"

namespace ctsgan {
namespace {

using nlohmann::json;

std::vector<std::pair<std::string, torch::Tensor>> named_tensors(const torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : module.named_parameters()) out.emplace_back(item.key(), item.value());
  for (const auto& item : module.named_buffers()) out.emplace_back(item.key(), item.value());
  return out;
}

// Adam moments keyed by parameter position. torch::save keys them by tensor
// address, which changes from run to run.
void save_adam(torch::optim::Adam& opt, const std::filesystem::path& file) {
  torch::serialize::OutputArchive archive;
  const auto& params = opt.param_groups().at(0).params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto it = opt.state().find(params[i].unsafeGetTensorImpl());
    if (it == opt.state().end()) continue;
    const auto& st = static_cast<const torch::optim::AdamParamState&>(*it->second);
    const auto key = "p" + std::to_string(i);
    archive.write(key + ".step", torch::tensor(st.step(), torch::kInt64));
    archive.write(key + ".exp_avg", st.exp_avg());
    archive.write(key + ".exp_avg_sq", st.exp_avg_sq());
  }
  archive.save_to(file.string());
}

void load_adam(torch::optim::Adam& opt, const std::filesystem::path& file) {
  torch::serialize::InputArchive archive;
  archive.load_from(file.string());
  const auto& params = opt.param_groups().at(0).params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto key = "p" + std::to_string(i);
    torch::Tensor step, avg, avg_sq;
    if (!archive.try_read(key + ".step", step)) continue;
    archive.read(key + ".exp_avg", avg);
    archive.read(key + ".exp_avg_sq", avg_sq);
    auto st = std::make_unique<torch::optim::AdamParamState>();
    st->step(step.item<std::int64_t>());
    st->exp_avg(avg);
    st->exp_avg_sq(avg_sq);
    opt.state()[params[i].unsafeGetTensorImpl()] = std::move(st);
  }
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed " + path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

const char* kNetworks[] = {"generator", "sequencer", "slice_disc", "slab_disc"};

}  // namespace

void save_module_weights(const torch::nn::Module& module, const std::filesystem::path& dir,
                         const std::string& name) {
  std::filesystem::create_directories(dir);
  json manifest = {{"format_version", kCheckpointFormatVersion}, {"dtype", "f32le"}, {"tensors", json::array()}};
  std::ofstream blob(dir / (name + ".bin"), std::ios::binary);
  if (!blob) throw FormatError("cannot write " + (dir / (name + ".bin")).string());
  std::int64_t offset = 0;
  for (const auto& [key, tensor] : named_tensors(module)) {
    const auto t = tensor.detach().to(torch::kFloat32).contiguous();
    blob.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
    manifest["tensors"].push_back({{"name", key}, {"shape", t.sizes().vec()}, {"offset", offset}});
    offset += static_cast<std::int64_t>(t.nbytes());
  }
  manifest["bytes"] = offset;
  write_json(dir / (name + ".json"), manifest);
}

void load_module_weights(torch::nn::Module& module, const std::filesystem::path& dir,
                         const std::string& name) {
  const auto manifest = read_json(dir / (name + ".json"));
  if (manifest.value("format_version", 0) != kCheckpointFormatVersion) {
    throw FormatError("unsupported weight format version in " + name);
  }
  std::ifstream blob(dir / (name + ".bin"), std::ios::binary);
  if (!blob) throw FormatError("missing " + (dir / (name + ".bin")).string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
  if (static_cast<std::int64_t>(bytes.size()) != manifest.value("bytes", std::int64_t{-1})) {
    throw CorruptFileError("weight blob " + name + " has unexpected length");
  }
  auto tensors = named_tensors(module);
  const auto& entries = manifest.at("tensors");
  if (entries.size() != tensors.size()) throw CorruptFileError("tensor count mismatch in " + name);
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& [key, tensor] = tensors[i];
    const auto& e = entries[i];
    if (e.at("name").get<std::string>() != key || e.at("shape").get<std::vector<std::int64_t>>() != tensor.sizes().vec()) {
      throw CorruptFileError("tensor " + key + " does not match the manifest of " + name);
    }
    const auto offset = e.at("offset").get<std::int64_t>();
    auto staged = torch::empty(tensor.sizes(), torch::kFloat32);
    if (offset < 0 || offset + static_cast<std::int64_t>(staged.nbytes()) > static_cast<std::int64_t>(bytes.size())) {
      throw CorruptFileError("tensor " + key + " lies outside the blob");
    }
    std::memcpy(staged.data_ptr(), bytes.data() + offset, staged.nbytes());
    tensor.copy_(staged.to(tensor.dtype()));
  }
}

void save_checkpoint(ModelState& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json cfg = model.config();
  write_json(dir / "config.json",
             {{"format_version", kCheckpointFormatVersion}, {"step", model.step}, {"config", cfg}});
  save_module_weights(*model.generator, dir, "generator");
  save_module_weights(*model.sequencer, dir, "sequencer");
  save_module_weights(*model.slice_disc, dir, "slice_disc");
  save_module_weights(*model.slab_disc, dir, "slab_disc");
  save_adam(model.generator_optimizer(), dir / "generator.adam.pt");
  save_adam(model.sequencer_optimizer(), dir / "sequencer.adam.pt");
  save_adam(model.slice_disc_optimizer(), dir / "slice_disc.adam.pt");
  save_adam(model.slab_disc_optimizer(), dir / "slab_disc.adam.pt");
}

std::unique_ptr<ModelState> load_checkpoint(const std::filesystem::path& dir) {
  const auto meta = read_json(dir / "config.json");
  if (meta.value("format_version", 0) != kCheckpointFormatVersion) {
    throw FormatError("unsupported checkpoint format_version in " + dir.string());
  }
  SganConfig cfg;
  try {
    cfg = meta.at("config").get<SganConfig>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint config: ") + e.what());
  }
  auto model = std::make_unique<ModelState>(cfg);
  model->step = meta.value("step", std::int64_t{0});
  load_module_weights(*model->generator, dir, kNetworks[0]);
  load_module_weights(*model->sequencer, dir, kNetworks[1]);
  load_module_weights(*model->slice_disc, dir, kNetworks[2]);
  load_module_weights(*model->slab_disc, dir, kNetworks[3]);
  auto load_opt = [&](torch::optim::Adam& opt, const char* net) {
    const auto path = dir / (std::string(net) + ".adam.pt");
    if (std::filesystem::exists(path)) load_adam(opt, path);
  };
  load_opt(model->generator_optimizer(), kNetworks[0]);
  load_opt(model->sequencer_optimizer(), kNetworks[1]);
  load_opt(model->slice_disc_optimizer(), kNetworks[2]);
  load_opt(model->slab_disc_optimizer(), kNetworks[3]);
  return model;
}

}  // namespace ctsgan
