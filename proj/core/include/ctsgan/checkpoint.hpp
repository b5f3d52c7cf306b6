#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <torch/torch.h>

#include "ctsgan/sgan.hpp"

namespace ctsgan {

inline constexpr int kCheckpointFormatVersion = 1;

// Writes `<dir>/<name>.bin` (every parameter and buffer as raw f32le, in
// registration order) and `<dir>/<name>.json` (name, shape, byte offset of
// each tensor).
void save_module_weights(const torch::nn::Module& module, const std::filesystem::path& dir,
                         const std::string& name);
// Loads into an already-constructed module of identical structure; throws
// FormatError/CorruptFileError on any mismatch.
void load_module_weights(torch::nn::Module& module, const std::filesystem::path& dir,
                         const std::string& name);

// Checkpoint directory: config.json, one weight blob + manifest per
// sub-network, and the optimizer states.
void save_checkpoint(ModelState& model, const std::filesystem::path& dir);
std::unique_ptr<ModelState> load_checkpoint(const std::filesystem::path& dir);

}  // namespace ctsgan
