#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace cmada {

enum class Phase { translation, supervised, adaptation };
std::string to_string(Phase p);
Phase phase_from_string(const std::string& s);

// Named-blob container. On disk (little-endian):
//   "CMADACK1" | u32 header length | JSON header | u32 blob count |
//   per blob: u16 name length, name, u8 dtype, u8 ndim, i64 dims[ndim], raw data
// The header carries phase, step, seed, config hash and free-form metadata
// (architecture configs, optimizer hyper-parameters).
struct Checkpoint {
  Phase phase = Phase::supervised;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> blobs;

  const torch::Tensor& blob(const std::string& name) const;
  bool has_blob(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  /// Loads and checks the config hash; a mismatch is a ConfigError unless
  /// `allow_hash_mismatch` is set. An empty `expected_hash` skips the check.
  static Checkpoint load(const std::filesystem::path& path, const std::string& expected_hash = {},
                         bool allow_hash_mismatch = false);
};

/// Stores parameters and buffers under "<prefix>/<name>" (cloned).
void capture_module(Checkpoint& ck, const std::string& prefix, const torch::nn::Module& m);
void restore_module(const Checkpoint& ck, const std::string& prefix, torch::nn::Module& m);

/// Stores per-parameter Adam moments and step counts keyed by the module's
/// parameter names; `module` must be the one whose parameters `opt` owns.
void capture_adam(Checkpoint& ck, const std::string& prefix, const torch::optim::Adam& opt,
                  const torch::nn::Module& module);
void restore_adam(const Checkpoint& ck, const std::string& prefix, torch::optim::Adam& opt,
                  const torch::nn::Module& module);

}  // namespace cmada
