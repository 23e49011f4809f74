#pragma once

#include <filesystem>
#include <optional>

#include "churn/model.hpp"
#include "churn/train.hpp"

namespace churn {

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::optional<Split> split;
};

struct Checkpoint {
  ModelParams params;
  CheckpointMeta meta;
};

// JSON container: version, shape, seeds, split, every tensor, and the context
// vocabulary. Doubles are written in shortest round-trip form, so a reload is
// bit-identical. The file is replaced atomically.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string checkpoint_json(const ModelParams& params, const CheckpointMeta& meta);
Checkpoint parse_checkpoint(const std::string& text);

}  // namespace churn
