#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "paramisp/pipeline.hpp"

namespace paramisp {

inline constexpr uint32_t kCheckpointVersion = 1;

std::vector<uint8_t> serialize_checkpoint(const IspModel& model);
/// Rejects bad magic, other versions, truncation and, if given, the wrong direction.
IspModel deserialize_checkpoint(const std::vector<uint8_t>& bytes, std::optional<Direction> expected = std::nullopt);

void save_checkpoint(const IspModel& model, const std::string& path);
IspModel load_checkpoint(const std::string& path, std::optional<Direction> expected = std::nullopt);

/// Configuration blob embedded in a checkpoint.
std::string model_config_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace paramisp
