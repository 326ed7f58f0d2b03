#pragma once

#include "sslvqa/trainer.hpp"

#include <filesystem>

namespace sslvqa {

/// Binary checkpoint: "SVQK", u32 version, the full TrainState and a trailing
/// FNV-1a 64 checksum over everything before it.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
/// Throws FormatError on a bad magic, version mismatch, truncation or checksum failure.
TrainState load_checkpoint(const std::filesystem::path& path);

std::string serialize_state(const TrainState& state);
TrainState deserialize_state(const std::string& bytes);

} // namespace sslvqa
