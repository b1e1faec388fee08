#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rbc/network.hpp"

namespace rbc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: "RBCK", u32 version, u32 spec length, spec text, u64 parameter
/// count, parameters as little-endian f64, u32 CRC-32 of everything before it.
std::vector<std::uint8_t> encode_checkpoint(const NetworkModel& model);
NetworkModel decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const NetworkModel& model, const std::filesystem::path& path);

/// Throws FormatError on a corrupt or truncated file.
NetworkModel load_checkpoint(const std::filesystem::path& path);

/// As above, and throws SpecMismatchError naming the first field that
/// differs from `expected`.
NetworkModel load_checkpoint(const std::filesystem::path& path, const NetworkSpec& expected);

/// The key=value spec block stored in checkpoints.
std::string describe_spec(const NetworkSpec& spec);

}  // namespace rbc
