#pragma once

#include <cstdint>
#include <filesystem>
#include "json.hpp"
#include <string>
#include <vector>

namespace hit::io {

inline constexpr std::uint32_t kParamFileVersion = 1;

/// Versioned parameter file: 8-byte magic "HITPARAM", uint32 version, uint32
/// kind length + kind, uint64 metadata length + JSON metadata, uint64 count,
/// then little-endian float64 values. All integers little-endian.
struct ParamFile {
  std::string kind;
  nlohmann::json metadata;
  std::vector<double> values;
};

void write_param_file(const std::filesystem::path& path, const ParamFile& file);
ParamFile read_param_file(const std::filesystem::path& path);

}  // namespace hit::io
