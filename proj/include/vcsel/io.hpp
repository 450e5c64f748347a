#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "vcsel/params.hpp"

namespace vcsel {

/// Version string baked in at configure time (git describe when available).
const char* version();

/// FNV-1a over the bit patterns of every parameter field.
std::uint64_t params_hash(const LaserParams& params);

/// 16 lowercase hex digits.
std::string hex64(std::uint64_t value);

/// Writes to a temporary sibling and renames it over `path`. Throws IOError.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Whole file as a string. Throws IOError.
std::string read_file(const std::filesystem::path& path);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

}  // namespace vcsel
