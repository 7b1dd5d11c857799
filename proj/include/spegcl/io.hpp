#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace spegcl {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double x);

/// Reads a file into memory; throws IngestError naming the path on failure.
std::string read_file(const std::filesystem::path& path);

/// Writes a whole file, creating parent directories.
void write_file(const std::filesystem::path& path, const std::string& contents);

/// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& data);

}  // namespace spegcl
