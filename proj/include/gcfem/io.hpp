#pragma once

#include <filesystem>
#include <string>

namespace gcfem {

/// Writes `content` to a sibling temp file and renames it over `path`.
/// Throws IoError on failure.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace gcfem
