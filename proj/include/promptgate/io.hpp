#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace promptgate::io {

/// Whole-file read; throws Error(Io) when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes to "<path>.tmp.<pid>" and renames over path, so readers never see
/// a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace promptgate::io
