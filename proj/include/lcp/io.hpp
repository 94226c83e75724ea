#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace lcp {

std::string read_text_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
void write_text_file(const std::filesystem::path& path, const std::string& content);
/// FNV-1a of the file contents.
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

}  // namespace lcp
