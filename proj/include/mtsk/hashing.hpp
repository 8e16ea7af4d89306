#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace mtsk {

std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);

/// SHA-1 over "blob <size>\0<content>", the object id git assigns a file.
std::string git_blob_hash(std::span<const std::byte> bytes);

std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::string_view bytes);

}  // namespace mtsk
