#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace gpgan::io {

// Writes to "<path>.tmp" then renames over path.
void write_file_atomic(const std::string& path, std::string_view bytes);
std::string read_file(const std::string& path);

// FNV-1a, 64 bit. Stable across platforms; used for spec and content digests.
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text);
std::string hex64(std::uint64_t v);

std::string base64_encode(std::string_view bytes);

}  // namespace gpgan::io
