#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace latent_audit {

/// Lower-case hex SHA-256 of a byte range.
std::string sha256_hex(std::span<const std::uint8_t> bytes);

std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace latent_audit
