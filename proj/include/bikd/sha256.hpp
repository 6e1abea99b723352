#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bikd {

// SHA-256 of a byte string, lowercase hex.
std::string sha256_hex(const std::string& bytes);

// SHA-256 of a file's contents.
std::string sha256_file(const std::string& path);

} // namespace bikd
