#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "zsd/heads.hpp"

namespace zsd {

// 64-bit FNV-1a; used to checksum checkpoint payloads and, in tests, to
// fingerprint files.
std::uint64_t fnv1a64(std::string_view data);
std::string fnv1a64_hex(std::string_view data);

// Versioned JSON checkpoint carrying dimensions, background mode (with b
// when learned), all projection matrices, and a payload checksum verified
// on load (mismatch, unknown version, or shape inconsistency -> DataError).
void save_checkpoint(const std::string& path, const HeadParams& params);
HeadParams load_checkpoint(const std::string& path);

}  // namespace zsd
