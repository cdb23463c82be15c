#pragma once

#include <filesystem>

#include "tal/params.hpp"

namespace tal {

// Checkpoint layout: magic "TALF1", then per named tensor:
//   name length (u32 LE), UTF-8 name, rank (u32 LE), extents (u32 LE each),
//   payload as 64-bit LE floats. Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store);

// Overwrites values of already-registered parameters; unknown names or shape
// mismatches raise IoError. Writes are atomic (temp file + rename).
void load_checkpoint(const std::filesystem::path& path, ParamStore& store);

}  // namespace tal
