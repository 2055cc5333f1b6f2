#pragma once

#include "grasp/trainer.hpp"

#include <string>

namespace grasp {

/// Binary checkpoint: "GRSPCKPT", u32 version, u64 header length, JSON
/// header, then float64 little-endian parameter blocks (row-major) in header
/// order. Layout in docs/checkpoint_format.md.
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);  // kIo, kMalformed

}  // namespace grasp
