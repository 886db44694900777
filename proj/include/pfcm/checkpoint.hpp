#pragma once

#include <filesystem>

#include "pfcm/flat_weights.hpp"

namespace pfcm {

// Checkpoint file: one text header line
//   pfcm-checkpoint v1 total=<N> layout=<name>:<d0>x<d1>...:<offset>[,...]
// terminated by '\n', followed by N raw 64-bit floats, little endian.
void save_checkpoint(const FlatWeights& w, const std::filesystem::path& path);
FlatWeights load_checkpoint(const std::filesystem::path& path);

}  // namespace pfcm
