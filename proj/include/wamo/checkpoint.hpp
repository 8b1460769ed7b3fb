#pragma once

#include <string>

#include "wamo/encoder.hpp"

namespace wamo {

// wamo-ckpt/1: <base>.manifest.json (config + tensor directory) plus
// <base>.params.bin, little-endian float32 in manifest order.
void save_checkpoint(const Model& model, const std::string& base_path);
Model load_checkpoint(const std::string& base_path);

}  // namespace wamo
