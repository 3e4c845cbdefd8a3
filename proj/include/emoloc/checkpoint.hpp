#pragma once

#include <string>

#include "emoloc/dcin.hpp"

namespace emoloc::dcin {

// Single-file binary checkpoint: magic header, format version, config,
// then every parameter as (name, shape, row-major little-endian doubles).
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace emoloc::dcin
