#pragma once

#include <filesystem>

#include "morphoprobe/json_io.hpp"
#include "morphoprobe/nn/tensor.hpp"

namespace morphoprobe::nn {

// A checkpoint is two files: "<stem>.json" holding the metadata and a tensor
// index (name, rows, cols, offset in floats), and "<stem>.bin" holding the
// column-major float32 values.
void save_checkpoint(const std::filesystem::path& stem, const ParameterRefs<float>& params,
                     const Json& metadata);

// Loads values into `params` by name; every parameter must be present with a
// matching shape. Returns the metadata.
Json load_checkpoint(const std::filesystem::path& stem, const ParameterRefs<float>& params);

Json read_checkpoint_metadata(const std::filesystem::path& stem);

}  // namespace morphoprobe::nn
