#pragma once

#include <string>
#include <vector>

#include "pargraph/nn.hpp"
#include "pargraph/tensor.hpp"

namespace pargraph {

inline constexpr const char* kWeightsVersion = "pargraph-weights-v1";

// File layout: u64 little-endian manifest length, manifest JSON
// ({"version", "tensors":[{"name","rows","cols"}...]}), then the tensor
// values as little-endian 64-bit reals in manifest order.
void save_weights(const std::string& path, const std::vector<NamedTensor>& tensors);

struct LoadedTensor {
    std::string name;
    Tensor2 tensor;
};
std::vector<LoadedTensor> load_weights(const std::string& path);

// Load into existing tensors; every name must be present with matching shape.
void load_weights_into(const std::string& path, const std::vector<NamedTensor>& tensors);

}  // namespace pargraph
