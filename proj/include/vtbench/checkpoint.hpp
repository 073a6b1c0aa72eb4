#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vtbench/tensor.hpp"

namespace vtb {

using NamedArrays = std::vector<std::pair<std::string, dc::Tensor<float>>>;

// Binary file of concatenated little-endian float32 arrays plus a text
// manifest `<path>.manifest` with one line per array:
//   name=<name> offset=<float index> shape=<d0>x<d1>x...
// Round-trips bit-exactly.
void save_arrays(const std::string& path, const NamedArrays& arrays);
NamedArrays load_arrays(const std::string& path);

// Lookup helper; throws if `name` is missing.
const dc::Tensor<float>& find_array(const NamedArrays& arrays,
                                    const std::string& name);

}  // namespace vtb
