#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dynaseg::io {

struct NamedTensor {
    std::vector<uint64_t> dims;
    std::vector<double> data;  // row-major in dims order

    uint64_t element_count() const;
};

// Name -> tensor blob; ordered so round-trips are byte-stable.
using TensorFile = std::map<std::string, NamedTensor>;

// Little-endian container: "DSWT" magic, u32 version, u32 tensor count, then
// per tensor: u32 name length, name bytes, u32 ndim, u64 dims, f64 payload.
// load throws WeightsUnavailable on I/O failure or a malformed file.
TensorFile load_tensor_file(const std::string& path);
void save_tensor_file(const std::string& path, const TensorFile& tensors);

}  // namespace dynaseg::io
