#include "dynaseg/io/weights_io.hpp"

#include <cstring>
#include <fstream>

#include "dynaseg/errors.hpp"

namespace dynaseg::io {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'W', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw WeightsUnavailable("truncated tensor file: " + path);
    return v;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

uint64_t NamedTensor::element_count() const {
    uint64_t n = 1;
    for (uint64_t d : dims) n *= d;
    return n;
}

TensorFile load_tensor_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WeightsUnavailable("cannot open tensor file: " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw WeightsUnavailable("not a tensor file (bad magic): " + path);
    const auto version = read_pod<uint32_t>(in, path);
    if (version != kVersion)
        throw WeightsUnavailable("unsupported tensor file version " + std::to_string(version) + ": " + path);

    const auto count = read_pod<uint32_t>(in, path);
    TensorFile out;
    for (uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<uint32_t>(in, path);
        if (name_len > 4096) throw WeightsUnavailable("implausible tensor name length: " + path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw WeightsUnavailable("truncated tensor file: " + path);

        NamedTensor t;
        const auto ndim = read_pod<uint32_t>(in, path);
        if (ndim > 8) throw WeightsUnavailable("implausible tensor rank: " + path);
        t.dims.resize(ndim);
        for (auto& d : t.dims) d = read_pod<uint64_t>(in, path);
        const uint64_t n = t.element_count();
        if (n > (1ull << 28)) throw WeightsUnavailable("implausible tensor size: " + path);
        t.data.resize(n);
        in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(n * sizeof(double)));
        if (!in) throw WeightsUnavailable("truncated tensor payload: " + path);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

void save_tensor_file(const std::string& path, const TensorFile& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw WeightsUnavailable("cannot write tensor file: " + path);
    out.write(kMagic, 4);
    write_pod(out, kVersion);
    write_pod(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        write_pod(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(out, static_cast<uint32_t>(t.dims.size()));
        for (uint64_t d : t.dims) write_pod(out, d);
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!out) throw WeightsUnavailable("failed writing tensor file: " + path);
}

}  // namespace dynaseg::io
