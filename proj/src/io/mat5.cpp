#include "dynaseg/io/mat5.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>

namespace dynaseg::io {

namespace {

enum MiType : uint32_t {
    miINT8 = 1,
    miUINT8 = 2,
    miINT16 = 3,
    miUINT16 = 4,
    miINT32 = 5,
    miUINT32 = 6,
    miSINGLE = 7,
    miDOUBLE = 9,
    miINT64 = 12,
    miUINT64 = 13,
    miMATRIX = 14,
    miCOMPRESSED = 15,
    miUTF8 = 16,
};

enum MxClass : uint32_t {
    mxCELL = 1,
    mxSTRUCT = 2,
    mxOBJECT = 3,
    mxCHAR = 4,
    mxSPARSE = 5,
    mxDOUBLE = 6,
    mxSINGLE = 7,
    mxINT8 = 8,
    mxUINT8 = 9,
    mxINT16 = 10,
    mxUINT16 = 11,
    mxINT32 = 12,
    mxUINT32 = 13,
    mxINT64 = 14,
    mxUINT64 = 15,
};

struct Cursor {
    const uint8_t* data;
    size_t size;
    size_t pos = 0;
    const std::string& path;

    void need(size_t n) const {
        if (pos + n > size) throw DecodeError("truncated MAT file: " + path);
    }
    template <typename T>
    T read() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
    void skip(size_t n) {
        need(n);
        pos += n;
    }
    void align8() {
        const size_t rem = pos % 8;
        if (rem) skip(std::min(8 - rem, size - pos));
    }
};

struct Element {
    uint32_t type = 0;
    const uint8_t* payload = nullptr;
    size_t bytes = 0;
};

// Reads one tagged element (handling the packed small-element form) and
// leaves the cursor aligned to the next 8-byte boundary.
Element read_element(Cursor& c) {
    Element e;
    const uint32_t first = c.read<uint32_t>();
    if ((first & 0xFFFF0000u) != 0) {
        e.type = first & 0xFFFFu;
        e.bytes = first >> 16;
        c.need(4);
        e.payload = c.data + c.pos;
        c.skip(4);
        return e;
    }
    e.type = first;
    e.bytes = c.read<uint32_t>();
    c.need(e.bytes);
    e.payload = c.data + c.pos;
    c.skip(e.bytes);
    c.align8();
    return e;
}

size_t type_size(uint32_t type) {
    switch (type) {
        case miINT8:
        case miUINT8:
        case miUTF8: return 1;
        case miINT16:
        case miUINT16: return 2;
        case miINT32:
        case miUINT32:
        case miSINGLE: return 4;
        case miDOUBLE:
        case miINT64:
        case miUINT64: return 8;
        default: return 0;
    }
}

std::vector<double> widen_numeric(const Element& e, const std::string& path) {
    const size_t es = type_size(e.type);
    if (es == 0) throw DecodeError("unsupported numeric element type in MAT file: " + path);
    const size_t n = e.bytes / es;
    std::vector<double> out(n);
    auto widen = [&](auto tag) {
        using T = decltype(tag);
        for (size_t i = 0; i < n; ++i) {
            T v;
            std::memcpy(&v, e.payload + i * sizeof(T), sizeof(T));
            out[i] = static_cast<double>(v);
        }
    };
    switch (e.type) {
        case miINT8: widen(int8_t{}); break;
        case miUINT8:
        case miUTF8: widen(uint8_t{}); break;
        case miINT16: widen(int16_t{}); break;
        case miUINT16: widen(uint16_t{}); break;
        case miINT32: widen(int32_t{}); break;
        case miUINT32: widen(uint32_t{}); break;
        case miSINGLE: widen(float{}); break;
        case miDOUBLE: widen(double{}); break;
        case miINT64: widen(int64_t{}); break;
        case miUINT64: widen(uint64_t{}); break;
        default: throw DecodeError("unsupported numeric element type in MAT file: " + path);
    }
    return out;
}

MatVar parse_matrix(Cursor& c);

MatVar parse_matrix_payload(const uint8_t* data, size_t size, const std::string& path) {
    Cursor c{data, size, 0, path};

    const Element flags = read_element(c);
    if (flags.type != miUINT32 || flags.bytes < 8)
        throw DecodeError("bad array flags in MAT file: " + path);
    uint32_t flag_word;
    std::memcpy(&flag_word, flags.payload, 4);
    const uint32_t cls = flag_word & 0xFFu;

    const Element dims_el = read_element(c);
    const std::vector<double> dims_d = widen_numeric(dims_el, path);
    std::vector<int> dims(dims_d.size());
    for (size_t i = 0; i < dims_d.size(); ++i) dims[i] = static_cast<int>(dims_d[i]);

    const Element name_el = read_element(c);
    std::string name(reinterpret_cast<const char*>(name_el.payload), name_el.bytes);

    MatVar var;
    var.name = std::move(name);
    var.dims = dims;
    size_t numel = 1;
    for (int d : dims) numel *= static_cast<size_t>(std::max(d, 0));

    switch (cls) {
        case mxCELL: {
            var.kind = MatVar::Kind::CELL;
            for (size_t i = 0; i < numel; ++i) var.cells.push_back(parse_matrix(c));
            break;
        }
        case mxSTRUCT: {
            var.kind = MatVar::Kind::STRUCT;
            const Element len_el = read_element(c);
            int32_t field_len;
            std::memcpy(&field_len, len_el.payload, 4);
            const Element names_el = read_element(c);
            if (field_len <= 0 || names_el.bytes % static_cast<size_t>(field_len) != 0)
                throw DecodeError("bad struct field table in MAT file: " + path);
            const size_t nfields = names_el.bytes / static_cast<size_t>(field_len);
            std::vector<std::string> fields(nfields);
            for (size_t f = 0; f < nfields; ++f) {
                const char* s = reinterpret_cast<const char*>(names_el.payload) + f * field_len;
                fields[f] = std::string(s, strnlen(s, field_len));
            }
            // Field matrices are element-major: all fields of element 1, then
            // element 2, matching the writers these files come from.
            for (size_t el = 0; el < numel; ++el) {
                std::map<std::string, MatVar> entry;
                for (size_t f = 0; f < nfields; ++f) entry[fields[f]] = parse_matrix(c);
                var.structs.push_back(std::move(entry));
            }
            break;
        }
        case mxCHAR: {
            var.kind = MatVar::Kind::CHAR;
            const Element text_el = read_element(c);
            const std::vector<double> vals = widen_numeric(text_el, path);
            for (double v : vals) var.text.push_back(static_cast<char>(v));
            break;
        }
        case mxDOUBLE:
        case mxSINGLE:
        case mxINT8:
        case mxUINT8:
        case mxINT16:
        case mxUINT16:
        case mxINT32:
        case mxUINT32:
        case mxINT64:
        case mxUINT64: {
            var.kind = MatVar::Kind::NUMERIC;
            if (dims.size() != 2)
                throw DecodeError("only 2-D numeric arrays are supported: " + path);
            const Element real = read_element(c);
            const std::vector<double> vals = widen_numeric(real, path);
            if (vals.size() != numel)
                throw DecodeError("numeric payload size mismatch in MAT file: " + path);
            var.numeric = Eigen::Map<const Eigen::MatrixXd>(vals.data(), dims[0], dims[1]);
            break;
        }
        default:
            var.kind = MatVar::Kind::OTHER;
            break;
    }
    return var;
}

MatVar parse_matrix(Cursor& c) {
    const Element e = read_element(c);
    if (e.type != miMATRIX) throw DecodeError("expected matrix element in MAT file: " + c.path);
    return parse_matrix_payload(e.payload, e.bytes, c.path);
}

std::vector<uint8_t> inflate_payload(const Element& e, const std::string& path) {
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw DecodeError("zlib init failed: " + path);
    std::vector<uint8_t> out;
    out.resize(std::max<size_t>(e.bytes * 4, 1 << 16));
    zs.next_in = const_cast<Bytef*>(e.payload);
    zs.avail_in = static_cast<uInt>(e.bytes);
    size_t written = 0;
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        if (written == out.size()) out.resize(out.size() * 2);
        zs.next_out = out.data() + written;
        zs.avail_out = static_cast<uInt>(out.size() - written);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw DecodeError("corrupt compressed element in MAT file: " + path);
        }
        written = out.size() - zs.avail_out;
    }
    inflateEnd(&zs);
    out.resize(written);
    return out;
}

}  // namespace

std::vector<MatVar> read_mat5(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DecodeError("cannot open MAT file: " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 128) throw DecodeError("not a MAT level-5 file: " + path);
    if (buf[126] != 'I' || buf[127] != 'M')
        throw DecodeError("unsupported MAT byte order (expected little-endian): " + path);

    Cursor c{buf.data(), buf.size(), 128, path};
    std::vector<MatVar> vars;
    while (c.pos + 8 <= c.size) {
        const Element e = read_element(c);
        if (e.type == miCOMPRESSED) {
            const std::vector<uint8_t> raw = inflate_payload(e, path);
            Cursor inner{raw.data(), raw.size(), 0, path};
            const Element m = read_element(inner);
            if (m.type != miMATRIX) continue;
            vars.push_back(parse_matrix_payload(m.payload, m.bytes, path));
        } else if (e.type == miMATRIX) {
            vars.push_back(parse_matrix_payload(e.payload, e.bytes, path));
        }
        // other top-level element types carry no variables
    }
    return vars;
}

std::vector<LabelMap> read_bsd500_ground_truth(const std::string& path) {
    const std::vector<MatVar> vars = read_mat5(path);
    const MatVar* gt = nullptr;
    for (const auto& v : vars)
        if (v.name == "groundTruth" && v.kind == MatVar::Kind::CELL) gt = &v;
    if (!gt) throw DecodeError("no groundTruth cell array in " + path);

    std::vector<LabelMap> variants;
    for (const MatVar& cell : gt->cells) {
        if (cell.kind != MatVar::Kind::STRUCT || cell.structs.empty())
            throw DecodeError("groundTruth cell is not a struct in " + path);
        const auto it = cell.structs[0].find("Segmentation");
        if (it == cell.structs[0].end() || it->second.kind != MatVar::Kind::NUMERIC)
            throw DecodeError("groundTruth entry lacks a Segmentation matrix in " + path);
        const Eigen::MatrixXd& seg = it->second.numeric;
        const int h = static_cast<int>(seg.rows()), w = static_cast<int>(seg.cols());

        std::map<int, int> remap;
        for (int j = 0; j < w; ++j)
            for (int i = 0; i < h; ++i) remap.emplace(static_cast<int>(seg(i, j)), 0);
        int next = 0;
        for (auto& [orig, dense] : remap) dense = next++;

        Eigen::VectorXi labels(static_cast<Eigen::Index>(h) * w);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                labels(flat_index(i, j, w)) = remap[static_cast<int>(seg(i, j))];
        variants.emplace_back(h, w, std::move(labels));
    }
    if (variants.empty()) throw DecodeError("groundTruth cell array is empty in " + path);
    return variants;
}

}  // namespace dynaseg::io
