#include "emoloc/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "emoloc/error.hpp"

namespace emoloc::dcin {

namespace {

constexpr char kMagic[8] = {'E', 'M', 'O', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(os, bits);
}

void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw ParseError("checkpoint: truncated file");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw ParseError("checkpoint: truncated file");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is) {
    uint64_t bits = get_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::string get_string(std::istream& is) {
    uint32_t n = get_u32(is);
    if (n > (1u << 20)) throw ParseError("checkpoint: implausible string length");
    std::string s(n, '\0');
    if (n && !is.read(s.data(), n)) throw ParseError("checkpoint: truncated string");
    return s;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 8);
    put_u32(os, kVersion);
    put_u32(os, static_cast<uint32_t>(model.config.dim));
    put_u32(os, static_cast<uint32_t>(model.config.classes));
    put_u32(os, static_cast<uint32_t>(model.config.layers));
    put_f64(os, model.config.margin);
    put_string(os, to_string(model.config.activation));
    put_u32(os, static_cast<uint32_t>(model.config.kernel_width));

    auto named = const_cast<Model&>(model).named_parameters();
    put_u32(os, static_cast<uint32_t>(named.size()));
    for (const auto& [name, tensor] : named) {
        put_string(os, name);
        put_u32(os, static_cast<uint32_t>(tensor->shape.size()));
        for (int d : tensor->shape) put_u32(os, static_cast<uint32_t>(d));
        for (double v : tensor->values) put_f64(os, v);
    }
    if (!os) throw IoError("short write to checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw ParseError("checkpoint: bad magic header in " + path);
    }
    const uint32_t version = get_u32(is);
    if (version != kVersion) {
        throw ParseError("checkpoint: unsupported format version " + std::to_string(version));
    }
    DcinConfig cfg;
    cfg.dim = static_cast<int>(get_u32(is));
    cfg.classes = static_cast<int>(get_u32(is));
    cfg.layers = static_cast<int>(get_u32(is));
    cfg.margin = get_f64(is);
    cfg.activation = activation_from_string(get_string(is));
    cfg.kernel_width = static_cast<int>(get_u32(is));
    cfg.validate();

    Model model = Model::init(cfg, 0);
    auto named = model.named_parameters();
    const uint32_t count = get_u32(is);
    if (count != named.size()) {
        throw ParseError("checkpoint: expected " + std::to_string(named.size()) +
                         " tensors, file has " + std::to_string(count));
    }
    for (auto& [name, tensor] : named) {
        const std::string stored = get_string(is);
        if (stored != name) {
            throw ParseError("checkpoint: expected tensor '" + name + "', found '" + stored + "'");
        }
        const uint32_t ndim = get_u32(is);
        std::vector<int> shape;
        for (uint32_t i = 0; i < ndim; ++i) shape.push_back(static_cast<int>(get_u32(is)));
        if (shape != tensor->shape) {
            throw ParseError("checkpoint: tensor '" + name + "' has unexpected shape");
        }
        for (double& v : tensor->values) v = get_f64(is);
    }
    return model;
}

}  // namespace emoloc::dcin
