#include "cga/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "cga/error.hpp"

namespace cga {

namespace {

constexpr char kMagic[4] = {'C', 'G', 'A', 'C'};
constexpr uint16_t kVersion = 1;

void put_u16(std::string& b, uint16_t v) {
    b.push_back(char(v & 0xff));
    b.push_back(char(v >> 8));
}
void put_u32(std::string& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(char((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(char((v >> (8 * i)) & 0xff));
}

void put_entry(std::string& b, const std::string& name, const Tensor<float>& t) {
    put_u16(b, uint16_t(name.size()));
    b += name;
    b.push_back(0); // dtype f32
    b.push_back(char(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u32(b, uint32_t(t.dim(i)));
    const size_t off = b.size();
    b.resize(off + size_t(t.numel()) * 4);
    std::memcpy(b.data() + off, t.data(), size_t(t.numel()) * 4);
}

void put_scalar_f64(std::string& b, const std::string& name, double v) {
    put_u16(b, uint16_t(name.size()));
    b += name;
    b.push_back(1); // dtype f64
    b.push_back(1); // rank 1
    put_u32(b, 1);
    const size_t off = b.size();
    b.resize(off + 8);
    std::memcpy(b.data() + off, &v, 8);
}

struct Cursor {
    std::string bytes;
    size_t pos = 0;
    std::string path;
    void need(size_t n) {
        if (pos + n > bytes.size())
            throw DataError(path + ": truncated checkpoint (need " + std::to_string(pos + n) +
                            " bytes, file has " + std::to_string(bytes.size()) + ")");
    }
    uint16_t u16() {
        need(2);
        uint16_t v = uint16_t(uint16_t(uint8_t(bytes[pos])) | (uint16_t(uint8_t(bytes[pos + 1])) << 8));
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(bytes[pos + size_t(i)])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(bytes[pos + size_t(i)])) << (8 * i);
        pos += 8;
        return v;
    }
    uint8_t u8() {
        need(1);
        return uint8_t(bytes[pos++]);
    }
};

struct Entry {
    uint8_t dtype;
    Shape shape;
    size_t payload_off;
};

} // namespace

void save_checkpoint(const std::string& path, CgaUnet<float>& model, const Adam<float>* opt,
                     const CheckpointMeta& meta) {
    std::string b(kMagic, 4);
    put_u16(b, kVersion);
    put_u16(b, 0);
    put_u32(b, meta.epoch);
    put_u64(b, meta.seed);

    auto& params = model.parameters();
    auto buffers = model.buffers();
    const bool with_opt = opt && opt->step_count() > 0;
    uint32_t n = uint32_t(params.size() + buffers.size());
    if (with_opt) n += uint32_t(2 * params.size() + 1);
    put_u32(b, n);

    for (auto& p : params) put_entry(b, p.name(), p.value());
    for (auto& [name, t] : buffers) put_entry(b, name, *t);
    if (with_opt) {
        auto* mo = const_cast<Adam<float>*>(opt);
        for (size_t i = 0; i < params.size(); ++i) {
            put_entry(b, "adam.m." + params[i].name(), mo->m()[i]);
            put_entry(b, "adam.v." + params[i].name(), mo->v()[i]);
        }
        put_scalar_f64(b, "adam.t", double(opt->step_count()));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError(path + ": cannot open for writing");
    f.write(b.data(), std::streamsize(b.size()));
    if (!f) throw DataError(path + ": write failed");
}

CheckpointMeta load_checkpoint(const std::string& path, CgaUnet<float>& model, Adam<float>* opt) {
    Cursor c;
    c.path = path;
    {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw DataError(path + ": cannot open checkpoint");
        c.bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    }
    c.need(4);
    if (std::memcmp(c.bytes.data(), kMagic, 4) != 0)
        throw DataError(path + ": bad magic (not a CGAC checkpoint)");
    c.pos = 4;
    const uint16_t version = c.u16();
    if (version != kVersion)
        throw DataError(path + ": unknown checkpoint version " + std::to_string(version));
    (void)c.u16();
    CheckpointMeta meta;
    meta.epoch = c.u32();
    meta.seed = c.u64();
    const uint32_t n = c.u32();

    std::map<std::string, Entry> entries;
    for (uint32_t i = 0; i < n; ++i) {
        const uint16_t len = c.u16();
        c.need(len);
        std::string name(c.bytes.data() + c.pos, len);
        c.pos += len;
        Entry e;
        e.dtype = c.u8();
        const uint8_t rank = c.u8();
        for (int r = 0; r < rank; ++r) e.shape.push_back(int64_t(c.u32()));
        const size_t bytes = size_t(Tensor<float>::checked_numel(e.shape)) * (e.dtype == 0 ? 4 : 8);
        c.need(bytes);
        e.payload_off = c.pos;
        c.pos += bytes;
        entries[name] = e;
    }

    auto read_into = [&](const std::string& name, Tensor<float>& dst, bool required) -> bool {
        auto it = entries.find(name);
        if (it == entries.end()) {
            if (required) throw DataError(path + ": checkpoint is missing entry '" + name + "'");
            return false;
        }
        const Entry& e = it->second;
        if (e.dtype != 0) throw DataError(path + ": entry '" + name + "' is not f32");
        if (e.shape != dst.shape())
            throw DataError(path + ": entry '" + name + "' has shape " + shape_str(e.shape) +
                            ", model expects " + shape_str(dst.shape()));
        std::memcpy(dst.data(), c.bytes.data() + e.payload_off, size_t(dst.numel()) * 4);
        return true;
    };

    for (auto& p : model.parameters()) read_into(p.name(), p.value(), true);
    for (auto& [name, t] : model.buffers()) read_into(name, *t, true);

    if (opt && entries.count("adam.t")) {
        auto& params = model.parameters();
        opt->m().clear();
        opt->v().clear();
        for (auto& p : params) {
            Tensor<float> m(p.value().shape()), v(p.value().shape());
            read_into("adam.m." + p.name(), m, true);
            read_into("adam.v." + p.name(), v, true);
            opt->m().push_back(std::move(m));
            opt->v().push_back(std::move(v));
        }
        const Entry& e = entries.at("adam.t");
        double t = 0;
        std::memcpy(&t, c.bytes.data() + e.payload_off, 8);
        opt->set_step_count(int64_t(t));
    }
    return meta;
}

} // namespace cga
