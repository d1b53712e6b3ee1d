#include "cga/volume.hpp"

#include <cstring>
#include <fstream>

#include "cga/error.hpp"

namespace cga {

int label_to_channel(uint8_t label) {
    switch (label) {
    case 0: return 0;
    case 1: return 1;
    case 2: return 2;
    case 4: return 3;
    default:
        throw DataError("unknown label value " + std::to_string(int(label)) +
                        " (alphabet is {0,1,2,4})");
    }
}

uint8_t channel_to_label(int channel) {
    if (channel < 0 || channel >= kNumClasses)
        throw DataError("channel " + std::to_string(channel) + " out of range");
    return kLabelAlphabet[size_t(channel)];
}

void LabelVolume::validate_alphabet() const {
    for (int64_t z = 0; z < d; ++z)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const uint8_t v = at(z, y, x);
                if (v != 0 && v != 1 && v != 2 && v != 4)
                    throw DataError("unknown label value " + std::to_string(int(v)) + " at voxel (" +
                                    std::to_string(z) + "," + std::to_string(y) + "," +
                                    std::to_string(x) + ")");
            }
}

template <typename T>
Tensor<T> onehot_encode(const LabelVolume& labels) {
    Tensor<T> out({kNumClasses, labels.d, labels.h, labels.w}, T(0));
    const int64_t sp = labels.numel();
    T* po = out.data();
    for (int64_t i = 0; i < sp; ++i) {
        const int c = label_to_channel(labels.data[size_t(i)]);
        po[c * sp + i] = T(1);
    }
    return out;
}

template <typename T>
LabelVolume labels_from_channel_argmax(const Tensor<T>& probs) {
    if (probs.rank() != 4 || probs.dim(0) != kNumClasses)
        throw ShapeError("labels_from_channel_argmax: expected (4,D,H,W), got " +
                         shape_str(probs.shape()));
    LabelVolume out(probs.dim(1), probs.dim(2), probs.dim(3));
    const int64_t sp = out.numel();
    const T* p = probs.data();
    for (int64_t i = 0; i < sp; ++i) {
        int best = 0;
        T bv = p[i];
        for (int c = 1; c < kNumClasses; ++c)
            if (p[c * sp + i] > bv) {
                bv = p[c * sp + i];
                best = c;
            }
        out.data[size_t(i)] = channel_to_label(best);
    }
    return out;
}

namespace {

constexpr char kMagic[4] = {'C', 'G', 'A', 'V'};
constexpr uint16_t kVersion = 1;

void put_u16(std::string& buf, uint16_t v) {
    buf.push_back(char(v & 0xff));
    buf.push_back(char(v >> 8));
}
void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

struct Reader {
    std::string bytes;
    size_t pos = 0;
    std::string path;

    void need(size_t n, const char* what) {
        if (pos + n > bytes.size())
            throw DataError(path + ": truncated " + what + " (expected " + std::to_string(pos + n) +
                            " bytes, file has " + std::to_string(bytes.size()) + ")");
    }
    uint16_t u16() {
        need(2, "header");
        uint16_t v = uint16_t(uint16_t(uint8_t(bytes[pos])) | (uint16_t(uint8_t(bytes[pos + 1])) << 8));
        pos += 2;
        return v;
    }
    uint8_t u8() {
        need(1, "header");
        return uint8_t(bytes[pos++]);
    }
    uint32_t u32() {
        need(4, "header");
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(bytes[pos + size_t(i)])) << (8 * i);
        pos += 4;
        return v;
    }
};

Reader open_reader(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(path + ": cannot open for reading");
    Reader r;
    r.path = path;
    r.bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    return r;
}

VolumeFileInfo read_header(Reader& r) {
    r.need(4, "magic");
    if (std::memcmp(r.bytes.data(), kMagic, 4) != 0)
        throw DataError(r.path + ": bad magic (not a CGAV volume)");
    r.pos = 4;
    VolumeFileInfo info;
    info.version = r.u16();
    if (info.version != kVersion)
        throw DataError(r.path + ": unknown format version " + std::to_string(info.version));
    info.dtype = r.u8();
    if (info.dtype > 1) throw DataError(r.path + ": unknown dtype tag " + std::to_string(info.dtype));
    (void)r.u8(); // reserved
    info.c = r.u32();
    info.d = r.u32();
    info.h = r.u32();
    info.w = r.u32();
    return info;
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError(path + ": cannot open for writing");
    f.write(bytes.data(), std::streamsize(bytes.size()));
    if (!f) throw DataError(path + ": write failed");
}

std::string header_bytes(uint8_t dtype, uint32_t c, uint32_t d, uint32_t h, uint32_t w) {
    std::string buf(kMagic, 4);
    put_u16(buf, kVersion);
    buf.push_back(char(dtype));
    buf.push_back(0);
    put_u32(buf, c);
    put_u32(buf, d);
    put_u32(buf, h);
    put_u32(buf, w);
    return buf;
}

} // namespace

void write_volume(const std::string& path, const Tensor<float>& v) {
    if (v.rank() != 4) throw ShapeError("write_volume: expected (C,D,H,W), got " + shape_str(v.shape()));
    std::string buf = header_bytes(0, uint32_t(v.dim(0)), uint32_t(v.dim(1)), uint32_t(v.dim(2)),
                                   uint32_t(v.dim(3)));
    const size_t payload = size_t(v.numel()) * 4;
    const size_t head = buf.size();
    buf.resize(head + payload);
    static_assert(sizeof(float) == 4);
    std::memcpy(buf.data() + head, v.data(), payload); // host is little endian
    write_file(path, buf);
}

void write_volume(const std::string& path, const LabelVolume& v) {
    std::string buf = header_bytes(1, 1, uint32_t(v.d), uint32_t(v.h), uint32_t(v.w));
    const size_t head = buf.size();
    buf.resize(head + v.data.size());
    std::memcpy(buf.data() + head, v.data.data(), v.data.size());
    write_file(path, buf);
}

Tensor<float> read_volume_f32(const std::string& path) {
    Reader r = open_reader(path);
    const VolumeFileInfo info = read_header(r);
    if (info.dtype != 0) throw DataError(path + ": expected f32 volume, file holds u8");
    const int64_t n = int64_t(info.c) * info.d * info.h * info.w;
    r.need(size_t(n) * 4, "payload");
    Tensor<float> out({int64_t(info.c), int64_t(info.d), int64_t(info.h), int64_t(info.w)});
    std::memcpy(out.data(), r.bytes.data() + r.pos, size_t(n) * 4);
    return out;
}

LabelVolume read_volume_labels(const std::string& path) {
    Reader r = open_reader(path);
    const VolumeFileInfo info = read_header(r);
    if (info.dtype != 1) throw DataError(path + ": expected u8 label volume, file holds f32");
    if (info.c != 1) throw DataError(path + ": label volumes must have C=1");
    const int64_t n = int64_t(info.d) * info.h * info.w;
    r.need(size_t(n), "payload");
    LabelVolume out(info.d, info.h, info.w);
    std::memcpy(out.data.data(), r.bytes.data() + r.pos, size_t(n));
    return out;
}

VolumeFileInfo peek_volume(const std::string& path) {
    Reader r = open_reader(path);
    return read_header(r);
}

template Tensor<float> onehot_encode<float>(const LabelVolume&);
template Tensor<double> onehot_encode<double>(const LabelVolume&);
template LabelVolume labels_from_channel_argmax<float>(const Tensor<float>&);
template LabelVolume labels_from_channel_argmax<double>(const Tensor<double>&);

} // namespace cga
