#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cga/tensor.hpp"

namespace cga {

// BraTS label alphabet: background 0, necrotic/non-enhancing 1, edema 2,
// enhancing 4. Channel order for one-hot encodings is (0,1,2,4) -> (0,1,2,3).
inline constexpr std::array<uint8_t, 4> kLabelAlphabet{0, 1, 2, 4};
inline constexpr int kNumClasses = 4;

int label_to_channel(uint8_t label);          // throws DataError on unknown labels
uint8_t channel_to_label(int channel);

// Integer-class 3D volume.
struct LabelVolume {
    int64_t d = 0, h = 0, w = 0;
    std::vector<uint8_t> data;

    LabelVolume() = default;
    LabelVolume(int64_t d_, int64_t h_, int64_t w_) : d(d_), h(h_), w(w_), data(size_t(d_ * h_ * w_), 0) {}

    int64_t numel() const { return d * h * w; }
    uint8_t& at(int64_t z, int64_t y, int64_t x) { return data[size_t((z * h + y) * w + x)]; }
    uint8_t at(int64_t z, int64_t y, int64_t x) const { return data[size_t((z * h + y) * w + x)]; }

    void validate_alphabet() const; // throws DataError naming the first bad voxel
};

// One-hot encode labels into (C_l, D, H, W).
template <typename T>
Tensor<T> onehot_encode(const LabelVolume& labels);

// Inverse: channel argmax mapped back through the alphabet.
template <typename T>
LabelVolume labels_from_channel_argmax(const Tensor<T>& probs); // probs (C_l,D,H,W)

// ---- CGAV volume file ----
// Byte-exact layout, little endian:
//   magic   "CGAV"      4 bytes
//   version u16         (currently 1)
//   dtype   u8          0 = f32, 1 = u8
//   reserved u8         0
//   dims    4 x u32     C, D, H, W
//   payload C*D*H*W elements, little endian
struct VolumeFileInfo {
    uint16_t version;
    uint8_t dtype; // 0=f32, 1=u8
    uint32_t c, d, h, w;
};

void write_volume(const std::string& path, const Tensor<float>& v);   // v is (C,D,H,W)
void write_volume(const std::string& path, const LabelVolume& v);     // stored as C=1 u8
Tensor<float> read_volume_f32(const std::string& path);
LabelVolume read_volume_labels(const std::string& path);
VolumeFileInfo peek_volume(const std::string& path);

} // namespace cga
