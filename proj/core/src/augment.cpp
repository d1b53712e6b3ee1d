#include "cga/augment.hpp"

#include "cga/error.hpp"

namespace cga {

namespace {

struct CropBox {
    int64_t z0, y0, x0, s;
};

Augmented apply_crop(const Tensor<float>& image, const LabelVolume& labels, const CropBox& box) {
    const int64_t c_ = image.dim(0), s = box.s;
    Tensor<float> img({c_, s, s, s});
    LabelVolume lab(s, s, s);
    const int64_t id = image.dim(1), ih = image.dim(2), iw = image.dim(3);
    const float* pi = image.data();
    float* po = img.data();
    for (int64_t c = 0; c < c_; ++c)
        for (int64_t z = 0; z < s; ++z)
            for (int64_t y = 0; y < s; ++y) {
                const float* row = pi + ((c * id + box.z0 + z) * ih + box.y0 + y) * iw + box.x0;
                float* orow = po + ((c * s + z) * s + y) * s;
                for (int64_t x = 0; x < s; ++x) orow[x] = row[x];
            }
    for (int64_t z = 0; z < s; ++z)
        for (int64_t y = 0; y < s; ++y)
            for (int64_t x = 0; x < s; ++x)
                lab.at(z, y, x) = labels.at(box.z0 + z, box.y0 + y, box.x0 + x);
    return {std::move(img), std::move(lab)};
}

void flip_axis(Tensor<float>& img, LabelVolume& lab, int axis) {
    const int64_t c_ = img.dim(0), d = img.dim(1), h = img.dim(2), w = img.dim(3);
    auto swap_img = [&](int64_t c, int64_t z0, int64_t y0, int64_t x0, int64_t z1, int64_t y1,
                        int64_t x1) {
        std::swap(img.at({c, z0, y0, x0}), img.at({c, z1, y1, x1}));
    };
    if (axis == 0) {
        for (int64_t c = 0; c < c_; ++c)
            for (int64_t z = 0; z < d / 2; ++z)
                for (int64_t y = 0; y < h; ++y)
                    for (int64_t x = 0; x < w; ++x) swap_img(c, z, y, x, d - 1 - z, y, x);
        for (int64_t z = 0; z < d / 2; ++z)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) std::swap(lab.at(z, y, x), lab.at(d - 1 - z, y, x));
    } else if (axis == 1) {
        for (int64_t c = 0; c < c_; ++c)
            for (int64_t z = 0; z < d; ++z)
                for (int64_t y = 0; y < h / 2; ++y)
                    for (int64_t x = 0; x < w; ++x) swap_img(c, z, y, x, z, h - 1 - y, x);
        for (int64_t z = 0; z < d; ++z)
            for (int64_t y = 0; y < h / 2; ++y)
                for (int64_t x = 0; x < w; ++x) std::swap(lab.at(z, y, x), lab.at(z, h - 1 - y, x));
    } else {
        for (int64_t c = 0; c < c_; ++c)
            for (int64_t z = 0; z < d; ++z)
                for (int64_t y = 0; y < h; ++y)
                    for (int64_t x = 0; x < w / 2; ++x) swap_img(c, z, y, x, z, y, w - 1 - x);
        for (int64_t z = 0; z < d; ++z)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w / 2; ++x) std::swap(lab.at(z, y, x), lab.at(z, y, w - 1 - x));
    }
}

void check_fits(const Tensor<float>& image, const LabelVolume& labels, int crop) {
    if (image.rank() != 4) throw ShapeError("augment: image must be (C,D,H,W)");
    if (image.dim(1) != labels.d || image.dim(2) != labels.h || image.dim(3) != labels.w)
        throw ShapeError("augment: image and label extents differ");
    if (crop > image.dim(1) || crop > image.dim(2) || crop > image.dim(3))
        throw DataError("augment: crop " + std::to_string(crop) + " exceeds volume " +
                        shape_str(image.shape()));
}

} // namespace

Augmented augment(const Tensor<float>& image, const LabelVolume& labels, const AugmentConfig& cfg,
                  Rng& rng) {
    check_fits(image, labels, cfg.crop);
    const int64_t s = cfg.crop;
    CropBox box;
    box.s = s;
    box.z0 = int64_t(rng.below(uint64_t(image.dim(1) - s + 1)));
    box.y0 = int64_t(rng.below(uint64_t(image.dim(2) - s + 1)));
    box.x0 = int64_t(rng.below(uint64_t(image.dim(3) - s + 1)));
    Augmented out = apply_crop(image, labels, box);

    for (int axis = 0; axis < 3; ++axis)
        if (rng.bernoulli(cfg.flip_prob)) flip_axis(out.image, out.labels, axis);

    const int64_t sp = s * s * s;
    for (int64_t c = 0; c < out.image.dim(0); ++c) {
        const float shift = float(rng.uniform(-cfg.shift_range, cfg.shift_range));
        const float scale = float(rng.uniform(cfg.scale_lo, cfg.scale_hi));
        float* pc = out.image.data() + c * sp;
        for (int64_t i = 0; i < sp; ++i) pc[i] = pc[i] * scale + shift;
    }
    return out;
}

Augmented center_crop(const Tensor<float>& image, const LabelVolume& labels, int crop) {
    check_fits(image, labels, crop);
    CropBox box;
    box.s = crop;
    box.z0 = (image.dim(1) - crop) / 2;
    box.y0 = (image.dim(2) - crop) / 2;
    box.x0 = (image.dim(3) - crop) / 2;
    return apply_crop(image, labels, box);
}

} // namespace cga
