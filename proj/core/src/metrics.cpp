#include "cga/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cga/error.hpp"

namespace cga {

const char* region_name(Region r) {
    switch (r) {
    case Region::ET: return "et";
    case Region::WT: return "wt";
    case Region::TC: return "tc";
    }
    return "?";
}

bool in_region(uint8_t label, Region r) {
    switch (r) {
    case Region::ET: return label == 4;
    case Region::WT: return label == 1 || label == 2 || label == 4;
    case Region::TC: return label == 1 || label == 4;
    }
    return false;
}

Mask3 region_mask(const LabelVolume& labels, Region r) {
    Mask3 m(labels.data.size());
    for (size_t i = 0; i < m.size(); ++i) m[i] = in_region(labels.data[i], r) ? 1 : 0;
    return m;
}

double mask_dice(const Mask3& p, const Mask3& g) {
    if (p.size() != g.size()) throw ShapeError("dice: mask sizes differ");
    int64_t inter = 0, np = 0, ng = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        inter += p[i] && g[i];
        np += p[i];
        ng += g[i];
    }
    if (np + ng == 0) return 1.0; // both empty
    return 2.0 * double(inter) / double(np + ng);
}

double region_dice(const LabelVolume& pred, const LabelVolume& gt, Region r) {
    if (pred.d != gt.d || pred.h != gt.h || pred.w != gt.w)
        throw ShapeError("region_dice: volume extents differ");
    return mask_dice(region_mask(pred, r), region_mask(gt, r));
}

namespace {

// 6-connectivity boundary voxels; out-of-volume neighbors count as outside.
std::vector<std::array<int64_t, 3>> surface_voxels(const Mask3& m, int64_t d, int64_t h,
                                                   int64_t w) {
    std::vector<std::array<int64_t, 3>> out;
    auto at = [&](int64_t z, int64_t y, int64_t x) -> bool {
        if (z < 0 || z >= d || y < 0 || y >= h || x < 0 || x >= w) return false;
        return m[size_t((z * h + y) * w + x)] != 0;
    };
    for (int64_t z = 0; z < d; ++z)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                if (!at(z, y, x)) continue;
                if (!at(z - 1, y, x) || !at(z + 1, y, x) || !at(z, y - 1, x) || !at(z, y + 1, x) ||
                    !at(z, y, x - 1) || !at(z, y, x + 1))
                    out.push_back({z, y, x});
            }
    return out;
}

double directed_percentile(const std::vector<std::array<int64_t, 3>>& from,
                           const std::vector<std::array<int64_t, 3>>& to, int percentile,
                           const std::array<double, 3>& sp) {
    std::vector<double> dists;
    dists.reserve(from.size());
    for (const auto& a : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : to) {
            const double dz = double(a[0] - b[0]) * sp[0];
            const double dy = double(a[1] - b[1]) * sp[1];
            const double dx = double(a[2] - b[2]) * sp[2];
            const double dd = dz * dz + dy * dy + dx * dx;
            if (dd < best) best = dd;
        }
        dists.push_back(std::sqrt(best));
    }
    std::sort(dists.begin(), dists.end());
    // nearest-rank percentile
    const size_t n = dists.size();
    size_t rank = size_t(std::ceil(double(percentile) / 100.0 * double(n)));
    if (rank == 0) rank = 1;
    if (rank > n) rank = n;
    return dists[rank - 1];
}

} // namespace

double mask_hausdorff(const Mask3& p, const Mask3& g, int64_t d, int64_t h, int64_t w,
                      int percentile, const std::array<double, 3>& spacing_mm) {
    if (percentile != 95 && percentile != 100)
        throw ConfigError("hausdorff: percentile must be 95 or 100");
    auto sp = surface_voxels(p, d, h, w);
    auto sg = surface_voxels(g, d, h, w);
    if (sp.empty() || sg.empty()) return std::numeric_limits<double>::infinity();
    const double dpg = directed_percentile(sp, sg, percentile, spacing_mm);
    const double dgp = directed_percentile(sg, sp, percentile, spacing_mm);
    return std::max(dpg, dgp);
}

double hausdorff(const LabelVolume& pred, const LabelVolume& gt, Region r, int percentile,
                 const std::array<double, 3>& spacing_mm) {
    if (pred.d != gt.d || pred.h != gt.h || pred.w != gt.w)
        throw ShapeError("hausdorff: volume extents differ");
    return mask_hausdorff(region_mask(pred, r), region_mask(gt, r), pred.d, pred.h, pred.w,
                          percentile, spacing_mm);
}

template <typename T>
std::array<double, 4> confidence_histogram(const Tensor<T>& probs) {
    std::array<int64_t, 4> counts{0, 0, 0, 0};
    const T* p = probs.data();
    const int64_t n = probs.numel();
    for (int64_t i = 0; i < n; ++i) {
        const double v = double(p[i]);
        if (!(v >= 0.0 && v <= 1.0))
            throw NumericError("confidence_histogram: value " + std::to_string(v) +
                               " outside [0,1] at flat index " + std::to_string(i));
        if (v < 0.1)
            ++counts[0];
        else if (v < 0.5)
            ++counts[1];
        else if (v < 0.9)
            ++counts[2];
        else
            ++counts[3];
    }
    std::array<double, 4> out;
    for (int b = 0; b < 4; ++b) out[size_t(b)] = double(counts[size_t(b)]) / double(n);
    return out;
}

RegionScores score_case(const LabelVolume& pred, const LabelVolume& gt,
                        const std::array<double, 3>& spacing_mm) {
    RegionScores s;
    for (size_t ri = 0; ri < kRegions.size(); ++ri) {
        const Region r = kRegions[ri];
        s.dice[ri] = region_dice(pred, gt, r);
        s.hd95[ri] = hausdorff(pred, gt, r, 95, spacing_mm);
        s.hd100[ri] = hausdorff(pred, gt, r, 100, spacing_mm);
    }
    return s;
}

AggregateStat aggregate(const std::vector<double>& values) {
    AggregateStat st;
    std::vector<double> finite;
    for (double v : values) {
        if (std::isinf(v))
            ++st.failures;
        else
            finite.push_back(v);
    }
    if (finite.empty()) return st;
    for (double v : finite) st.mean += v;
    st.mean /= double(finite.size());
    double acc = 0;
    for (double v : finite) acc += (v - st.mean) * (v - st.mean);
    st.stddev = std::sqrt(acc / double(finite.size())); // population
    return st;
}

std::map<std::string, AggregateStat>
cross_val_aggregate(const std::vector<std::map<std::string, double>>& per_fold) {
    if (per_fold.size() < 2) throw ConfigError("cross_val_aggregate: need at least 2 folds");
    const auto& keys = per_fold.front();
    for (const auto& fold : per_fold)
        if (fold.size() != keys.size())
            throw ConfigError("cross_val_aggregate: folds carry different metric sets");
    std::map<std::string, AggregateStat> out;
    for (const auto& [name, _] : keys) {
        std::vector<double> vals;
        for (const auto& fold : per_fold) {
            auto it = fold.find(name);
            if (it == fold.end())
                throw ConfigError("cross_val_aggregate: fold missing metric '" + name + "'");
            vals.push_back(it->second);
        }
        out[name] = aggregate(vals);
    }
    return out;
}

std::map<std::string, double> scores_as_kv(const RegionScores& s) {
    std::map<std::string, double> kv;
    for (size_t ri = 0; ri < kRegions.size(); ++ri) {
        const std::string r = region_name(kRegions[ri]);
        kv["dice." + r] = s.dice[ri];
        kv["hd95." + r] = s.hd95[ri];
        kv["hd100." + r] = s.hd100[ri];
    }
    return kv;
}

template std::array<double, 4> confidence_histogram(const Tensor<float>&);
template std::array<double, 4> confidence_histogram(const Tensor<double>&);

} // namespace cga
