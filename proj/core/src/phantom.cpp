#include "cga/phantom.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cga/error.hpp"

namespace fs = std::filesystem;

namespace cga {

namespace {

// rows: labels 0,1,2,4; columns: 4 MR-like channels. Minimum pairwise
// signature distance is ~1.2, so the per-voxel class evidence stays usable
// up to noise sigma around 0.5 and the task needs spatial context beyond it.
constexpr float kSignature[4][4] = {
    {0.20f, 0.20f, 0.20f, 0.20f}, // background / normal tissue
    {1.00f, 0.35f, 1.30f, 0.80f}, // label 1, necrotic core shell
    {0.35f, 0.30f, 1.60f, 1.70f}, // label 2, edema
    {0.90f, 1.70f, 0.60f, 0.70f}, // label 4, enhancing core
};

} // namespace

float phantom_signature(uint8_t label, int channel) {
    return kSignature[label_to_channel(label)][channel];
}

PhantomCase generate_phantom(const PhantomSpec& spec) {
    if (spec.extent < 16) throw ConfigError("phantom: extent must be >= 16");
    if (spec.edema_radius_max * 2 > spec.extent)
        throw ConfigError("phantom: edema radius " + std::to_string(spec.edema_radius_max) +
                          " does not fit extent " + std::to_string(spec.extent));
    if (spec.edema_radius_min > spec.edema_radius_max)
        throw ConfigError("phantom: radius range is inverted");

    const int64_t s = spec.extent;
    Rng rng(spec.seed);
    LabelVolume labels(s, s, s);

    struct Blob {
        double cz, cy, cx, r2, r1, r4;
    };
    std::vector<Blob> blobs;
    const double mid = double(s - 1) / 2.0;
    const double jit = spec.center_jitter * double(s);
    for (int t = 0; t < spec.tumor_count; ++t) {
        Blob b;
        b.cz = mid + rng.uniform(-jit, jit);
        b.cy = mid + rng.uniform(-jit, jit);
        b.cx = mid + rng.uniform(-jit, jit);
        b.r2 = rng.uniform(spec.edema_radius_min, spec.edema_radius_max);
        b.r1 = b.r2 * spec.core_frac;
        b.r4 = b.r1 * spec.enhancing_frac;
        blobs.push_back(b);
    }

    for (int64_t z = 0; z < s; ++z)
        for (int64_t y = 0; y < s; ++y)
            for (int64_t x = 0; x < s; ++x) {
                uint8_t lab = 0;
                for (const auto& b : blobs) {
                    const double dz = double(z) - b.cz;
                    const double dy = double(y) - b.cy;
                    const double dx = double(x) - b.cx;
                    const double dist = std::sqrt(dz * dz + dy * dy + dx * dx);
                    uint8_t l = 0;
                    if (dist <= b.r4)
                        l = 4;
                    else if (dist <= b.r1)
                        l = 1;
                    else if (dist <= b.r2)
                        l = 2;
                    if (l != 0) lab = l; // innermost assignment of the last overlapping system
                }
                labels.at(z, y, x) = lab;
            }

    Tensor<float> image({4, s, s, s});
    const int64_t sp = s * s * s;
    for (int c = 0; c < 4; ++c) {
        float* pc = image.data() + c * sp;
        for (int64_t i = 0; i < sp; ++i) {
            const int ch = label_to_channel(labels.data[size_t(i)]);
            pc[i] = kSignature[ch][c] + float(spec.noise_sigma * rng.normal());
        }
    }

    if (spec.normalize) {
        // z-score per channel per volume
        for (int c = 0; c < 4; ++c) {
            float* pc = image.data() + c * sp;
            double mean = 0;
            for (int64_t i = 0; i < sp; ++i) mean += pc[i];
            mean /= double(sp);
            double var = 0;
            for (int64_t i = 0; i < sp; ++i) {
                const double d = pc[i] - mean;
                var += d * d;
            }
            var /= double(sp);
            const double sd = std::sqrt(var) > 1e-8 ? std::sqrt(var) : 1.0;
            for (int64_t i = 0; i < sp; ++i) pc[i] = float((pc[i] - mean) / sd);
        }
    }

    return PhantomCase{std::move(image), std::move(labels)};
}

void write_phantom_dataset(const std::string& root, const PhantomSpec& base, int n_cases,
                           int folds) {
    if (n_cases <= 0) throw ConfigError("dataset: need at least one case");
    if (folds <= 0) throw ConfigError("dataset: folds must be positive");
    fs::create_directories(root);
    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["cases"] = nlohmann::json::array();
    for (int i = 0; i < n_cases; ++i) {
        PhantomSpec spec = base;
        spec.seed = base.seed + uint64_t(i) * 0x9e3779b9ull;
        const PhantomCase pc = generate_phantom(spec);
        char name[32];
        std::snprintf(name, sizeof(name), "case_%03d", i);
        const fs::path dir = fs::path(root) / name;
        fs::create_directories(dir);
        write_volume((dir / "image.cgav").string(), pc.image);
        write_volume((dir / "labels.cgav").string(), pc.labels);
        manifest["cases"].push_back({{"id", i}, {"dir", name}, {"fold", i % folds}});
    }
    std::ofstream mf(fs::path(root) / "manifest.json");
    if (!mf) throw DataError(root + ": cannot write manifest.json");
    mf << manifest.dump(2) << "\n";
}

DatasetIndex read_manifest(const std::string& root) {
    const fs::path p = fs::path(root) / "manifest.json";
    std::ifstream f(p);
    if (!f) throw DataError(p.string() + ": cannot open manifest");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw DataError(p.string() + ": bad manifest: " + e.what());
    }
    DatasetIndex idx;
    for (const auto& c : j.at("cases"))
        idx.cases.push_back(DatasetCase{c.at("id").get<int>(), c.at("dir").get<std::string>(),
                                        c.at("fold").get<int>()});
    return idx;
}

PhantomCase load_case(const std::string& root, const DatasetCase& c) {
    const fs::path dir = fs::path(root) / c.dir;
    PhantomCase pc;
    pc.image = read_volume_f32((dir / "image.cgav").string());
    pc.labels = read_volume_labels((dir / "labels.cgav").string());
    return pc;
}

} // namespace cga
