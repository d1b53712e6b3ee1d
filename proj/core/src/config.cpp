#include "cga/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cga/error.hpp"
#include "cga/volume.hpp"

namespace cga {

std::vector<int> RunConfig::intra_class_channels() const {
    if (sam_intra_classes == "all") return {0, 1, 2, 3};
    if (sam_intra_classes == "none") return {};
    std::vector<int> channels;
    std::istringstream is(sam_intra_classes);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        if (tok.empty()) continue;
        int label;
        try {
            label = std::stoi(tok);
        } catch (const std::exception&) {
            throw ConfigError("sam.intra_classes: bad label '" + tok + "'");
        }
        channels.push_back(label_to_channel(uint8_t(label)));
    }
    return channels;
}

InterSign RunConfig::inter_sign_enum() const {
    if (inter_sign == "maximize") return InterSign::maximize;
    if (inter_sign == "minimize") return InterSign::minimize;
    throw ConfigError("inter.sign must be 'maximize' or 'minimize', got '" + inter_sign + "'");
}

void RunConfig::validate() const {
    if (crop % 8 != 0) throw ConfigError("train.crop must be divisible by 8");
    if (crop > phantom_extent && data_dir.empty())
        throw ConfigError("train.crop exceeds phantom.extent");
    if (batch <= 0 || epochs < 0) throw ConfigError("bad batch/epoch settings");
    if (data_val_holdout >= data_cases)
        throw ConfigError("data.val_holdout must leave at least one training case");
    (void)intra_class_channels();
    (void)inter_sign_enum();
}

namespace {

struct Field {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

template <typename T>
T parse_num(const std::string& v, const std::string& key) {
    try {
        if constexpr (std::is_same_v<T, uint64_t>) return std::stoull(v);
        else if constexpr (std::is_same_v<T, int>) return std::stoi(v);
        else return std::stod(v);
    } catch (const std::exception&) {
        throw ConfigError(key + ": bad numeric value '" + v + "'");
    }
}

// ordered schema; serialization follows this order exactly
const std::vector<std::pair<std::string, Field>>& schema() {
    static const std::vector<std::pair<std::string, Field>> s = [] {
        std::vector<std::pair<std::string, Field>> f;
        auto add = [&](const std::string& key, auto getter, auto setter) {
            f.push_back({key, Field{getter, setter}});
        };
#define NUM_FIELD(key, member, type)                                                      \
    add(key, [](const RunConfig& c) {                                                     \
        if constexpr (std::is_same_v<type, double>) return fmt_double(c.member);          \
        else return std::to_string(c.member);                                             \
    },                                                                                    \
        [](RunConfig& c, const std::string& v) { c.member = parse_num<type>(v, key); })
#define BOOL_FIELD(key, member)                                                           \
    add(key, [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }, \
        [](RunConfig& c, const std::string& v) { c.member = parse_bool(v, key); })
#define STR_FIELD(key, member)                                                            \
    add(key, [](const RunConfig& c) { return c.member; },                                 \
        [](RunConfig& c, const std::string& v) { c.member = v; })

        NUM_FIELD("seed", seed, uint64_t);
        STR_FIELD("out", out_dir);
        STR_FIELD("data.dir", data_dir);
        NUM_FIELD("data.cases", data_cases, int);
        NUM_FIELD("data.val_holdout", data_val_holdout, int);
        NUM_FIELD("data.folds", folds, int);
        NUM_FIELD("phantom.extent", phantom_extent, int);
        NUM_FIELD("phantom.noise", phantom_noise, double);
        NUM_FIELD("phantom.tumors", phantom_tumors, int);
        NUM_FIELD("phantom.edema_rmin", phantom_edema_rmin, double);
        NUM_FIELD("phantom.edema_rmax", phantom_edema_rmax, double);
        NUM_FIELD("phantom.core_frac", phantom_core_frac, double);
        NUM_FIELD("phantom.enh_frac", phantom_enh_frac, double);
        NUM_FIELD("phantom.jitter", phantom_jitter, double);
        NUM_FIELD("model.scale_div", scale_div, int);
        NUM_FIELD("train.crop", crop, int);
        NUM_FIELD("model.dropout", dropout, double);
        NUM_FIELD("opt.lr", lr, double);
        NUM_FIELD("opt.lr_poly_power", lr_poly_power, double);
        NUM_FIELD("opt.weight_decay", weight_decay, double);
        NUM_FIELD("opt.batch", batch, int);
        NUM_FIELD("train.epochs", epochs, int);
        NUM_FIELD("train.switch_epoch", switch_epoch, int);
        NUM_FIELD("train.checkpoint_every", checkpoint_every, int);
        NUM_FIELD("train.crops_per_case", crops_per_case, int);
        NUM_FIELD("loss.main_weight", w_main, double);
        NUM_FIELD("loss.att_weight", w_att, double);
        NUM_FIELD("loss.inter_weight", w_inter, double);
        BOOL_FIELD("sam.enabled", sam_enabled);
        BOOL_FIELD("sam.residual", sam_residual);
        BOOL_FIELD("sam.attention_softmax", sam_attention_softmax);
        BOOL_FIELD("sam.hard_masks", sam_hard_masks);
        STR_FIELD("sam.intra_classes", sam_intra_classes);
        BOOL_FIELD("inter.enabled", inter_enabled);
        STR_FIELD("inter.sign", inter_sign);
        BOOL_FIELD("inter.ordered_pairs", inter_ordered_pairs);
#undef NUM_FIELD
#undef BOOL_FIELD
#undef STR_FIELD
        return f;
    }();
    return s;
}

} // namespace

void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& [k, field] : schema()) {
        if (k == key) {
            field.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        apply_config_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot open config file");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_config_text(text, path);
}

std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& [key, field] : schema()) out += key + " = " + field.get(cfg) + "\n";
    return out;
}

} // namespace cga
