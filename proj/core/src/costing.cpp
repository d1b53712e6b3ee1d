#include "cga/costing.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "cga/error.hpp"
#include "cga/nn_ops.hpp"

namespace cga {

uint64_t conv_flops(int64_t c_in, int64_t k, int64_t c_out, int64_t od, int64_t oh, int64_t ow) {
    return uint64_t(c_in) * uint64_t(k * k * k) * uint64_t(od) * uint64_t(oh) * uint64_t(ow) *
           uint64_t(c_out);
}

uint64_t conv_params(int64_t c_in, int64_t k, int64_t c_out) {
    return uint64_t(c_in) * uint64_t(k * k * k) * uint64_t(c_out);
}

uint64_t matmul_flops(int64_t a, int64_t b, int64_t c) {
    return uint64_t(a) * uint64_t(b) * uint64_t(c);
}

namespace {

struct MatView {
    int64_t rows, cols;
};

MatView mat_view(const NodeShape& s, bool transpose) {
    // matrix view: channels x flattened spatial
    MatView v{s.c, s.d * s.h * s.w};
    if (transpose) std::swap(v.rows, v.cols);
    return v;
}

} // namespace

CostReport analyze(const Graph& g, CountMode mode) {
    CostReport report;
    report.graph = g.name;
    std::map<std::string, NodeShape> shapes;
    for (const auto& [name, shape] : g.inputs) shapes[name] = shape;
    if (shapes.empty()) throw ConfigError("analyze: graph has no inputs");
    const uint64_t mul = mode == CountMode::flop ? 2 : 1;

    auto shape_of = [&](const std::string& name, const std::string& node) -> const NodeShape& {
        auto it = shapes.find(name);
        if (it == shapes.end())
            throw ConfigError("analyze: node '" + node + "' references unknown input '" + name + "'");
        return it->second;
    };

    for (const auto& n : g.nodes) {
        if (n.name.empty()) throw ConfigError("analyze: unnamed node");
        if (shapes.count(n.name)) throw ConfigError("analyze: duplicate node '" + n.name + "'");
        NodeCost cost;
        cost.name = n.name;
        cost.kind = n.kind;
        switch (n.kind) {
        case NodeKind::input:
            throw ConfigError("analyze: 'input' is implicit, node '" + n.name + "' is invalid");
        case NodeKind::conv3d: {
            if (n.inputs.size() != 1)
                throw ConfigError("analyze: conv3d '" + n.name + "' needs one input");
            const NodeShape& in = shape_of(n.inputs[0], n.name);
            NodeShape out;
            out.c = n.c_out;
            out.d = conv_out_extent(in.d, n.k, n.stride, n.pad);
            out.h = conv_out_extent(in.h, n.k, n.stride, n.pad);
            out.w = conv_out_extent(in.w, n.k, n.stride, n.pad);
            if (out.d <= 0 || out.h <= 0 || out.w <= 0)
                throw ConfigError("analyze: conv3d '" + n.name + "' produces an empty output");
            cost.flops = mul * conv_flops(in.c, n.k, n.c_out, out.d, out.h, out.w);
            cost.params = conv_params(in.c, n.k, n.c_out);
            cost.out = out;
            break;
        }
        case NodeKind::conv_transpose3d: {
            if (n.inputs.size() != 1)
                throw ConfigError("analyze: conv_transpose3d '" + n.name + "' needs one input");
            const NodeShape& in = shape_of(n.inputs[0], n.name);
            NodeShape out;
            out.c = n.c_out;
            out.d = conv_transpose_out_extent(in.d, n.k, n.stride, n.pad);
            out.h = conv_transpose_out_extent(in.h, n.k, n.stride, n.pad);
            out.w = conv_transpose_out_extent(in.w, n.k, n.stride, n.pad);
            // transposed conv charges the formula on its input grid (one tap set
            // per input position), mirroring the conv formula's output grid
            cost.flops = mul * conv_flops(in.c, n.k, n.c_out, in.d, in.h, in.w);
            cost.params = conv_params(in.c, n.k, n.c_out);
            cost.out = out;
            break;
        }
        case NodeKind::matmul: {
            if (n.inputs.size() != 2)
                throw ConfigError("analyze: matmul '" + n.name + "' needs two inputs");
            const MatView a = mat_view(shape_of(n.inputs[0], n.name), n.transpose_a);
            const MatView b = mat_view(shape_of(n.inputs[1], n.name), n.transpose_b);
            if (a.cols != b.rows)
                throw ConfigError("analyze: matmul '" + n.name + "' inner extents differ (" +
                                  std::to_string(a.cols) + " vs " + std::to_string(b.rows) + ")");
            cost.flops = mul * matmul_flops(a.rows, a.cols, b.cols);
            cost.params = 0;
            if (n.reshape_to) {
                if (n.reshape_to->count() != a.rows * b.cols)
                    throw ConfigError("analyze: matmul '" + n.name + "' reshape changes count");
                cost.out = *n.reshape_to;
            } else {
                cost.out = NodeShape{a.rows, b.cols, 1, 1};
            }
            break;
        }
        case NodeKind::elementwise:
        case NodeKind::softmax:
        case NodeKind::pool: {
            // structural nodes: only conv and matmul are charged
            if (n.inputs.empty())
                throw ConfigError("analyze: node '" + n.name + "' needs at least one input");
            const NodeShape& in = shape_of(n.inputs[0], n.name);
            for (const auto& other : n.inputs)
                (void)shape_of(other, n.name);
            cost.flops = 0;
            cost.params = 0;
            cost.out = n.reshape_to ? *n.reshape_to : in;
            break;
        }
        }
        shapes[n.name] = cost.out;
        report.total_flops += cost.flops;
        report.total_params += cost.params;
        report.per_node.push_back(std::move(cost));
    }
    return report;
}

Graph preset_self_attention(int64_t c_prime) {
    // bottleneck insertion point: X is (128, 16^3), N = 4096. W_q, W_k, W_v as
    // 1x1x1 convs; classic non-local output transform W_z as a 3^3 conv (that
    // width reproduces the 0.492M parameter figure exactly).
    Graph g;
    g.name = "self-attention";
    g.inputs = {{"input", {128, 16, 16, 16}}};
    g.nodes.push_back({"q", NodeKind::conv3d, {"input"}, c_prime, 1, 1, 0});
    g.nodes.push_back({"k", NodeKind::conv3d, {"input"}, c_prime, 1, 1, 0});
    g.nodes.push_back({"v", NodeKind::conv3d, {"input"}, 128, 1, 1, 0});
    GraphNode qk{"qk", NodeKind::matmul, {"q", "k"}, 0, 1, 1, 0, true, false, std::nullopt};
    g.nodes.push_back(qk);
    g.nodes.push_back({"s", NodeKind::softmax, {"qk"}, 0, 1, 1, 0});
    GraphNode vs{"vs", NodeKind::matmul, {"v", "s"}, 0, 1, 1, 0, false, true,
                 NodeShape{128, 16, 16, 16}};
    g.nodes.push_back(vs);
    g.nodes.push_back({"wz", NodeKind::conv3d, {"vs"}, 128, 3, 1, 1});
    g.nodes.push_back({"residual", NodeKind::elementwise, {"wz", "input"}, 0, 1, 1, 0});
    return g;
}

Graph preset_cp_block() {
    // aggregation conv reduces channels by 4, the prior conv emits N = 4096
    // map channels, the update is one (C x N)(N x N) multiplication.
    Graph g;
    g.name = "cp-block";
    g.inputs = {{"input", {128, 16, 16, 16}}};
    g.nodes.push_back({"agg", NodeKind::conv3d, {"input"}, 32, 1, 1, 0});
    g.nodes.push_back({"prior", NodeKind::conv3d, {"agg"}, 4096, 1, 1, 0});
    g.nodes.push_back({"p", NodeKind::softmax, {"prior"}, 0, 1, 1, 0});
    GraphNode up{"update", NodeKind::matmul, {"input", "p"}, 0, 1, 1, 0, false, false,
                 NodeShape{128, 16, 16, 16}};
    g.nodes.push_back(up);
    g.nodes.push_back({"residual", NodeKind::elementwise, {"update", "input"}, 0, 1, 1, 0});
    return g;
}

Graph preset_sam(int rate) {
    // attention conv path from the raw 4-channel 128^3 input, plus the pooling
    // and map-back steps expressed as matrix products against the bottleneck
    // features (C_l x N)(N x C) and (N x C_l)(C_l x C).
    Graph g;
    g.name = "sam-r" + std::to_string(rate);
    const int64_t side = 128 / rate;
    g.inputs = {{"input", {4, 128, 128, 128}},
                {"x", {128, side, side, side}}}; // features at the supervision scale
    std::string prev = "input";
    int n_convs;
    switch (rate) {
    case 8: n_convs = 3; break;
    case 4: n_convs = 2; break;
    case 2: n_convs = 1; break;
    default: throw ConfigError("sam preset: rate must be 2, 4 or 8");
    }
    for (int i = 0; i < n_convs; ++i) {
        const bool last = i == n_convs - 1;
        GraphNode c;
        c.name = "attconv" + std::to_string(i + 1);
        c.kind = NodeKind::conv3d;
        c.inputs = {prev};
        c.c_out = last ? 4 : 16;
        c.k = 3;
        c.stride = 2;
        c.pad = 1;
        g.nodes.push_back(c);
        prev = c.name;
    }
    g.nodes.push_back({"s", NodeKind::softmax, {prev}, 0, 1, 1, 0});
    GraphNode pool{"prototypes", NodeKind::matmul, {"s", "x"}, 0, 1, 1, 0, false, true,
                   NodeShape{4, 128, 1, 1}};
    g.nodes.push_back(pool);
    GraphNode remap{"remap", NodeKind::matmul, {"s", "prototypes"}, 0, 1, 1, 0, true, false,
                    NodeShape{128, side, side, side}};
    g.nodes.push_back(remap);
    g.nodes.push_back({"residual", NodeKind::elementwise, {"remap", "x"}, 0, 1, 1, 0});
    return g;
}

std::vector<std::string> preset_names() {
    return {"self-attention", "cp-block", "sam-r8", "sam-r4", "sam-r2"};
}

Graph preset_by_name(const std::string& name) {
    if (name == "self-attention") return preset_self_attention();
    if (name == "cp-block") return preset_cp_block();
    if (name == "sam-r8") return preset_sam(8);
    if (name == "sam-r4") return preset_sam(4);
    if (name == "sam-r2") return preset_sam(2);
    std::string all;
    for (const auto& n : preset_names()) all += (all.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (available: " + all + ")");
}

std::string human_units(uint64_t n) {
    // Table-style units: big counts in G, parameter-scale counts in M
    char buf[64];
    if (n >= 100000000ull)
        std::snprintf(buf, sizeof(buf), "%.3gG", double(n) / 1e9);
    else if (n >= 1000ull)
        std::snprintf(buf, sizeof(buf), "%.3gM", double(n) / 1e6);
    else
        std::snprintf(buf, sizeof(buf), "%llu", (unsigned long long)n);
    return buf;
}

std::string format_report(const CostReport& r) {
    std::ostringstream os;
    os << "graph: " << r.graph << "\n";
    char line[256];
    std::snprintf(line, sizeof(line), "%-16s %-18s %16s %14s\n", "node", "kind", "flops", "params");
    os << line;
    auto kind_name = [](NodeKind k) {
        switch (k) {
        case NodeKind::input: return "input";
        case NodeKind::conv3d: return "conv3d";
        case NodeKind::conv_transpose3d: return "conv_transpose3d";
        case NodeKind::matmul: return "matmul";
        case NodeKind::elementwise: return "elementwise";
        case NodeKind::softmax: return "softmax";
        case NodeKind::pool: return "pool";
        }
        return "?";
    };
    for (const auto& n : r.per_node) {
        std::snprintf(line, sizeof(line), "%-16s %-18s %16llu %14llu\n", n.name.c_str(),
                      kind_name(n.kind), (unsigned long long)n.flops, (unsigned long long)n.params);
        os << line;
    }
    std::snprintf(line, sizeof(line), "total: flops=%llu (%s) params=%llu (%s)\n",
                  (unsigned long long)r.total_flops, human_units(r.total_flops).c_str(),
                  (unsigned long long)r.total_params, human_units(r.total_params).c_str());
    os << line;
    return os.str();
}

namespace {

std::map<std::string, std::string> parse_kv_tokens(std::istringstream& is,
                                                   const std::string& where) {
    std::map<std::string, std::string> kv;
    std::string tok;
    while (is >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos)
            throw ConfigError("graph file: bad token '" + tok + "' in " + where);
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return kv;
}

int64_t to_int(const std::map<std::string, std::string>& kv, const std::string& key,
               int64_t fallback, bool required, const std::string& where) {
    auto it = kv.find(key);
    if (it == kv.end()) {
        if (required) throw ConfigError("graph file: missing '" + key + "' in " + where);
        return fallback;
    }
    return std::stoll(it->second);
}

NodeShape parse_shape(const std::string& spec, const std::string& where) {
    // CxDxHxW
    NodeShape s;
    int64_t vals[4];
    int n = std::sscanf(spec.c_str(), "%ldx%ldx%ldx%ld", &vals[0], &vals[1], &vals[2], &vals[3]);
    if (n != 4) throw ConfigError("graph file: bad shape '" + spec + "' in " + where);
    s.c = vals[0];
    s.d = vals[1];
    s.h = vals[2];
    s.w = vals[3];
    return s;
}

} // namespace

Graph parse_graph_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError(path + ": cannot open graph file");
    Graph g;
    bool have_input = false;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream is(line);
        std::string kindw;
        if (!(is >> kindw)) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        if (kindw == "graph") {
            is >> g.name;
            continue;
        }
        if (kindw == "input") {
            auto kv = parse_kv_tokens(is, where);
            NodeShape shape;
            shape.c = to_int(kv, "c", 0, true, where);
            shape.d = to_int(kv, "d", 1, false, where);
            shape.h = to_int(kv, "h", 1, false, where);
            shape.w = to_int(kv, "w", 1, false, where);
            const std::string name = kv.count("name") ? kv["name"] : "input";
            g.inputs.push_back({name, shape});
            have_input = true;
            continue;
        }
        GraphNode n;
        if (kindw == "conv3d")
            n.kind = NodeKind::conv3d;
        else if (kindw == "conv_transpose3d")
            n.kind = NodeKind::conv_transpose3d;
        else if (kindw == "matmul")
            n.kind = NodeKind::matmul;
        else if (kindw == "elementwise")
            n.kind = NodeKind::elementwise;
        else if (kindw == "softmax")
            n.kind = NodeKind::softmax;
        else if (kindw == "pool")
            n.kind = NodeKind::pool;
        else
            throw ConfigError(where + ": unknown node kind '" + kindw + "'");
        auto kv = parse_kv_tokens(is, where);
        if (!kv.count("name")) throw ConfigError(where + ": node needs name=");
        n.name = kv["name"];
        if (n.kind == NodeKind::matmul) {
            if (!kv.count("a") || !kv.count("b"))
                throw ConfigError(where + ": matmul needs a= and b=");
            n.inputs = {kv["a"], kv["b"]};
            n.transpose_a = to_int(kv, "ta", 0, false, where) != 0;
            n.transpose_b = to_int(kv, "tb", 0, false, where) != 0;
        } else {
            if (!kv.count("in")) throw ConfigError(where + ": node needs in=");
            std::istringstream ins(kv["in"]);
            std::string one;
            while (std::getline(ins, one, ',')) n.inputs.push_back(one);
        }
        if (n.kind == NodeKind::conv3d || n.kind == NodeKind::conv_transpose3d) {
            n.c_out = to_int(kv, "c_out", 0, true, where);
            n.k = to_int(kv, "k", 1, false, where);
            n.stride = to_int(kv, "stride", 1, false, where);
            n.pad = to_int(kv, "pad", 0, false, where);
        }
        if (kv.count("reshape")) n.reshape_to = parse_shape(kv["reshape"], where);
        g.nodes.push_back(std::move(n));
    }
    if (!have_input) throw ConfigError(path + ": graph file has no input declaration");
    if (g.name.empty()) g.name = path;
    return g;
}

} // namespace cga
