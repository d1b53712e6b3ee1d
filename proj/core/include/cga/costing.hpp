#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cga/tensor.hpp"

namespace cga {

// Static FLOPs/parameter accounting. Conventions follow the conv/matmul cost
// formulas: conv FLOPs = Cin*K^3*D*H*W*Cout evaluated on the OUTPUT grid,
// conv params = Cin*K^3*Cout (bias excluded), matmul (AxB)(BxC) = A*B*C.
// A multiply-accumulate counts as one FLOP in fma mode; flop mode doubles
// conv and matmul counts. Elementwise, softmax and pool nodes are structural:
// only convolution and matrix multiplication are charged.
enum class CountMode { fma, flop };

enum class NodeKind { input, conv3d, conv_transpose3d, matmul, elementwise, softmax, pool };

struct NodeShape {
    int64_t c = 0, d = 1, h = 1, w = 1; // channels x spatial; matmul results use (rows, cols,1,1)
    int64_t count() const { return c * d * h * w; }
};

struct GraphNode {
    std::string name;
    NodeKind kind = NodeKind::elementwise;
    std::vector<std::string> inputs; // names of producer nodes

    // conv3d / conv_transpose3d
    int64_t c_out = 0;
    int64_t k = 1;
    int64_t stride = 1;
    int64_t pad = 0;

    // matmul: operands are matrix views (channels x flattened spatial)
    bool transpose_a = false;
    bool transpose_b = false;
    // optional reinterpretation of a matmul result back onto a spatial grid
    std::optional<NodeShape> reshape_to;
};

struct Graph {
    std::string name;
    // named source tensors; the main one is conventionally called "input"
    std::vector<std::pair<std::string, NodeShape>> inputs;
    std::vector<GraphNode> nodes;
};

struct NodeCost {
    std::string name;
    NodeKind kind;
    uint64_t flops = 0;
    uint64_t params = 0;
    NodeShape out;
};

struct CostReport {
    std::string graph;
    std::vector<NodeCost> per_node;
    uint64_t total_flops = 0;
    uint64_t total_params = 0;
};

// Closed-form single-node costs (exact integer arithmetic).
uint64_t conv_flops(int64_t c_in, int64_t k, int64_t c_out, int64_t od, int64_t oh, int64_t ow);
uint64_t conv_params(int64_t c_in, int64_t k, int64_t c_out);
uint64_t matmul_flops(int64_t a, int64_t b, int64_t c);

// Shape-infers the graph (throws naming the offending node) and tallies costs.
CostReport analyze(const Graph& g, CountMode mode = CountMode::fma);

// Built-in comparison presets at the rate-8 bottleneck (C=128, 16^3 features,
// 128^3 input). self_attention_cprime exposes the projection width.
Graph preset_self_attention(int64_t c_prime = 128);
Graph preset_cp_block();
Graph preset_sam(int rate); // 8, 4 or 2
std::vector<std::string> preset_names();
Graph preset_by_name(const std::string& name);

// "1.23G" / "45.6M" / plain integer under 1e6, 3 significant digits
std::string human_units(uint64_t n);
std::string format_report(const CostReport& r);

// Parses the graph description text format (documented in the README):
//   graph <name>
//   input c=128 d=16 h=16 w=16
//   conv3d name=q in=input c_out=128 k=1 stride=1 pad=0
//   matmul name=qk a=q b=k ta=1
//   softmax name=s in=qk
//   matmul name=vs a=v b=s tb=1 reshape=128x16x16x16
Graph parse_graph_file(const std::string& path);

} // namespace cga
