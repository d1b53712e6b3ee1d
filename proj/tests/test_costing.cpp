#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "cga/costing.hpp"
#include "cga/nn_ops.hpp"
#include "test_util.hpp"

using namespace cga;

TEST_CASE("conv cost formulas on hand-computed cases") {
    // 3^3 conv, 4 -> 16 channels on a 64^3 output grid
    CHECK(conv_params(4, 3, 16) == 1728);
    CHECK(conv_flops(4, 3, 16, 64, 64, 64) == 452984832ull);

    // 1x1x1 conv, one channel, single voxel
    CHECK(conv_params(1, 1, 1) == 1);
    CHECK(conv_flops(1, 1, 1, 1, 1, 1) == 1);

    // params independent of spatial extent
    CHECK(conv_params(8, 3, 8) == conv_params(8, 3, 8));
    CHECK(conv_flops(8, 3, 8, 4, 4, 4) != conv_flops(8, 3, 8, 8, 8, 8));
}

TEST_CASE("matmul cost formula") {
    CHECK(matmul_flops(2, 3, 4) == 24);
    CHECK(matmul_flops(1, 1, 1) == 1);
    CHECK(matmul_flops(4096, 128, 4096) == 4096ull * 128 * 4096);
}

TEST_CASE("empty graph analyzes to zero totals") {
    Graph g;
    g.name = "empty";
    g.inputs = {{"input", {4, 8, 8, 8}}};
    auto r = analyze(g);
    CHECK(r.total_flops == 0);
    CHECK(r.total_params == 0);
    CHECK(r.per_node.empty());
}

TEST_CASE("adding a node adds exactly that node's cost") {
    Graph g;
    g.name = "t";
    g.inputs = {{"input", {4, 16, 16, 16}}};
    g.nodes.push_back({"c1", NodeKind::conv3d, {"input"}, 8, 3, 1, 1});
    auto r1 = analyze(g);
    g.nodes.push_back({"c2", NodeKind::conv3d, {"c1"}, 8, 3, 1, 1});
    auto r2 = analyze(g);
    CHECK(r2.total_flops - r1.total_flops == r2.per_node.back().flops);
    CHECK(r2.total_params - r1.total_params == r2.per_node.back().params);
}

TEST_CASE("doubling spatial extents multiplies conv FLOPs by 8, params unchanged") {
    for (int64_t s : {8, 16}) {
        Graph g;
        g.inputs = {{"input", {4, s, s, s}}};
        g.nodes.push_back({"c", NodeKind::conv3d, {"input"}, 8, 3, 1, 1});
        auto r = analyze(g);
        Graph g2;
        g2.inputs = {{"input", {4, 2 * s, 2 * s, 2 * s}}};
        g2.nodes.push_back({"c", NodeKind::conv3d, {"input"}, 8, 3, 1, 1});
        auto r2 = analyze(g2);
        CHECK(r2.total_flops == 8 * r.total_flops);
        CHECK(r2.total_params == r.total_params);
    }
}

TEST_CASE("sam-r8 preset: attention path params follow the narrow channel chain") {
    auto r = analyze(preset_sam(8));
    uint64_t conv_params_total = 0;
    for (const auto& n : r.per_node)
        if (n.kind == NodeKind::conv3d) conv_params_total += n.params;
    // 4*27*16 + 16*27*16 + 16*27*4 = 1728 + 6912 + 1728
    CHECK(conv_params_total == 10368);
    CHECK(r.total_params == 10368);
    // first conv dominates: 4*27*64^3*16
    CHECK(r.per_node[0].flops == 452984832ull);
}

TEST_CASE("Table-3 ordering: self-attention > cp block > sam-r8 in FLOPs and params") {
    auto sa = analyze(preset_self_attention());
    auto cp = analyze(preset_cp_block());
    auto sam = analyze(preset_sam(8));
    CHECK(sa.total_flops > cp.total_flops);
    CHECK(cp.total_flops > sam.total_flops);
    CHECK(sa.total_params > cp.total_params);
    CHECK(cp.total_params > sam.total_params);
    // the self-attention preset's W_z width reproduces the 0.492M figure
    CHECK(sa.total_params == 491520);
    CHECK(human_units(sa.total_params) == "0.492M");
}

TEST_CASE("count mode flop doubles conv and matmul FLOPs") {
    auto fma = analyze(preset_self_attention(), CountMode::fma);
    auto flop = analyze(preset_self_attention(), CountMode::flop);
    CHECK(flop.total_flops == 2 * fma.total_flops);
    CHECK(flop.total_params == fma.total_params);
}

TEST_CASE("shape inference failures name the offending node") {
    Graph g;
    g.inputs = {{"input", {4, 4, 4, 4}}};
    g.nodes.push_back({"huge", NodeKind::conv3d, {"input"}, 8, 9, 1, 0});
    try {
        (void)analyze(g);
        CHECK(false);
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("huge") != std::string::npos);
    }

    Graph g2;
    g2.inputs = {{"input", {4, 4, 4, 4}}};
    g2.nodes.push_back({"orphan", NodeKind::conv3d, {"nope"}, 8, 3, 1, 1});
    CHECK_THROWS_AS((void)analyze(g2), ConfigError);
}

TEST_CASE("runtime op counter agrees with the analyzer on a pad-0 conv and matmul") {
    // convention: counts match exactly when no padding taps are skipped
    Rng rng(130);
    auto x = testutil::random_tensor<float>({1, 3, 6, 6, 6}, rng);
    auto w = testutil::random_tensor<float>({5, 3, 3, 3, 3}, rng);
    opcount::reset();
    opcount::enable(true);
    (void)conv3d_forward<float>(x, w, nullptr, 1, 0);
    opcount::enable(false);

    Graph g;
    g.inputs = {{"input", {3, 6, 6, 6}}};
    g.nodes.push_back({"c", NodeKind::conv3d, {"input"}, 5, 3, 1, 0});
    auto r = analyze(g);
    CHECK(opcount::macs() == r.total_flops);

    opcount::reset();
    opcount::enable(true);
    (void)matmul(Tensor<float>({7, 9}, 1.f), Tensor<float>({9, 5}, 1.f));
    opcount::enable(false);
    CHECK(opcount::macs() == matmul_flops(7, 9, 5));
}

TEST_CASE("graph file round trip through the parser") {
    const std::string path = "/tmp/cga_test_graph.txt";
    {
        std::ofstream f(path);
        f << "# tiny attention-ish graph\n";
        f << "graph tiny\n";
        f << "input c=8 d=4 h=4 w=4\n";
        f << "conv3d name=q in=input c_out=8 k=1\n";
        f << "conv3d name=k in=input c_out=8 k=1\n";
        f << "matmul name=qk a=q b=k ta=1\n";
        f << "softmax name=s in=qk\n";
    }
    auto g = parse_graph_file(path);
    CHECK(g.name == "tiny");
    REQUIRE(g.nodes.size() == 4);
    auto r = analyze(g);
    // q and k: 8*1*64*8 each; qk: 64*8*64
    CHECK(r.total_flops == 2 * 8 * 64 * 8 + 64ull * 8 * 64);
    CHECK(r.total_params == 2 * 64);

    std::ofstream(path) << "conv3d name=c in=input c_out=4\n"; // no input line
    CHECK_THROWS_AS((void)parse_graph_file(path), ConfigError);
}

TEST_CASE("unknown preset lists the available ones") {
    try {
        (void)preset_by_name("bogus");
        CHECK(false);
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("sam-r8") != std::string::npos);
    }
}
