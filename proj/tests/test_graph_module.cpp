#include <array>
#include <vector>

#include "bic/gradcheck.hpp"
#include "bic/graph_module.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace bic;

namespace {

TensorPtrT<double> random_tensor(Rng& rng, Shape shape, double scale = 0.5) {
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = rng.uniform(-scale, scale);
    return tensor_of<double>(std::move(shape), std::move(v));
}

void set_identity(const TensorPtrT<double>& w) {
    std::fill(w->values.begin(), w->values.end(), 0.0);
    for (int i = 0; i < w->rows(); ++i) w->at(i, i) = 1.0;
}

oracle::Mat to_mat(const TensorPtrT<double>& t) {
    oracle::Mat m(t->rows(), oracle::Vec(t->cols()));
    for (int i = 0; i < t->rows(); ++i)
        for (int j = 0; j < t->cols(); ++j) m[i][j] = t->at(i, j);
    return m;
}

}  // namespace

TEST_SUITE("graph_module") {

TEST_CASE("rgcn with no neighbors reduces to the self term") {
    ParamStoreT<double> ps;
    Rng rng(3);
    RgcnLayerT<double> layer(ps, "rgcn", 4, 2, 0.01, rng);
    auto g = random_tensor(rng, {1, 4});
    auto agg = build_relation_aggregators<double>(1, 2, {}, {});
    auto out = layer.forward(g, agg);

    const auto w_self = oracle::fetch_mat(ps, "rgcn.w_self");
    const auto expect = oracle::leaky(oracle::vecmat(g->values, w_self), 0.01);
    for (int j = 0; j < 4; ++j) CHECK(out->at(0, j) == doctest::Approx(expect[j]).epsilon(1e-12));
}

TEST_CASE("identity weights and identity activation add center and neighbor") {
    ParamStoreT<double> ps;
    Rng rng(5);
    RgcnLayerT<double> layer(ps, "rgcn", 3, 1, 1.0, rng);  // slope 1 = identity activation
    set_identity(ps.by_name("rgcn.w_self").tensor);
    set_identity(ps.by_name("rgcn.w_rel0").tensor);

    auto nodes = tensor_of<double>({2, 3}, {1, 2, 3, 10, 20, 30});
    std::vector<std::array<int, 3>> edges = {{1, 0, 0}, {0, 1, 0}};
    auto agg = build_relation_aggregators<double>(2, 1, edges, {1});
    auto out = layer.forward(nodes, agg);
    CHECK(out->at(0, 0) == doctest::Approx(11.0));
    CHECK(out->at(0, 1) == doctest::Approx(22.0));
    CHECK(out->at(0, 2) == doctest::Approx(33.0));
    // the neighbor aggregates the center over the reciprocal edge
    CHECK(out->at(1, 0) == doctest::Approx(11.0));
}

TEST_CASE("matches dense message-passing oracle on a mixed-relation ego net") {
    ParamStoreT<double> ps;
    Rng rng(11);
    RgcnLayerT<double> layer(ps, "rgcn", 4, 2, 0.01, rng);

    auto nodes = random_tensor(rng, {4, 4});  // center + 3 neighbors
    std::vector<std::array<int, 3>> edges = {
        {1, 0, 0}, {0, 1, 1}, {2, 0, 0}, {0, 2, 1}, {3, 0, 1}, {0, 3, 0}, {1, 0, 1}};
    std::vector<std::uint8_t> mask = {1, 1, 1};
    auto agg = build_relation_aggregators<double>(4, 2, edges, mask);
    auto out = layer.forward(nodes, agg);

    const std::vector<oracle::Mat> w_rel = {oracle::fetch_mat(ps, "rgcn.w_rel0"),
                                            oracle::fetch_mat(ps, "rgcn.w_rel1")};
    const auto expect = oracle::rgcn(to_mat(nodes), edges, oracle::fetch_mat(ps, "rgcn.w_self"),
                                     w_rel, 0.01, {1, 1, 1, 1});
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(out->at(i, j) == doctest::Approx(expect[i][j]).epsilon(1e-10));
}

TEST_CASE("masked neighbors are excluded from both directions") {
    ParamStoreT<double> ps;
    Rng rng(17);
    RgcnLayerT<double> layer(ps, "rgcn", 4, 1, 0.01, rng);
    auto nodes = random_tensor(rng, {3, 4});
    std::vector<std::array<int, 3>> edges = {{1, 0, 0}, {2, 0, 0}, {0, 1, 0}, {0, 2, 0}};
    auto masked = layer.forward(nodes, build_relation_aggregators<double>(3, 1, edges, {1, 0}));

    // neighbor 2 masked == the same net without neighbor 2's edges
    std::vector<std::array<int, 3>> pruned = {{1, 0, 0}, {0, 1, 0}};
    auto expect = layer.forward(nodes, build_relation_aggregators<double>(3, 1, pruned, {1, 1}));
    for (int j = 0; j < 4; ++j) {
        CHECK(masked->at(0, j) == doctest::Approx(expect->at(0, j)).epsilon(1e-12));
        CHECK(masked->at(1, j) == doctest::Approx(expect->at(1, j)).epsilon(1e-12));
    }
}

TEST_CASE("invariant to neighbor order") {
    ParamStoreT<double> ps;
    Rng rng(23);
    RgcnLayerT<double> layer(ps, "rgcn", 4, 2, 0.01, rng);
    auto nodes = random_tensor(rng, {4, 4});
    std::vector<std::array<int, 3>> edges = {{1, 0, 0}, {2, 0, 1}, {3, 0, 0},
                                             {0, 1, 0}, {0, 2, 1}, {0, 3, 0}};
    auto base = layer.forward(nodes, build_relation_aggregators<double>(4, 2, edges, {1, 1, 1}));

    // present the same neighbors as nodes (1,2,3) -> (3,1,2)
    const std::vector<int> perm = {0, 3, 1, 2};  // old -> new position
    std::vector<double> shuffled(16);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) shuffled[perm[i] * 4 + j] = nodes->at(i, j);
    std::vector<std::array<int, 3>> remapped;
    for (auto e : edges) remapped.push_back({perm[e[0]], perm[e[1]], e[2]});
    auto moved = layer.forward(tensor_of<double>({4, 4}, std::move(shuffled)),
                               build_relation_aggregators<double>(4, 2, remapped, {1, 1, 1}));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(moved->at(perm[i], j) == doctest::Approx(base->at(i, j)).epsilon(1e-12));
}

TEST_CASE("relation contributions are additive") {
    // identity activation makes the pre-activation sum observable
    ParamStoreT<double> ps;
    Rng rng(31);
    RgcnLayerT<double> layer(ps, "rgcn", 4, 2, 1.0, rng);
    auto nodes = random_tensor(rng, {4, 4});
    // neighbors 1,2 on relation 0; neighbor 3 on relation 1
    std::vector<std::array<int, 3>> edges = {{1, 0, 0}, {2, 0, 0}, {3, 0, 1}};
    auto agg_full = build_relation_aggregators<double>(4, 2, edges, {1, 1, 1});
    auto full = layer.forward(nodes, agg_full);

    // zero relation 0's neighbors' inputs
    auto zeroed_nodes = tensor_of<double>({4, 4}, nodes->values);
    for (int j = 0; j < 4; ++j) {
        zeroed_nodes->at(1, j) = 0.0;
        zeroed_nodes->at(2, j) = 0.0;
    }
    auto without = layer.forward(zeroed_nodes, agg_full);

    // the center's difference is exactly relation 0's message term
    const auto w0 = oracle::fetch_mat(ps, "rgcn.w_rel0");
    oracle::Vec mean_in(4, 0.0);
    for (int j = 0; j < 4; ++j) mean_in[j] = (nodes->at(1, j) + nodes->at(2, j)) / 2.0;
    const auto term = oracle::vecmat(mean_in, w0);
    for (int j = 0; j < 4; ++j)
        CHECK(full->at(0, j) - without->at(0, j) == doctest::Approx(term[j]).epsilon(1e-10));
}

TEST_CASE("single relation with shared weight equals plain mean GCN with self-loop") {
    ParamStoreT<double> ps;
    Rng rng(37);
    RgcnLayerT<double> layer(ps, "rgcn", 4, 1, 0.01, rng);
    auto shared = ps.by_name("rgcn.w_self").tensor;
    ps.by_name("rgcn.w_rel0").tensor->values = shared->values;

    auto nodes = random_tensor(rng, {3, 4});
    std::vector<std::array<int, 3>> edges = {{1, 0, 0}, {2, 0, 0}, {0, 1, 0}, {0, 2, 0}};
    auto out = layer.forward(nodes, build_relation_aggregators<double>(3, 1, edges, {1, 1}));

    // plain GCN: out_v = leaky((x_v + mean_{u in N(v)} x_u) W)
    const auto w = to_mat(shared);
    oracle::Vec mean_n(4, 0.0);
    for (int j = 0; j < 4; ++j) mean_n[j] = (nodes->at(1, j) + nodes->at(2, j)) / 2.0;
    const auto expect =
        oracle::leaky(oracle::vecmat(oracle::add(to_mat(nodes)[0], mean_n), w), 0.01);
    for (int j = 0; j < 4; ++j) CHECK(out->at(0, j) == doctest::Approx(expect[j]).epsilon(1e-10));
}

TEST_CASE("unknown relation id in edges is rejected") {
    ParamStoreT<double> ps;
    Rng rng(39);
    RgcnLayerT<double> layer(ps, "rgcn", 4, 1, 0.01, rng);
    auto nodes = random_tensor(rng, {2, 4});
    std::vector<std::array<int, 3>> edges = {{1, 0, 1}};  // relation 1 does not exist
    auto agg = build_relation_aggregators<double>(2, 2, edges, {1});
    CHECK_THROWS_AS(layer.forward(nodes, agg), config_error);
}

TEST_CASE("neighbor attention degenerate and symmetric cases") {
    ParamStoreT<double> ps;
    Rng rng(41);
    GraphModuleT<double> graph(ps, 1, 4, 2, 4, 1, 0.01, rng);
    Rng drop(1);

    GraphStateT<double> lonely;
    lonely.g_int = random_tensor(rng, {4});
    auto out = graph.forward(lonely, 0, build_relation_aggregators<double>(1, 1, {}, {}), 0.0,
                             false, drop, false);
    CHECK(out.attention.matrix->shape == Shape{1, 1});
    CHECK(out.attention.matrix->values[0] == doctest::Approx(1.0));

    GraphStateT<double> state;
    state.g_int = random_tensor(rng, {4});
    auto nb = random_tensor(rng, {4});
    std::vector<double> nbs;
    for (int i = 0; i < 3; ++i) nbs.insert(nbs.end(), nb->values.begin(), nb->values.end());
    state.neighbors = tensor_of<double>({3, 4}, std::move(nbs));
    state.mask = {1, 1, 1};
    std::vector<std::array<int, 3>> edges = {{1, 0, 0}, {2, 0, 0}, {3, 0, 0},
                                             {0, 1, 0}, {0, 2, 0}, {0, 3, 0}};
    auto res = graph.forward(state, 0, build_relation_aggregators<double>(4, 1, edges, state.mask),
                             0.0, false, drop, false);
    const auto& m = res.attention.matrix;
    CHECK(m->at(0, 1) == doctest::Approx(m->at(0, 2)).epsilon(1e-12));
    CHECK(m->at(0, 1) == doctest::Approx(m->at(0, 3)).epsilon(1e-12));
}

TEST_CASE("tiny instance matches the scripted oracle end to end") {
    // J=2, D=4, 1 head
    ParamStoreT<double> ps;
    Rng rng(43);
    GraphModuleT<double> graph(ps, 1, 4, 1, 4, 2, 0.01, rng);
    Rng drop(1);

    GraphStateT<double> state;
    state.g_int = random_tensor(rng, {4});
    state.neighbors = random_tensor(rng, {2, 4});
    state.mask = {1, 1};
    std::vector<std::array<int, 3>> edges = {{1, 0, 0}, {0, 1, 1}, {2, 0, 1}, {0, 2, 0}};
    auto res = graph.forward(state, 0, build_relation_aggregators<double>(3, 2, edges, state.mask),
                             0.0, false, drop, false);

    oracle::Mat nodes = {state.g_int->values, {}, {}};
    nodes[1] = row(state.neighbors, 0)->values;
    nodes[2] = row(state.neighbors, 1)->values;
    const std::vector<oracle::Mat> w_rel = {oracle::fetch_mat(ps, "graph.0.rgcn.w_rel0"),
                                            oracle::fetch_mat(ps, "graph.0.rgcn.w_rel1")};
    const auto convolved = oracle::rgcn(nodes, edges, oracle::fetch_mat(ps, "graph.0.rgcn.w_self"),
                                        w_rel, 0.01, {1, 1, 1});
    const auto expect =
        oracle::transformer_layer(convolved, oracle::fetch_layer(ps, "graph.0.attn"), 1, {1, 1, 1});
    for (int j = 0; j < 4; ++j)
        CHECK(res.state.g_int->values[j] == doctest::Approx(expect.output[0][j]).epsilon(1e-10));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(res.attention.matrix->at(i, j) ==
                  doctest::Approx(expect.attention[i][j]).epsilon(1e-10));
}

TEST_CASE("gradient check through rgcn and neighbor attention") {
    ParamStoreT<double> ps;
    Rng rng(47);
    GraphModuleT<double> graph(ps, 1, 4, 2, 4, 2, 0.01, rng);
    Rng drop(1);

    auto g0 = random_tensor(rng, {4});
    auto nbs = random_tensor(rng, {2, 4});
    std::vector<std::array<int, 3>> edges = {{1, 0, 0}, {0, 1, 1}, {2, 0, 1}, {0, 2, 0}};
    auto agg = build_relation_aggregators<double>(3, 2, edges, {1, 1});
    auto report = grad_check(
        [&] {
            GraphStateT<double> state;
            state.g_int = g0;
            state.neighbors = nbs;
            state.mask = {1, 1};
            auto out = graph.forward(state, 0, agg, 0.0, false, drop, false);
            return add(sum_all(out.state.g_int), sum_all(out.state.neighbors));
        },
        ps, 1e-6, 1e-3);
    CAPTURE(report.worst());
    CHECK(report.passed);
}

}  // TEST_SUITE
