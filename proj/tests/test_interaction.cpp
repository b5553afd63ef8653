#include <vector>

#include "bic/gradcheck.hpp"
#include "bic/interaction.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace bic;

namespace {

TensorPtrT<double> random_vec(Rng& rng, int n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-scale, scale);
    return tensor_of<double>({n}, std::move(v));
}

void set_identity(const TensorPtrT<double>& w) {
    std::fill(w->values.begin(), w->values.end(), 0.0);
    for (int i = 0; i < w->rows(); ++i) w->at(i, i) = 1.0;
}

}  // namespace

TEST_SUITE("interaction") {

TEST_CASE("equal inputs with tied projections give half weights and identity outputs") {
    ParamStoreT<double> ps;
    Rng rng(3);
    InteractionModuleT<double> inter(ps, "i", 4, InteractionKind::similarity, false, 0.01, rng);
    ps.by_name("i.theta2").tensor->values = ps.by_name("i.theta1").tensor->values;

    auto h = random_vec(rng, 4);
    auto g = tensor_of<double>({4}, h->values);
    auto out = inter.forward(h, g);
    CHECK(out.has_weights);
    CHECK(out.weights.w_hh == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.weights.w_hg == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.weights.w_gg == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.weights.w_gh == doctest::Approx(0.5).epsilon(1e-12));
    for (int j = 0; j < 4; ++j) {
        CHECK(out.h->values[j] == doctest::Approx(h->values[j]).epsilon(1e-12));
        CHECK(out.g->values[j] == doctest::Approx(g->values[j]).epsilon(1e-12));
    }
}

TEST_CASE("orthogonal basis vectors with identity projections") {
    ParamStoreT<double> ps;
    Rng rng(5);
    InteractionModuleT<double> inter(ps, "i", 2, InteractionKind::similarity, false, 0.01, rng);
    set_identity(ps.by_name("i.theta1").tensor);
    set_identity(ps.by_name("i.theta2").tensor);

    auto h = tensor_of<double>({2}, {1, 0});
    auto g = tensor_of<double>({2}, {0, 1});
    auto out = inter.forward(h, g);
    CHECK(out.weights.w_hh == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(out.weights.w_hg == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK(out.weights.w_gg == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(out.weights.w_gh == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK(out.h->values[0] == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(out.h->values[1] == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK(out.g->values[0] == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK(out.g->values[1] == doctest::Approx(0.7311).epsilon(1e-4));
}

TEST_CASE("matches the scripted interaction oracle on random inputs") {
    ParamStoreT<double> ps;
    Rng rng(7);
    InteractionModuleT<double> inter(ps, "i", 6, InteractionKind::similarity, false, 0.01, rng);
    for (int trial = 0; trial < 10; ++trial) {
        auto h = random_vec(rng, 6);
        auto g = random_vec(rng, 6);
        auto out = inter.forward(h, g);
        auto expect = oracle::similarity_interaction(h->values, g->values,
                                                     oracle::fetch_mat(ps, "i.theta1"),
                                                     oracle::fetch_mat(ps, "i.theta2"));
        CHECK(out.weights.w_hh == doctest::Approx(expect.w_hh).epsilon(1e-12));
        CHECK(out.weights.w_gh == doctest::Approx(expect.w_gh).epsilon(1e-12));
        for (int j = 0; j < 6; ++j) {
            CHECK(out.h->values[j] == doctest::Approx(expect.h[j]).epsilon(1e-10));
            CHECK(out.g->values[j] == doctest::Approx(expect.g[j]).epsilon(1e-10));
        }
    }
}

TEST_CASE("weight pairs always sum to one and outputs stay in the segment hull") {
    ParamStoreT<double> ps;
    Rng rng(11);
    InteractionModuleT<double> inter(ps, "i", 5, InteractionKind::similarity, false, 0.01, rng);
    for (int trial = 0; trial < 50; ++trial) {
        auto h = random_vec(rng, 5, 2.0);
        auto g = random_vec(rng, 5, 2.0);
        auto out = inter.forward(h, g);
        CHECK(out.weights.w_hh + out.weights.w_hg == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(out.weights.w_gg + out.weights.w_gh == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(out.weights.w_hh >= 0.0);
        CHECK(out.weights.w_gg >= 0.0);
        for (int j = 0; j < 5; ++j) {
            const double lo = std::min(h->values[j], g->values[j]) - 1e-12;
            const double hi = std::max(h->values[j], g->values[j]) + 1e-12;
            CHECK(out.h->values[j] >= lo);
            CHECK(out.h->values[j] <= hi);
            CHECK(out.g->values[j] >= lo);
            CHECK(out.g->values[j] <= hi);
        }
    }
}

TEST_CASE("extreme one-sided weights are admissible") {
    // pairs like (0, 1) and (0.051, 0.949) can occur; only the sum is pinned
    ParamStoreT<double> ps;
    Rng rng(13);
    InteractionModuleT<double> inter(ps, "i", 2, InteractionKind::similarity, false, 0.01, rng);
    set_identity(ps.by_name("i.theta1").tensor);
    set_identity(ps.by_name("i.theta2").tensor);
    auto h = tensor_of<double>({2}, {8.0, 0.0});
    auto g = tensor_of<double>({2}, {0.0, 0.1});
    auto out = inter.forward(h, g);
    CHECK(out.weights.w_hh > 0.999);
    CHECK(out.weights.w_hh + out.weights.w_hg == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(out.weights.w_gg + out.weights.w_gh == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gradients flow into both projections") {
    ParamStoreT<double> ps;
    Rng rng(17);
    InteractionModuleT<double> inter(ps, "i", 4, InteractionKind::similarity, false, 0.01, rng);
    auto h = random_vec(rng, 4);
    auto g = random_vec(rng, 4);
    auto report = grad_check(
        [&] {
            auto out = inter.forward(h, g);
            return add(sum_all(out.h), scale(sum_all(out.g), 0.5));
        },
        ps, 1e-6, 1e-4);
    CAPTURE(report.worst());
    CHECK(report.passed);
    // nonzero gradient reached both thetas
    ps.zero_grads();
    auto out = inter.forward(h, g);
    backward(add(sum_all(out.h), scale(sum_all(out.g), 0.5)));
    auto nonzero = [](const std::vector<double>& g_) {
        for (double v : g_)
            if (v != 0.0) return true;
        return false;
    };
    CHECK(nonzero(ps.by_name("i.theta1").tensor->grad));
    CHECK(nonzero(ps.by_name("i.theta2").tensor->grad));
}

TEST_CASE("untied variant uses four projections") {
    ParamStoreT<double> ps;
    Rng rng(19);
    InteractionModuleT<double> inter(ps, "i", 4, InteractionKind::similarity, true, 0.01, rng);
    CHECK(ps.has("i.theta3"));
    CHECK(ps.has("i.theta4"));
    auto h = random_vec(rng, 4);
    auto g = random_vec(rng, 4);
    auto out = inter.forward(h, g);
    CHECK(out.weights.w_hh + out.weights.w_hg == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("hard averages both sides") {
    ParamStoreT<double> ps;
    Rng rng(23);
    InteractionModuleT<double> inter(ps, "i", 2, InteractionKind::hard, false, 0.01, rng);
    auto out = inter.forward(tensor_of<double>({2}, {2, 0}), tensor_of<double>({2}, {0, 2}));
    CHECK(out.h->values == std::vector<double>{1, 1});
    CHECK(out.g->values == std::vector<double>{1, 1});
    CHECK_FALSE(out.has_weights);
}

TEST_CASE("none is the bitwise identity") {
    ParamStoreT<double> ps;
    Rng rng(29);
    InteractionModuleT<double> inter(ps, "i", 4, InteractionKind::none, false, 0.01, rng);
    auto h = random_vec(rng, 4);
    auto g = random_vec(rng, 4);
    auto out = inter.forward(h, g);
    CHECK(out.h.get() == h.get());
    CHECK(out.g.get() == g.get());
}

TEST_CASE("soft with zero logits equals hard") {
    ParamStoreT<double> ps;
    Rng rng(31);
    InteractionModuleT<double> soft(ps, "s", 3, InteractionKind::soft, false, 0.01, rng);
    ParamStoreT<double> ps2;
    InteractionModuleT<double> hard(ps2, "h", 3, InteractionKind::hard, false, 0.01, rng);
    auto h = random_vec(rng, 3);
    auto g = random_vec(rng, 3);
    auto a = soft.forward(h, g);
    auto b = hard.forward(h, g);
    for (int j = 0; j < 3; ++j) {
        CHECK(a.h->values[j] == doctest::Approx(b.h->values[j]).epsilon(1e-12));
        CHECK(a.g->values[j] == doctest::Approx(b.g->values[j]).epsilon(1e-12));
    }
}

TEST_CASE("mlp splits its output and text/graph share one side") {
    ParamStoreT<double> ps;
    Rng rng(37);
    InteractionModuleT<double> mlp(ps, "m", 3, InteractionKind::mlp, false, 0.01, rng);
    auto h = random_vec(rng, 3);
    auto g = random_vec(rng, 3);
    auto out = mlp.forward(h, g);
    CHECK(out.h->shape == Shape{3});
    CHECK(out.g->shape == Shape{3});

    InteractionModuleT<double> text(ps, "t", 3, InteractionKind::text, false, 0.01, rng);
    auto t = text.forward(h, g);
    CHECK(t.h->values == t.g->values);
    const auto expect = oracle::add(oracle::vecmat(h->values, oracle::fetch_mat(ps, "t.lin_w")),
                                    oracle::fetch_vec(ps, "t.lin_b"));
    for (int j = 0; j < 3; ++j) CHECK(t.h->values[j] == doctest::Approx(expect[j]).epsilon(1e-12));

    InteractionModuleT<double> graph(ps, "g", 3, InteractionKind::graph, false, 0.01, rng);
    auto gr = graph.forward(h, g);
    const auto expect_g = oracle::add(oracle::vecmat(g->values, oracle::fetch_mat(ps, "g.lin_w")),
                                      oracle::fetch_vec(ps, "g.lin_b"));
    for (int j = 0; j < 3; ++j) CHECK(gr.h->values[j] == doctest::Approx(expect_g[j]).epsilon(1e-12));
}

}  // TEST_SUITE
