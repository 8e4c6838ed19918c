#include <cmath>

#include "doctest.h"
#include "sve/error.hpp"
#include "sve/layer.hpp"

using namespace sve;

namespace {

Tensor random_matrix(Rng& rng, std::size_t m, std::size_t n) {
    std::vector<double> v(m * n);
    for (double& x : v) x = rng.uniform_range(-1.0, 1.0);
    return Tensor::from_data({m, n}, std::move(v));
}

} // namespace

TEST_CASE("zero-noise wrap copies the pretrained spectrum exactly") {
    Rng rng(3);
    Tensor w = random_matrix(rng, 6, 4);
    SveConfig cfg;
    cfg.n_members = 3;
    cfg.sigma_init = 0.0;
    Rng wrap_rng(10);
    SveLinear layer = SveLinear::wrap(w, std::nullopt, cfg, wrap_rng, "l0");
    for (int m = 0; m < 3; ++m) {
        CHECK(layer.sigma_member(m).data() == layer.sigma_pretrained().data());
    }
}

TEST_CASE("multiplicative init stays within 10 sigma_init of the spectrum on a fixed seed") {
    Rng rng(3);
    Tensor w = random_matrix(rng, 8, 8);
    SveConfig cfg;
    cfg.n_members = 4;
    cfg.sigma_init = 0.01;
    Rng wrap_rng(2718);
    SveLinear layer = SveLinear::wrap(w, std::nullopt, cfg, wrap_rng, "l0");
    const auto& pre = layer.sigma_pretrained().data();
    for (int m = 0; m < 4; ++m) {
        const auto& s = layer.sigma_member(m).data();
        for (std::size_t i = 0; i < s.size(); ++i) {
            CHECK(s[i] >= 0.9 * pre[i]);
            CHECK(s[i] <= 1.1 * pre[i]);
        }
    }
}

TEST_CASE("init preserves descending order when gaps exceed the noise scale") {
    Tensor w = Tensor::from_data({3, 3}, {10, 0, 0, 0, 5, 0, 0, 0, 1});
    SveConfig cfg;
    cfg.n_members = 4;
    cfg.sigma_init = 0.01;
    Rng rng(12);
    SveLinear layer = SveLinear::wrap(w, std::nullopt, cfg, rng, "diag");
    for (int m = 0; m < 4; ++m) {
        const auto& s = layer.sigma_member(m).data();
        CHECK(s[0] > s[1]);
        CHECK(s[1] > s[2]);
    }
}

TEST_CASE("wrap is deterministic in (w, cfg, seed) and members differ") {
    Rng rng(5);
    Tensor w = random_matrix(rng, 5, 7);
    SveConfig cfg;
    cfg.n_members = 2;
    cfg.sigma_init = 0.01;
    Rng r1(44), r2(44);
    SveLinear a = SveLinear::wrap(w, std::nullopt, cfg, r1, "x");
    SveLinear b = SveLinear::wrap(w, std::nullopt, cfg, r2, "x");
    CHECK(a.sigma_member(0).data() == b.sigma_member(0).data());
    CHECK(a.sigma_member(1).data() == b.sigma_member(1).data());
    CHECK(a.sigma_member(0).data() != a.sigma_member(1).data());
}

TEST_CASE("identity wrap with zero noise forwards exactly") {
    SveConfig cfg;
    cfg.n_members = 1;
    cfg.sigma_init = 0.0;
    Rng rng(1);
    SveLinear layer = SveLinear::wrap(Tensor::identity(2), std::nullopt, cfg, rng, "id");
    Tensor x = Tensor::from_data({2, 1}, {1, 0});
    Tensor y = layer.forward(0, x);
    CHECK(y.at(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(y.at(1, 0) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("zeroed sigmas forward to the bias") {
    Rng rng(6);
    Tensor w = random_matrix(rng, 4, 3);
    Tensor bias = Tensor::from_data({4}, {1, 2, 3, 4});
    SveConfig cfg;
    cfg.n_members = 1;
    cfg.sigma_init = 0.0;
    Rng wrap_rng(9);
    SveLinear layer = SveLinear::wrap(w, bias, cfg, wrap_rng, "b");
    for (double& s : layer.sigma_member(0).mutable_data()) s = 0.0;
    Tensor y = layer.forward(0, Tensor::from_data({3, 2}, {1, -1, 2, 0.5, -3, 2}));
    for (std::size_t j = 0; j < 2; ++j) {
        for (std::size_t i = 0; i < 4; ++i) CHECK(y.at(i, j) == bias.data()[i]);
    }
}

TEST_CASE("factored forward equals the materialized weight to 1e-12") {
    Rng rng(14);
    Tensor w = random_matrix(rng, 6, 9);
    Tensor bias = random_matrix(rng, 6, 1).detached_copy();
    Tensor bias_vec = Tensor::from_data({6}, bias.data());
    SveConfig cfg;
    cfg.n_members = 3;
    cfg.sigma_init = 0.02;
    Rng wrap_rng(123);
    SveLinear layer = SveLinear::wrap(w, bias_vec, cfg, wrap_rng, "f");
    Tensor x = random_matrix(rng, 9, 5);
    for (int m = 0; m < 3; ++m) {
        SvdFactors member_factors{layer.u(), layer.sigma_member(m).data(), layer.vt()};
        Tensor materialized = reconstruct(member_factors);
        Tensor expected = add_col_broadcast(matmul(materialized, x), bias_vec);
        Tensor got = layer.forward(m, x);
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(std::fabs(got.data()[i] - expected.data()[i]) <= 1e-12);
        }
    }
}

TEST_CASE("forward gradient flows only into the chosen member sigma") {
    Rng rng(21);
    Tensor w = random_matrix(rng, 4, 4);
    SveConfig cfg;
    cfg.n_members = 2;
    cfg.sigma_init = 0.01;
    Rng wrap_rng(31);
    SveLinear layer = SveLinear::wrap(w, std::nullopt, cfg, wrap_rng, "g");
    Tensor x = random_matrix(rng, 4, 3);
    Tensor loss = softmax_cross_entropy(transpose(layer.forward(0, x)), {0, 1, 2});
    loss.backward();
    CHECK(layer.sigma_member(0).has_grad());
    CHECK(!layer.sigma_member(1).has_grad());
    CHECK(!layer.u().has_grad());
    CHECK(!layer.vt().has_grad());

    // And the sigma gradient agrees with finite differences.
    Rng probe_rng(77);
    auto f = [&]() { return softmax_cross_entropy(transpose(layer.forward(0, x)), {0, 1, 2}); };
    CHECK(grad_check(f, {layer.sigma_member(0)}, 1e-5, 4, probe_rng) <= 1e-6);
}

TEST_CASE("member index out of range") {
    Rng rng(2);
    SveConfig cfg;
    SveLinear layer = SveLinear::wrap(Tensor::identity(3), std::nullopt, cfg, rng, "idx");
    CHECK_THROWS_AS(layer.forward(1, Tensor::zeros({3, 1})), IndexError);
}

TEST_CASE("project_nonneg clamps negatives and keeps the rest") {
    Rng rng(4);
    SveConfig cfg;
    SveLinear layer = SveLinear::wrap(Tensor::identity(2), std::nullopt, cfg, rng, "p");
    layer.sigma_member(0).mutable_data() = {-0.1, 2.0};
    layer.project_nonneg();
    CHECK(layer.sigma_member(0).data() == std::vector<double>{0.0, 2.0});
    layer.project_nonneg();
    CHECK(layer.sigma_member(0).data() == std::vector<double>{0.0, 2.0});
}

TEST_CASE("overhead accounting") {
    // Transformer layer set at d = 768: q,k,v,o plus two MLP matrices.
    std::vector<std::pair<std::size_t, std::size_t>> shapes = {
        {768, 768}, {768, 768}, {768, 768}, {768, 768}, {3072, 768}, {768, 3072}};
    OverheadStats st = overhead_stats(shapes, 768, 4, {768, 100});
    CHECK(st.overhead_fraction_approx == doctest::Approx(3.0 / 1536.0).epsilon(1e-15));
    CHECK(st.overhead_fraction_approx * 100.0 == doctest::Approx(0.1953125).epsilon(1e-12));

    OverheadStats single = overhead_stats(shapes, 768, 1, {768, 100});
    CHECK(single.overhead_fraction_approx == 0.0);
    CHECK(single.overhead_fraction_exact == 0.0);

    // One 8x4 layer, M = 3: 3 * min(8,4) = 12 trainable sigma parameters.
    OverheadStats small = overhead_stats({{8, 4}}, 4, 3, {4, 2});
    CHECK(small.trainable_per_member == 4);
    CHECK(3 * small.trainable_per_member == 12);
    CHECK(small.base_params == 32);
    CHECK(small.head_params == 3 * (4 * 2 + 2));
    CHECK(small.total_trainable == 12 + 30);
}

TEST_CASE("diversity report") {
    Rng rng(8);
    Tensor w = random_matrix(rng, 5, 5);
    SveConfig cfg;
    cfg.n_members = 2;
    cfg.sigma_init = 0.0;
    Rng wrap_rng(80);
    SveLinear layer = SveLinear::wrap(w, std::nullopt, cfg, wrap_rng, "d");

    DiversityTable zero = diversity_report(layer, 5);
    for (const auto& row : zero.rows) {
        for (double pct : row.pct_change) CHECK(pct == 0.0);
    }

    auto& s0 = layer.sigma_member(0).mutable_data();
    for (std::size_t i = 0; i < s0.size(); ++i) s0[i] = 1.1 * layer.sigma_pretrained().data()[i];
    DiversityTable bumped = diversity_report(layer, 5);
    for (const auto& row : bumped.rows) {
        CHECK(row.pct_change[0] == doctest::Approx(10.0).epsilon(1e-9));
        CHECK(row.pct_change[1] == 0.0);
    }

    CHECK_THROWS_AS(diversity_report(layer, 6), IndexError);
}

TEST_CASE("layer name glob matching") {
    CHECK(layer_name_matches("attn_q", {"*"}));
    CHECK(layer_name_matches("attn_q", {"attn_*"}));
    CHECK(!layer_name_matches("fc1", {"attn_*"}));
    CHECK(layer_name_matches("fc1", {"attn_*", "fc*"}));
}

TEST_CASE("sve config validation") {
    SveConfig bad;
    bad.sigma_init = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.sigma_init = -0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.sigma_init = 0.01;
    bad.n_members = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
