#include <cmath>
#include <limits>

#include "doctest.h"
#include "oracles.hpp"
#include "sve/error.hpp"
#include "sve/tensor.hpp"

using namespace sve;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, bool requires_grad = false, double scale = 1.0) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform_range(-scale, scale);
    return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

oracle::Mat to_mat(const Tensor& t) {
    oracle::Mat m(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
    return m;
}

} // namespace

TEST_CASE("matmul identity and annihilation") {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor out = matmul(Tensor::identity(2), a);
    CHECK(out.data() == std::vector<double>{1, 2, 3, 4});

    Tensor p = Tensor::from_data({2, 2}, {1, 0, 0, 0});
    Tensor q = Tensor::from_data({2, 1}, {0, 5});
    Tensor z = matmul(p, q);
    CHECK(z.data() == std::vector<double>{0, 0});
}

TEST_CASE("matmul matches the triple-loop oracle") {
    Rng rng(100);
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {4, 2});
    Tensor c = matmul(a, b);
    const oracle::Mat ref = oracle::matmul_ref(to_mat(a), to_mat(b));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) CHECK(std::fabs(c.at(i, j) - ref[i][j]) <= 1e-12);
}

TEST_CASE("matmul rejects mismatched inner dimensions naming both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), DimensionError);
}

TEST_CASE("matmul re-association error stays tiny on 8x8 triples") {
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor a = random_tensor(rng, {8, 8});
        Tensor b = random_tensor(rng, {8, 8});
        Tensor c = random_tensor(rng, {8, 8});
        Tensor left = matmul(matmul(a, b), c);
        Tensor right = matmul(a, matmul(b, c));
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < left.size(); ++i) {
            const double d = left.data()[i] - right.data()[i];
            num += d * d;
            den += left.data()[i] * left.data()[i];
        }
        CHECK(std::sqrt(num) <= 1e-10 * std::sqrt(den));
    }
}

TEST_CASE("elementwise basics") {
    Tensor r = relu(Tensor::from_data({3}, {-1, 0, 2}));
    CHECK(r.data() == std::vector<double>{0, 0, 2});

    Tensor m = mul(Tensor::from_data({2}, {2, 3}), Tensor::from_data({2}, {4, 5}));
    CHECK(m.data() == std::vector<double>{8, 15});

    CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);

    Tensor c = clamp_min(Tensor::from_data({3}, {-0.5, 0.0, 0.5}), 0.0);
    CHECK(c.data() == std::vector<double>{0, 0, 0.5});
}

TEST_CASE("gelu_tanh matches the direct formula at -2..2") {
    for (double x : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
        Tensor g = gelu_tanh(Tensor::scalar(x));
        CHECK(std::fabs(g.value() - oracle::gelu_tanh_ref(x)) <= 1e-12);
    }
}

TEST_CASE("softmax cross entropy: uniform, saturated, oracle") {
    Tensor uniform = Tensor::zeros({1, 4});
    CHECK(softmax_cross_entropy(uniform, {0}).value() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Tensor saturated = Tensor::from_data({1, 3}, {1e6, 0.0, 0.0});
    CHECK(softmax_cross_entropy(saturated, {0}).value() <= 1e-12);

    Rng rng(55);
    Tensor logits = random_tensor(rng, {5, 3}, false, 3.0);
    const double got = softmax_cross_entropy(logits, {0, 1, 2, 0, 1}).value();
    const double want = oracle::softmax_ce_ref(to_mat(logits), {0, 1, 2, 0, 1});
    CHECK(std::fabs(got - want) <= 1e-10);

    CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 1, 3, 0, 1}), IndexError);
}

TEST_CASE("cross entropy backward is (softmax - onehot)/B") {
    Tensor logits = Tensor::from_data({2, 3}, {0.3, -0.1, 0.5, 1.0, 0.0, -1.0}, true);
    Tensor loss = softmax_cross_entropy(logits, {2, 0});
    loss.backward();
    Tensor probs = softmax_rows(logits.detached_copy());
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double expected = probs.at(i, j);
            if ((i == 0 && j == 2) || (i == 1 && j == 0)) expected -= 1.0;
            expected /= 2.0;
            CHECK(logits.grad()[i * 3 + j] == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("grad_check trivial cases") {
    Rng rng(1);
    // f(theta) = theta^2 at theta = 3.
    Tensor theta = Tensor::from_data({1}, {3.0}, true);
    auto square = [&theta]() { return mul(theta, theta); };
    CHECK(grad_check(square, {theta}, 1e-5, 1, rng) <= 1e-9);

    // Constant f: both gradients vanish under the guarded denominator.
    Tensor unused = Tensor::from_data({4}, {1, 2, 3, 4}, true);
    auto constant = []() { return Tensor::scalar(7.0); };
    CHECK(grad_check(constant, {unused}, 1e-5, 4, rng) == 0.0);
}

TEST_CASE("grad_check covers every differentiable op") {
    Rng rng(909);
    auto check_close = [&rng](const std::function<Tensor()>& f, const std::vector<Tensor>& params) {
        CHECK(grad_check(f, params, 1e-5, 40, rng) <= 1e-6);
    };

    Tensor a = random_tensor(rng, {4, 3}, true);
    Tensor b = random_tensor(rng, {3, 5}, true);
    check_close([&]() { return softmax_cross_entropy(matmul(a, b), {0, 1, 2, 3}); }, {a, b});

    Tensor c = random_tensor(rng, {3, 4}, true);
    Tensor d = random_tensor(rng, {3, 4}, true);
    check_close([&]() { return softmax_cross_entropy(mul(add(c, d), sub(c, d)), {0, 1, 2}); }, {c, d});

    Tensor e = random_tensor(rng, {3, 4}, true, 2.0);
    check_close([&]() { return softmax_cross_entropy(gelu_tanh(e), {1, 0, 2}); }, {e});
    check_close([&]() { return softmax_cross_entropy(relu(scale(e, 1.7)), {1, 0, 2}); }, {e});
    check_close([&]() { return softmax_cross_entropy(clamp_min(e, 0.25), {1, 0, 2}); }, {e});

    Tensor vec = random_tensor(rng, {3}, true);
    Tensor mat = random_tensor(rng, {3, 4}, true);
    check_close([&]() { return softmax_cross_entropy(row_scale(vec, mat), {0, 1, 2}); }, {vec, mat});
    check_close([&]() { return softmax_cross_entropy(add_col_broadcast(mat, vec), {0, 1, 2}); },
                {mat, vec});
    check_close([&]() { return softmax_cross_entropy(transpose(softmax_rows(mat)), {0, 1, 2, 0}); },
                {mat});

    Tensor gain = random_tensor(rng, {3}, true);
    Tensor bias = random_tensor(rng, {3}, true);
    check_close(
        [&]() {
            return softmax_cross_entropy(transpose(layer_norm_cols(mat, gain, bias)), {0, 1, 2, 0});
        },
        {mat, gain, bias});

    Tensor wide = random_tensor(rng, {4, 6}, true);
    check_close(
        [&]() {
            Tensor left = col_slice(wide, 0, 3);
            Tensor right = col_slice(wide, 3, 3);
            Tensor top = row_slice(wide, 0, 2);
            Tensor bottom = row_slice(wide, 2, 2);
            Tensor stacked = add(concat_cols({left, right}), concat_rows({top, bottom}));
            return softmax_cross_entropy(stacked, {0, 1, 2, 3});
        },
        {wide});

    std::vector<std::size_t> perm;
    for (std::size_t i = 0; i < 12; ++i) perm.push_back((i * 5) % 12);
    check_close(
        [&]() { return softmax_cross_entropy(reorder(mat, {4, 3}, perm), {0, 1, 2, 0}); }, {mat});
}

TEST_CASE("grad_check rejects non-finite evaluations") {
    Rng rng(2);
    Tensor theta = Tensor::from_data({1}, {1.0}, true);
    auto f = [&]() {
        Tensor t = mul(theta, Tensor::scalar(std::numeric_limits<double>::infinity()));
        return t;
    };
    CHECK_THROWS_AS(grad_check(f, {theta}, 1e-5, 1, rng), NumericError);
}

TEST_CASE("gaussian op: zero std and determinism") {
    Rng rng(8);
    Tensor z = gaussian(rng, {3, 2}, 0.0, 0.0);
    for (double v : z.data()) CHECK(v == 0.0);

    Rng r1(99), r2(99);
    Tensor g1 = gaussian(r1, {4}, 1.0, 0.5);
    Tensor g2 = gaussian(r2, {4}, 1.0, 0.5);
    CHECK(g1.data() == g2.data());
}

TEST_CASE("dropout masks and scales, zero rate is identity") {
    Rng rng(15);
    Tensor a = Tensor::full({1000}, 1.0, true);
    Tensor d = dropout(a, 0.25, rng);
    std::size_t zeros = 0;
    for (double v : d.data()) {
        const bool kept = v != 0.0;
        if (!kept) ++zeros;
        else CHECK(v == doctest::Approx(1.0 / 0.75));
    }
    CHECK(zeros > 150);
    CHECK(zeros < 350);

    Tensor same = dropout(a, 0.0, rng);
    CHECK(same.node() == a.node());
}

TEST_CASE("frozen tensors never allocate gradients") {
    Tensor frozen = Tensor::from_data({2, 2}, {1, 2, 3, 4}, false);
    Tensor live = Tensor::from_data({2, 2}, {1, 1, 1, 1}, true);
    Tensor loss = softmax_cross_entropy(matmul(frozen, live), {0, 1});
    loss.backward();
    CHECK(live.has_grad());
    CHECK(!frozen.has_grad());
}

TEST_CASE("gradient accumulates across reuse of one tensor") {
    Tensor x = Tensor::from_data({1}, {2.0}, true);
    Tensor y = add(mul(x, x), mul(x, x)); // 2 x^2, dy/dx = 4x = 8
    y.backward();
    CHECK(x.grad()[0] == doctest::Approx(8.0).epsilon(1e-12));
}
