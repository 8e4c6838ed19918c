#include <benchmark/benchmark.h>

#include "sve/metrics.hpp"
#include "sve/svd.hpp"
#include "sve/train.hpp"

namespace {

sve::Tensor random_matrix(sve::Rng& rng, std::size_t m, std::size_t n) {
    std::vector<double> v(m * n);
    for (double& x : v) x = rng.uniform_range(-1.0, 1.0);
    return sve::Tensor::from_data({m, n}, std::move(v));
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    sve::Rng rng(1);
    sve::Tensor a = random_matrix(rng, n, n);
    sve::Tensor b = random_matrix(rng, n, n);
    for (auto _ : state) {
        sve::Tensor c = sve::matmul(a, b);
        benchmark::DoNotOptimize(c.data().data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 128)->Complexity();

void BM_Svd(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    sve::Rng rng(2);
    sve::Tensor w = random_matrix(rng, n, n);
    for (auto _ : state) {
        sve::SvdFactors f = sve::svd(w);
        benchmark::DoNotOptimize(f.sigma.data());
    }
}
BENCHMARK(BM_Svd)->Arg(16)->Arg(32)->Arg(64);

void BM_SveForward(benchmark::State& state) {
    sve::Rng rng(3);
    sve::Tensor w = random_matrix(rng, 64, 64);
    sve::SveConfig cfg;
    cfg.n_members = 4;
    sve::Rng wrap_rng(4);
    sve::SveLinear layer = sve::SveLinear::wrap(w, std::nullopt, cfg, wrap_rng, "bench");
    sve::Tensor x = random_matrix(rng, 64, 32);
    for (auto _ : state) {
        sve::Tensor y = layer.forward(0, x);
        benchmark::DoNotOptimize(y.data().data());
    }
}
BENCHMARK(BM_SveForward);

void BM_TrainStep(benchmark::State& state) {
    const int members = static_cast<int>(state.range(0));
    sve::Dataset train = sve::make_clusters(4, 64, 16, 0.3, 5);
    sve::ModelSpec spec;
    spec.arch = "mlp";
    spec.mlp_dims = {16, 48, 48};
    spec.n_classes = 4;
    spec.members = members;
    spec.method = sve::Method::Sve;
    spec.sigma_init = 0.01;
    sve::TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 64;
    cfg.lr = 0.01;
    cfg.method = sve::Method::Sve;
    cfg.members = members;
    for (auto _ : state) {
        sve::Rng rng(6);
        sve::EnsembleModel model = sve::build_model(spec, std::nullopt, rng);
        sve::TrainHistory h = sve::train_joint(model, train, nullptr, cfg);
        benchmark::DoNotOptimize(h.step_losses.data());
    }
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(4);

void BM_Ece(benchmark::State& state) {
    sve::Rng rng(7);
    const std::size_t n = 10000, c = 10;
    std::vector<double> data(n * c);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            data[i * c + j] = rng.uniform_pos();
            sum += data[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) data[i * c + j] /= sum;
        labels[i] = static_cast<int>(rng.uniform_index(c));
    }
    sve::Tensor probs = sve::Tensor::from_data({n, c}, std::move(data));
    for (auto _ : state) {
        benchmark::DoNotOptimize(sve::ece(probs, labels, 15));
    }
}
BENCHMARK(BM_Ece);

} // namespace

BENCHMARK_MAIN();
