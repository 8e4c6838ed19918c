#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "sve/error.hpp"
#include "sve/train.hpp"

using namespace sve;

namespace {

ModelSpec mlp_spec(Method method, int members, double sigma_init, std::size_t dim = 4,
                   std::size_t n_classes = 3) {
    ModelSpec spec;
    spec.arch = "mlp";
    spec.mlp_dims = {dim, 12};
    spec.n_classes = n_classes;
    spec.members = members;
    spec.method = method;
    spec.sigma_init = sigma_init;
    return spec;
}

TrainConfig quick_cfg(Method method, int members, double sigma_init) {
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 16;
    cfg.lr = 5e-3;
    cfg.weight_decay = 0.01;
    cfg.schedule = Schedule::Cosine;
    cfg.warmup_fraction = 0.1;
    cfg.seed = 9;
    cfg.method = method;
    cfg.members = members;
    cfg.sigma_init = sigma_init;
    return cfg;
}

} // namespace

TEST_CASE("lr schedule: warmup endpoints and the cosine midpoint") {
    TrainConfig cfg;
    cfg.lr = 0.4;
    cfg.warmup_fraction = 0.2;
    cfg.schedule = Schedule::Cosine;
    const long long total = 100;
    CHECK(lr_at(0, total, cfg) == 0.0);
    CHECK(lr_at(20, total, cfg) == cfg.lr); // end of warmup hits lr exactly
    // decay spans steps 20..100; its midpoint must halve the rate
    CHECK(std::fabs(lr_at(60, total, cfg) - cfg.lr / 2.0) <= 1e-12);
    CHECK(lr_at(100, total, cfg) == doctest::Approx(0.0).epsilon(1e-15));

    cfg.schedule = Schedule::Linear;
    CHECK(std::fabs(lr_at(60, total, cfg) - cfg.lr / 2.0) <= 1e-15);
    cfg.schedule = Schedule::Constant;
    CHECK(lr_at(60, total, cfg) == cfg.lr);
    CHECK_THROWS_AS(lr_at(-1, total, cfg), ConfigError);
}

TEST_CASE("adamw matches a brute-force reimplementation for 50 steps") {
    // 10-parameter quadratic bowl, decay on.
    Tensor theta = Tensor::from_data({10}, {1, -2, 3, -4, 5, -6, 7, -8, 9, -10}, true);
    std::vector<double> ref_theta = theta.data();
    oracle::AdamWRef ref(10);
    AdamW opt({{theta, true}});

    Rng rng(44);
    for (int step = 0; step < 50; ++step) {
        std::vector<double> grad(10);
        for (std::size_t i = 0; i < 10; ++i) grad[i] = 0.5 * ref_theta[i] + rng.uniform_range(-0.1, 0.1);
        // Drive the production optimizer with the identical gradient.
        theta.zero_grad();
        theta.node()->ensure_grad();
        theta.node()->grad = grad;
        opt.step({{theta, true}}, 0.01, 0.05);
        ref.step(ref_theta, grad, 0.01, 0.05);
        for (std::size_t i = 0; i < 10; ++i) {
            CHECK(std::fabs(theta.data()[i] - ref_theta[i]) <= 1e-12);
        }
    }
}

TEST_CASE("gradient clipping rescales a huge gradient to the bound") {
    Tensor p = Tensor::from_data({3}, {0, 0, 0}, true);
    p.node()->ensure_grad();
    p.node()->grad = {3000.0, 4000.0, 0.0};
    const double pre = clip_global_norm({{p, false}}, 1.0);
    CHECK(pre == doctest::Approx(5000.0).epsilon(1e-12));
    double post = 0.0;
    for (double g : p.grad()) post += g * g;
    CHECK(std::sqrt(post) == doctest::Approx(1.0).epsilon(1e-9));

    // Small gradients pass through untouched.
    p.node()->grad = {0.1, 0.2, 0.0};
    clip_global_norm({{p, false}}, 1.0);
    CHECK(p.grad() == std::vector<double>{0.1, 0.2, 0.0});
}

TEST_CASE("sve M=1 and svf produce identical loss curves step by step") {
    Dataset train = make_clusters(3, 80, 4, 0.3, 2);
    // 240 samples, batch 12 -> 20 steps/epoch; 10 epochs -> 200 steps.
    TrainConfig cfg = quick_cfg(Method::Sve, 1, 0.01);
    cfg.epochs = 10;
    cfg.batch_size = 12;

    Rng r1(cfg.seed);
    EnsembleModel sve_model = build_model(mlp_spec(Method::Sve, 1, 0.01), std::nullopt, r1);
    TrainHistory sve_hist = train_joint(sve_model, train, nullptr, cfg);

    TrainConfig svf_cfg = cfg;
    svf_cfg.method = Method::Svf;
    Rng r2(cfg.seed);
    EnsembleModel svf_model = build_model(mlp_spec(Method::Svf, 1, 0.01), std::nullopt, r2);
    TrainHistory svf_hist = train_joint(svf_model, train, nullptr, svf_cfg);

    REQUIRE(sve_hist.step_losses.size() == 200);
    REQUIRE(svf_hist.step_losses.size() == 200);
    for (std::size_t i = 0; i < 200; ++i) {
        CHECK(std::fabs(sve_hist.step_losses[i] - svf_hist.step_losses[i]) <= 1e-12);
    }
}

TEST_CASE("zero learning rate leaves parameters unchanged and loss flat") {
    Dataset train = make_clusters(3, 30, 4, 0.3, 3);
    TrainConfig cfg = quick_cfg(Method::Sve, 2, 0.01);
    cfg.batch_size = 15; // divides 90 so epoch means are partition-invariant
    cfg.lr = 0.0;
    cfg.weight_decay = 0.0;
    Rng rng(cfg.seed);
    EnsembleModel model = build_model(mlp_spec(Method::Sve, 2, 0.01), std::nullopt, rng);
    const std::vector<double> sigma_before = model.layers[0].sve->sigma_member(0).data();
    TrainHistory hist = train_joint(model, train, nullptr, cfg);
    CHECK(model.layers[0].sve->sigma_member(0).data() == sigma_before);
    // Same batch order every epoch? No; but epoch means stay equal since
    // nothing moves.
    for (std::size_t e = 1; e < hist.epochs.size(); ++e) {
        CHECK(hist.epochs[e].train_loss == doctest::Approx(hist.epochs[0].train_loss).epsilon(1e-12));
    }
}

TEST_CASE("joint loss at sigma_init=0 equals the single-member loss at step 0") {
    Dataset train = make_clusters(3, 40, 4, 0.3, 4);
    TrainConfig cfg4 = quick_cfg(Method::Sve, 4, 0.0);
    cfg4.epochs = 1;
    Rng r4(cfg4.seed);
    EnsembleModel m4 = build_model(mlp_spec(Method::Sve, 4, 0.0), std::nullopt, r4);
    TrainHistory h4 = train_joint(m4, train, nullptr, cfg4);

    TrainConfig cfg1 = quick_cfg(Method::Sve, 1, 0.0);
    cfg1.epochs = 1;
    Rng r1(cfg1.seed);
    EnsembleModel m1 = build_model(mlp_spec(Method::Sve, 1, 0.0), std::nullopt, r1);
    TrainHistory h1 = train_joint(m1, train, nullptr, cfg1);

    CHECK(h4.step_losses[0] == h1.step_losses[0]);
}

TEST_CASE("frozen arrays stay bitwise fixed through training") {
    Dataset train = make_clusters(3, 60, 4, 0.3, 5);
    TrainConfig cfg = quick_cfg(Method::Sve, 2, 0.01);
    Rng rng(cfg.seed);
    EnsembleModel model = build_model(mlp_spec(Method::Sve, 2, 0.01), std::nullopt, rng);
    const auto& layer = *model.layers[0].sve;
    const std::vector<double> u = layer.u().data();
    const std::vector<double> vt = layer.vt().data();
    const std::vector<double> pre = layer.sigma_pretrained().data();
    const std::vector<double> bias = layer.bias()->data();
    train_joint(model, train, nullptr, cfg);
    CHECK(layer.u().data() == u);
    CHECK(layer.vt().data() == vt);
    CHECK(layer.sigma_pretrained().data() == pre);
    CHECK(layer.bias()->data() == bias);
}

TEST_CASE("sigma entries are non-negative after every step of a real run") {
    Dataset train = make_clusters(4, 50, 4, 0.4, 6);
    ModelSpec spec = mlp_spec(Method::Sve, 3, 0.01, 4, 4);
    TrainConfig cfg = quick_cfg(Method::Sve, 3, 0.01);
    cfg.epochs = 8;
    cfg.lr = 0.05; // aggressive on purpose so projection matters
    Rng rng(cfg.seed);
    EnsembleModel model = build_model(spec, std::nullopt, rng);
    train_joint(model, train, nullptr, cfg);
    double min_sigma = 1e300;
    for (const auto& layer : model.layers) {
        for (int m = 0; m < layer.sve->members(); ++m) {
            for (double s : layer.sve->sigma_member(m).data()) min_sigma = std::min(min_sigma, s);
        }
    }
    CHECK(min_sigma >= 0.0);
}

TEST_CASE("training is deterministic in (config, seed)") {
    Dataset train = make_clusters(3, 60, 4, 0.3, 8);
    Dataset test = make_clusters(3, 30, 4, 0.3, 9);
    TrainConfig cfg = quick_cfg(Method::Sve, 2, 0.01);
    auto run = [&]() {
        Rng rng(cfg.seed);
        EnsembleModel model = build_model(mlp_spec(Method::Sve, 2, 0.01), std::nullopt, rng);
        TrainHistory h = train_joint(model, train, &test, cfg);
        return std::make_pair(h.step_losses, h.epochs.back().eval->accuracy);
    };
    auto [losses1, acc1] = run();
    auto [losses2, acc2] = run();
    CHECK(losses1 == losses2);
    CHECK(acc1 == acc2);
}

TEST_CASE("pretrain: zero epochs returns the initialization, runs learn the source") {
    ClusterSpec spec;
    spec.n_classes = 4;
    spec.n_per_blob = 60;
    spec.dim = 4;
    spec.spread = 0.3;
    spec.seed = 10;
    Dataset source = make_clusters(spec);

    TrainConfig cfg = quick_cfg(Method::Single, 1, 0.0);
    cfg.epochs = 0;
    BaseWeights init = pretrain_base(mlp_spec(Method::Single, 1, 0.0, 4, 4), source, cfg);
    Rng rng(cfg.seed);
    EnsembleModel fresh = build_model(mlp_spec(Method::Single, 1, 0.0, 4, 4), std::nullopt, rng);
    CHECK(init.weights[0].data() == fresh.layers[0].dense->w().data());

    cfg.epochs = 12;
    cfg.lr = 2e-3;
    EnsembleModel trained;
    pretrain_base(mlp_spec(Method::Single, 1, 0.0, 4, 4), source, cfg, &trained);
    const double acc = evaluate_model(trained, source).accuracy;
    CHECK(acc > 1.5 * (1.0 / 4.0)); // well above chance

    // Bitwise repeatability.
    BaseWeights again = pretrain_base(mlp_spec(Method::Single, 1, 0.0, 4, 4), source, cfg);
    BaseWeights again2 = pretrain_base(mlp_spec(Method::Single, 1, 0.0, 4, 4), source, cfg);
    CHECK(again.weights[0].data() == again2.weights[0].data());
    CHECK(again.biases[0].data() == again2.biases[0].data());
}

TEST_CASE("deep ensemble: members differ and the average is competitive") {
    Dataset train = make_clusters(3, 80, 4, 0.35, 12);
    Dataset test = make_clusters(3, 60, 4, 0.35, 13);
    TrainConfig cfg = quick_cfg(Method::DeepEnsemble, 3, 0.0);
    cfg.epochs = 8;
    cfg.lr = 2e-3;
    std::vector<EnsembleModel> members =
        train_deep_ensemble(mlp_spec(Method::Single, 1, 0.0), std::nullopt, train, nullptr, cfg, 3);
    REQUIRE(members.size() == 3);

    double max_diff = 0.0;
    for (std::size_t i = 0; i < members[0].layers[0].dense->w().size(); ++i) {
        max_diff = std::max(max_diff, std::fabs(members[0].layers[0].dense->w().data()[i] -
                                                members[1].layers[0].dense->w().data()[i]));
    }
    CHECK(max_diff > 0.0);

    double min_member_acc = 1.0;
    for (const auto& m : members) min_member_acc = std::min(min_member_acc, evaluate_model(m, test).accuracy);
    const double ens_acc =
        evaluate_models({&members[0], &members[1], &members[2]}, test).accuracy;
    CHECK(ens_acc >= min_member_acc);
}

TEST_CASE("a deep ensemble of one is the single baseline") {
    Dataset train = make_clusters(3, 40, 4, 0.3, 19);
    TrainConfig cfg = quick_cfg(Method::DeepEnsemble, 1, 0.0);
    cfg.lr = 2e-3;
    std::vector<TrainHistory> hist;
    auto members =
        train_deep_ensemble(mlp_spec(Method::Single, 1, 0.0), std::nullopt, train, nullptr, cfg, 1, &hist);

    TrainConfig single_cfg = cfg;
    single_cfg.method = Method::Single;
    Rng rng(cfg.seed);
    EnsembleModel single = build_model(mlp_spec(Method::Single, 1, 0.0), std::nullopt, rng);
    TrainHistory single_hist = train_joint(single, train, nullptr, single_cfg);

    CHECK(hist[0].step_losses == single_hist.step_losses);
    CHECK(members[0].layers[0].dense->w().data() == single.layers[0].dense->w().data());
}

TEST_CASE("independent member batches are supported and change the trajectory") {
    Dataset train = make_clusters(3, 60, 4, 0.3, 14);
    TrainConfig shared = quick_cfg(Method::Sve, 2, 0.01);
    TrainConfig indep = shared;
    indep.shared_batches = false;
    Rng r1(shared.seed);
    EnsembleModel m1 = build_model(mlp_spec(Method::Sve, 2, 0.01), std::nullopt, r1);
    Rng r2(indep.seed);
    EnsembleModel m2 = build_model(mlp_spec(Method::Sve, 2, 0.01), std::nullopt, r2);
    TrainHistory h1 = train_joint(m1, train, nullptr, shared);
    TrainHistory h2 = train_joint(m2, train, nullptr, indep);
    CHECK(h1.step_losses != h2.step_losses);
}

TEST_CASE("corrupting harder makes a trained model less accurate, on average") {
    Dataset train = make_clusters(4, 80, 6, 0.35, 20);
    ClusterSpec test_spec;
    test_spec.n_classes = 4;
    test_spec.n_per_blob = 80;
    test_spec.dim = 6;
    test_spec.spread = 0.35;
    test_spec.seed = 21;
    Dataset test = make_clusters(test_spec, "test");

    ModelSpec spec = mlp_spec(Method::Sve, 2, 0.01, 6, 4);
    TrainConfig cfg = quick_cfg(Method::Sve, 2, 0.01);
    cfg.epochs = 10;
    cfg.lr = 0.02;
    Rng rng(cfg.seed);
    EnsembleModel model = build_model(spec, std::nullopt, rng);
    train_joint(model, train, nullptr, cfg);

    // Accuracy averaged over 5 corruption seeds per severity must be
    // non-increasing in severity, with one inversion allowed.
    std::vector<double> acc_by_severity;
    for (int severity = 1; severity <= 5; ++severity) {
        double acc = 0.0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            Dataset shifted = corrupt(test, {CorruptionKind::GaussianNoise, severity}, seed);
            acc += evaluate_model(model, shifted).accuracy;
        }
        acc_by_severity.push_back(acc / 5.0);
    }
    int inversions = 0;
    for (std::size_t s = 0; s + 1 < acc_by_severity.size(); ++s) {
        if (acc_by_severity[s + 1] > acc_by_severity[s]) ++inversions;
    }
    CHECK(inversions <= 1);
}

TEST_CASE("method/model mismatches are rejected") {
    Dataset train = make_clusters(3, 20, 4, 0.3, 15);
    TrainConfig cfg = quick_cfg(Method::Sve, 2, 0.01);
    Rng rng(1);
    EnsembleModel single = build_model(mlp_spec(Method::Single, 1, 0.0), std::nullopt, rng);
    CHECK_THROWS_AS(train_joint(single, train, nullptr, cfg), ConfigError);
}
