#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "doctest.h"
#include "sve/data.hpp"
#include "sve/error.hpp"

using namespace sve;

TEST_CASE("clusters: zero spread collapses every point onto its blob mean") {
    ClusterSpec spec;
    spec.n_classes = 4;
    spec.n_per_blob = 10;
    spec.dim = 3;
    spec.spread = 0.0;
    spec.seed = 1;
    Dataset ds = make_clusters(spec);
    std::set<std::pair<int, std::string>> seen;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::string key;
        for (std::size_t d = 0; d < 3; ++d) key += std::to_string(ds.x.at(i, d)) + ",";
        seen.insert({ds.y[i], key});
    }
    // One distinct point per class.
    CHECK(seen.size() == 4);
}

TEST_CASE("clusters: same seed reproduces the dataset bitwise") {
    Dataset a = make_clusters(5, 20, 4, 0.3, 99);
    Dataset b = make_clusters(5, 20, 4, 0.3, 99);
    CHECK(a.x.data() == b.x.data());
    CHECK(a.y == b.y);
    Dataset c = make_clusters(5, 20, 4, 0.3, 100);
    CHECK(a.x.data() != c.x.data());
}

TEST_CASE("clusters: tight blobs are linearly separable to 99%+ train accuracy") {
    // Nearest-class-mean stands in for the linear classifier; with
    // spread 0.1 on a radius-1.5 ring it must reach 99%.
    Dataset ds = make_clusters(4, 100, 4, 0.1, 5);
    std::vector<std::vector<double>> means(4, std::vector<double>(4, 0.0));
    std::vector<int> counts(4, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        counts[static_cast<std::size_t>(ds.y[i])]++;
        for (std::size_t d = 0; d < 4; ++d) means[static_cast<std::size_t>(ds.y[i])][d] += ds.x.at(i, d);
    }
    for (int c = 0; c < 4; ++c) {
        for (double& v : means[static_cast<std::size_t>(c)]) v /= counts[static_cast<std::size_t>(c)];
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        int best = 0;
        double best_d = 1e300;
        for (int c = 0; c < 4; ++c) {
            double dist = 0.0;
            for (std::size_t d = 0; d < 4; ++d) {
                const double diff = ds.x.at(i, d) - means[static_cast<std::size_t>(c)][d];
                dist += diff * diff;
            }
            if (dist < best_d) {
                best_d = dist;
                best = c;
            }
        }
        if (best == ds.y[i]) ++correct;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(ds.size()) >= 0.99);
}

TEST_CASE("source/target split: overlap endpoints and disjoint draws") {
    ClusterSpec base;
    base.n_classes = 4;
    base.blobs_per_class = 1;
    base.n_per_blob = 25;
    base.dim = 2;
    base.spread = 0.0; // blob means visible directly
    base.seed = 3;

    auto [src1, tgt1] = source_target_split(base, 1.0);
    std::set<std::string> src_means, tgt_means;
    for (std::size_t i = 0; i < src1.size(); ++i) {
        src_means.insert(std::to_string(src1.x.at(i, 0)) + "," + std::to_string(src1.x.at(i, 1)));
    }
    for (std::size_t i = 0; i < tgt1.size(); ++i) {
        tgt_means.insert(std::to_string(tgt1.x.at(i, 0)) + "," + std::to_string(tgt1.x.at(i, 1)));
    }
    CHECK(src_means == tgt_means);

    auto [src0, tgt0] = source_target_split(base, 0.0);
    std::set<std::string> src0_means;
    for (std::size_t i = 0; i < src0.size(); ++i) {
        src0_means.insert(std::to_string(src0.x.at(i, 0)) + "," + std::to_string(src0.x.at(i, 1)));
    }
    for (const auto& m : src0_means) CHECK(tgt_means.count(m) == 0);

    // Disjoint sample draws: row hashes never collide with spread > 0.
    base.spread = 0.2;
    auto [src, tgt] = source_target_split(base, 0.5);
    std::set<std::uint64_t> hashes;
    for (std::size_t i = 0; i < src.size(); ++i) {
        hashes.insert(fnv1a64(&src.x.data()[i * 2], 2 * sizeof(double)));
    }
    for (std::size_t i = 0; i < tgt.size(); ++i) {
        CHECK(hashes.count(fnv1a64(&tgt.x.data()[i * 2], 2 * sizeof(double))) == 0);
    }
}

TEST_CASE("corruption magnitude tables are strictly increasing") {
    for (CorruptionKind kind : {CorruptionKind::GaussianNoise, CorruptionKind::UniformNoise,
                                CorruptionKind::FeatureDropout, CorruptionKind::AffineShift}) {
        for (int s = 1; s < 5; ++s) {
            CHECK(corruption_magnitude(kind, s + 1) > corruption_magnitude(kind, s));
        }
    }
    CHECK_THROWS_AS(corruption_magnitude(CorruptionKind::GaussianNoise, 0), ConfigError);
    CHECK_THROWS_AS(corruption_magnitude(CorruptionKind::GaussianNoise, 6), ConfigError);
}

TEST_CASE("gaussian corruption at severity 1 has std ~0.05 on zero inputs") {
    Dataset zeros;
    zeros.x = Tensor::zeros({2500, 4});
    zeros.y.assign(2500, 0);
    zeros.n_classes = 1;
    Dataset noisy = corrupt(zeros, {CorruptionKind::GaussianNoise, 1}, 8);
    double sq = 0.0;
    for (double v : noisy.x.data()) sq += v * v;
    const double std_dev = std::sqrt(sq / static_cast<double>(noisy.x.size()));
    CHECK(std_dev >= 0.045);
    CHECK(std_dev <= 0.055);
}

TEST_CASE("corrupt preserves labels bitwise and is seed-deterministic") {
    Dataset ds = make_clusters(3, 30, 5, 0.2, 11);
    Dataset c1 = corrupt(ds, {CorruptionKind::UniformNoise, 3}, 21);
    Dataset c2 = corrupt(ds, {CorruptionKind::UniformNoise, 3}, 21);
    CHECK(c1.y == ds.y);
    CHECK(c1.x.data() == c2.x.data());
    CHECK(c1.x.data() != ds.x.data());
}

TEST_CASE("ood pair: disjoint rings keep a positive input gap") {
    ClusterSpec in_spec;
    in_spec.n_classes = 4;
    in_spec.n_per_blob = 40;
    in_spec.dim = 2;
    in_spec.spread = 0.05;
    in_spec.ring_radius = 1.0;
    in_spec.seed = 5;
    ClusterSpec ood_spec = in_spec;
    ood_spec.ring_radius = 4.0;
    ood_spec.seed = 6;
    auto [id_set, ood_set] = ood_pair(in_spec, ood_spec);
    double min_dist = 1e300;
    for (std::size_t i = 0; i < id_set.size(); ++i) {
        for (std::size_t j = 0; j < ood_set.size(); ++j) {
            double d = 0.0;
            for (std::size_t k = 0; k < 2; ++k) {
                const double diff = id_set.x.at(i, k) - ood_set.x.at(j, k);
                d += diff * diff;
            }
            min_dist = std::min(min_dist, d);
        }
    }
    CHECK(min_dist > 0.0);
    CHECK(ood_set.provenance.find("ood") != std::string::npos);

    auto [di, dod] = ood_pair(in_spec, in_spec);
    CHECK(dod.provenance.find("degenerate") != std::string::npos);
}

TEST_CASE("csv loader: exact values, schema errors, line numbers") {
    const char* path = "test_tmp_data.csv";
    {
        std::ofstream out(path);
        out << "f1,label,f2\n";
        out << "1.5,0,-2\n";
        out << "0.25,1,4\n";
        out << "-1,0,0.5\n";
    }
    Dataset ds = load_csv(path, {"label", 2});
    CHECK(ds.size() == 3);
    CHECK(ds.dim() == 2);
    CHECK(ds.x.at(0, 0) == 1.5);
    CHECK(ds.x.at(0, 1) == -2.0);
    CHECK(ds.y == std::vector<int>{0, 1, 0});
    CHECK(ds.provenance.rfind("csv:", 0) == 0);

    {
        std::ofstream out(path);
        out << "f1,label\n";
        out << "1.0,0\n";
        out << "oops,1\n";
    }
    CHECK_THROWS_WITH_AS(load_csv(path, {"label", 2}), doctest::Contains(":3:"), ParseError);

    {
        std::ofstream out(path);
        out << "f1,label\n";
        out << "1.0,7\n";
    }
    CHECK_THROWS_AS(load_csv(path, {"label", 2}), IndexError);

    {
        std::ofstream out(path);
        out << "f1,label\n";
        out << "nan,0\n";
    }
    CHECK_THROWS_AS(load_csv(path, {"label", 2}), NumericError);
    std::remove(path);
}

TEST_CASE("standardization uses train statistics only") {
    const char* train_path = "test_tmp_train.csv";
    const char* test_path = "test_tmp_test.csv";
    {
        std::ofstream out(train_path);
        out << "a,label\n";
        for (int i = 0; i < 10; ++i) out << i << ",0\n";
    }
    {
        // Shifted test data: its own mean is 100, train mean is 4.5.
        std::ofstream out(test_path);
        out << "a,label\n";
        out << "100,0\n";
        out << "101,0\n";
    }
    auto [train, test] = load_csv_split(train_path, test_path, {"label", 2});
    double mean = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) mean += train.x.at(i, 0);
    mean /= static_cast<double>(train.size());
    CHECK(std::fabs(mean) <= 1e-10);
    // Standardized with train stats, the shifted test values stay far from 0.
    CHECK(test.x.at(0, 0) > 30.0);
    std::remove(train_path);
    std::remove(test_path);
}

TEST_CASE("idx loader round-trips a tiny handcrafted pair") {
    const char* img_path = "test_tmp_images.idx";
    const char* lab_path = "test_tmp_labels.idx";
    {
        std::ofstream out(img_path, std::ios::binary);
        const unsigned char header[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2};
        out.write(reinterpret_cast<const char*>(header), sizeof(header));
        const unsigned char pixels[] = {0, 255, 128, 64, 255, 0, 0, 32};
        out.write(reinterpret_cast<const char*>(pixels), sizeof(pixels));
    }
    {
        std::ofstream out(lab_path, std::ios::binary);
        const unsigned char header[] = {0, 0, 8, 1, 0, 0, 0, 2};
        out.write(reinterpret_cast<const char*>(header), sizeof(header));
        const unsigned char labels[] = {1, 0};
        out.write(reinterpret_cast<const char*>(labels), sizeof(labels));
    }
    Dataset ds = load_idx(img_path, lab_path);
    CHECK(ds.size() == 2);
    CHECK(ds.dim() == 4);
    CHECK(ds.x.at(0, 1) == doctest::Approx(1.0));
    CHECK(ds.y == std::vector<int>{1, 0});

    // Bad magic is rejected.
    {
        std::ofstream out(img_path, std::ios::binary);
        const unsigned char header[] = {0, 0, 9, 9, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1};
        out.write(reinterpret_cast<const char*>(header), sizeof(header));
    }
    CHECK_THROWS_AS(load_idx(img_path, lab_path), FormatError);
    std::remove(img_path);
    std::remove(lab_path);
}
