#include "sve/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sve/error.hpp"

namespace sve {
namespace {

void check_labels(const Tensor& probs, const std::vector<int>& labels) {
    const std::size_t b = probs.rows(), c = probs.cols();
    if (labels.size() != b) {
        throw DimensionError("metrics: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(b) + " rows");
    }
    for (std::size_t i = 0; i < b; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
            throw IndexError("metrics: label " + std::to_string(labels[i]) + " out of range [0," +
                             std::to_string(c) + ") at row " + std::to_string(i));
        }
    }
}

std::size_t argmax_row(const Tensor& probs, std::size_t i) {
    const std::size_t c = probs.cols();
    std::size_t arg = 0;
    double best = probs.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) {
        if (probs.at(i, j) > best) {
            best = probs.at(i, j);
            arg = j;
        }
    }
    return arg;
}

} // namespace

double accuracy(const Tensor& probs, const std::vector<int>& labels) {
    check_labels(probs, labels);
    const std::size_t b = probs.rows();
    if (b == 0) throw DimensionError("accuracy: empty batch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < b; ++i) {
        if (argmax_row(probs, i) == static_cast<std::size_t>(labels[i])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(b);
}

double ece(const Tensor& probs, const std::vector<int>& labels, int n_bins,
           std::vector<BinRow>* table) {
    check_labels(probs, labels);
    if (n_bins < 1) throw ConfigError("ece: n_bins must be >= 1");
    const std::size_t b = probs.rows();
    std::vector<std::size_t> count(static_cast<std::size_t>(n_bins), 0);
    std::vector<double> conf_sum(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<double> acc_sum(static_cast<std::size_t>(n_bins), 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t arg = argmax_row(probs, i);
        const double conf = probs.at(i, arg);
        // Largest bin index whose lower edge lies strictly below conf.
        std::size_t bin = 0;
        for (int k = 1; k < n_bins; ++k) {
            if (conf > static_cast<double>(k) / static_cast<double>(n_bins)) bin = static_cast<std::size_t>(k);
        }
        count[bin] += 1;
        conf_sum[bin] += conf;
        acc_sum[bin] += (arg == static_cast<std::size_t>(labels[i])) ? 1.0 : 0.0;
    }
    double e = 0.0;
    if (table) table->assign(static_cast<std::size_t>(n_bins), BinRow{});
    for (int k = 0; k < n_bins; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        if (count[kk] == 0) continue;
        const double mean_conf = conf_sum[kk] / static_cast<double>(count[kk]);
        const double mean_acc = acc_sum[kk] / static_cast<double>(count[kk]);
        e += (static_cast<double>(count[kk]) / static_cast<double>(b)) * std::fabs(mean_acc - mean_conf);
        if (table) (*table)[kk] = BinRow{count[kk], mean_conf, mean_acc};
    }
    return e;
}

double nll(const Tensor& probs, const std::vector<int>& labels) {
    check_labels(probs, labels);
    const std::size_t b = probs.rows();
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const double p = std::max(probs.at(i, static_cast<std::size_t>(labels[i])), 1e-12);
        total += -std::log(p);
    }
    return total / static_cast<double>(b);
}

double brier(const Tensor& probs, const std::vector<int>& labels) {
    check_labels(probs, labels);
    const std::size_t b = probs.rows(), c = probs.cols();
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            const double y = (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
            const double d = probs.at(i, j) - y;
            total += d * d;
        }
    }
    return total / static_cast<double>(b);
}

OodMetrics ood_metrics(const OodScores& scores) {
    const std::size_t np = scores.in_dist.size(), nn = scores.ood.size();
    if (np == 0 || nn == 0) throw DimensionError("ood_metrics: both score sets must be non-empty");

    OodMetrics out;

    // AUROC: tie-aware rank statistic. Positive = in-distribution.
    {
        std::vector<std::pair<double, int>> all; // (score, is_positive)
        all.reserve(np + nn);
        for (double s : scores.in_dist) all.emplace_back(s, 1);
        for (double s : scores.ood) all.emplace_back(s, 0);
        std::sort(all.begin(), all.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        double rank_sum_pos = 0.0;
        std::size_t i = 0;
        while (i < all.size()) {
            std::size_t j = i;
            while (j < all.size() && all[j].first == all[i].first) ++j;
            const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j)); // 1-based
            for (std::size_t k = i; k < j; ++k) {
                if (all[k].second) rank_sum_pos += avg_rank;
            }
            i = j;
        }
        out.auroc = (rank_sum_pos - static_cast<double>(np) * (static_cast<double>(np) + 1.0) / 2.0) /
                    (static_cast<double>(np) * static_cast<double>(nn));
    }

    // Threshold sweep, descending over distinct scores, for AUPRC and FPR@95.
    {
        std::vector<std::pair<double, int>> all;
        all.reserve(np + nn);
        for (double s : scores.in_dist) all.emplace_back(s, 1);
        for (double s : scores.ood) all.emplace_back(s, 0);
        std::sort(all.begin(), all.end(),
                  [](const auto& a, const auto& b) { return a.first > b.first; });

        double auprc = 0.0;
        double prev_recall = 0.0;
        double fpr95 = 1.0;
        bool fpr95_found = false;
        std::size_t tp = 0, fp = 0;
        std::size_t i = 0;
        while (i < all.size()) {
            std::size_t j = i;
            while (j < all.size() && all[j].first == all[i].first) {
                if (all[j].second) ++tp;
                else ++fp;
                ++j;
            }
            const double recall = static_cast<double>(tp) / static_cast<double>(np);
            const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
            auprc += (recall - prev_recall) * precision;
            prev_recall = recall;
            if (!fpr95_found && recall >= 0.95) {
                fpr95 = static_cast<double>(fp) / static_cast<double>(nn);
                fpr95_found = true;
            }
            i = j;
        }
        out.auprc = auprc;
        out.fpr_at_95_tpr = fpr95;
    }
    return out;
}

MetricsReport evaluate(const Tensor& probs, const std::vector<int>& labels, int n_bins) {
    MetricsReport r;
    r.n_bins = n_bins;
    r.accuracy = accuracy(probs, labels);
    r.ece = ece(probs, labels, n_bins, &r.bins);
    r.nll = nll(probs, labels);
    r.brier = brier(probs, labels);
    return r;
}

std::vector<double> max_softmax_scores(const Tensor& probs) {
    const std::size_t b = probs.rows();
    std::vector<double> out(b);
    for (std::size_t i = 0; i < b; ++i) out[i] = probs.at(i, argmax_row(probs, i));
    return out;
}

} // namespace sve
