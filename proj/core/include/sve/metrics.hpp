#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "sve/tensor.hpp"

namespace sve {

struct BinRow {
    std::size_t count = 0;
    double mean_conf = 0.0;
    double mean_acc = 0.0;
};

struct OodMetrics {
    double auroc = 0.0;
    double auprc = 0.0;
    double fpr_at_95_tpr = 0.0;
};

struct MetricsReport {
    double accuracy = 0.0;
    double ece = 0.0;
    double nll = 0.0;
    double brier = 0.0;
    int n_bins = 15;
    std::vector<BinRow> bins;
    std::optional<OodMetrics> ood;
};

// Max-softmax confidences; in-distribution samples are the positive class.
struct OodScores {
    std::vector<double> in_dist;
    std::vector<double> ood;
};

// Argmax per row compared to labels; argmax ties resolve to the lowest
// class index.
double accuracy(const Tensor& probs, const std::vector<int>& labels);

// 15-bin (default) expected calibration error. Confidence is the max
// probability; bin i covers (i/n, (i+1)/n] with confidence 0 in bin 0;
// empty bins contribute 0. Optionally fills the reliability table.
double ece(const Tensor& probs, const std::vector<int>& labels, int n_bins = 15,
           std::vector<BinRow>* table = nullptr);

// Mean negative log true-class probability, floored at 1e-12 before log.
double nll(const Tensor& probs, const std::vector<int>& labels);

// Mean squared distance between probability rows and one-hot labels.
double brier(const Tensor& probs, const std::vector<int>& labels);

// AUROC by the tie-aware rank statistic (Mann-Whitney); AUPRC by step-wise
// interpolation over descending thresholds; FPR at the first threshold,
// sweeping from high to low, whose TPR reaches >= 0.95.
OodMetrics ood_metrics(const OodScores& scores);

// Bundles accuracy / ece / nll / brier and the reliability table.
MetricsReport evaluate(const Tensor& probs, const std::vector<int>& labels, int n_bins = 15);

// Max probability per row; the OOD confidence score.
std::vector<double> max_softmax_scores(const Tensor& probs);

} // namespace sve
