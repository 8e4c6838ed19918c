#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sve/config.hpp"
#include "sve/layer.hpp"
#include "sve/metrics.hpp"
#include "sve/model.hpp"

namespace sve {

// One evaluated configuration cell: a seed, the grouping tags that identify
// the cell (method, arm, severity, ...) and its metric values. Tag and
// metric orders are fixed per experiment so emitted files are byte-stable.
struct ResultRow {
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> tags;
    std::vector<std::pair<std::string, double>> metrics;
    std::vector<BinRow> bins; // reliability diagram, when computed
};

struct AggregateRow {
    std::vector<std::pair<std::string, std::string>> tags;
    std::vector<std::pair<std::string, double>> mean;
    std::vector<std::pair<std::string, double>> std_dev; // sample std, N-1
    std::size_t n = 0;
};

struct ResultsRecord {
    std::string experiment;
    std::uint64_t config_hash = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<ResultRow> rows;
    std::vector<AggregateRow> aggregates; // recomputable from rows
    OverheadStats params;
    bool has_params = false;
    std::vector<DiversityTable> diversity;
};

// Aggregates rows grouped by tags (mean and sample standard deviation).
std::vector<AggregateRow> aggregate_rows(const std::vector<ResultRow>& rows);

// Executes the configured experiment across its seeds, writes
// results.json, rows.csv and plot.csv (plus experiment outputs such as
// checkpoints or per-layer diversity CSVs) under cfg.output_dir, and
// returns the record. Wall-clock goes to timing.txt, never into
// results.json, so identical runs produce identical result bytes.
ResultsRecord run_experiment(const ExperimentConfig& cfg);

// Writes one CSV per SVE layer of the checkpoint: rows are the top_k
// singular value indices, columns the members, values the percent change
// from the pretrained spectrum. Rejects checkpoints without SVE layers.
std::vector<DiversityTable> diversity_dump(const std::string& checkpoint_path, std::size_t top_k,
                                           const std::string& out_dir);

// Method-specific training configuration (baseline methods use the
// full-model learning-rate scale, adapters the configured lr).
TrainConfig method_train_config(const ExperimentConfig& cfg, Method method, std::uint64_t seed);

// Fills placeholder dimensions (mlp input width) from the dataset.
ModelSpec resolved_model_spec(const ExperimentConfig& cfg, Method method, const Dataset& train);

// 17-significant-digit float formatting used for all emitted numbers.
std::string fmt17(double v);

} // namespace sve
