#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sve/data.hpp"
#include "sve/model.hpp"
#include "sve/train.hpp"

namespace sve {

// Data section of an experiment config: synthetic generator knobs plus the
// optional CSV/IDX sources.
struct DataSpec {
    std::string generator = "clusters"; // clusters | csv | idx

    ClusterSpec clusters;     // target task geometry; seed included
    int n_train_per_blob = 0; // train split blob size
    int n_test_per_blob = 0;  // test split blob size
    double source_overlap = 0.75;

    // OOD counterpart geometry (ood experiment).
    double ood_ring_radius = 0.0; // 0 = a quarter of the in-distribution radius

    std::string train_csv, test_csv;
    CsvSchema csv_schema;
    std::string idx_train_images, idx_train_labels, idx_test_images, idx_test_labels;

    Dataset train_set() const;
    Dataset test_set() const;
    Dataset source_set() const; // pretraining task
    Dataset ood_set() const;
};

struct ExperimentConfig {
    std::string experiment; // pretrain | finetune | eval | ood | shift_sweep |
                            // members_ablation | backbone_quality | diversity
    std::string output_dir = "runs/out";
    std::vector<std::uint64_t> seeds{1};

    DataSpec data;
    ModelSpec model;
    TrainConfig train;

    std::string base_checkpoint;                // finetune input (optional)
    std::vector<std::string> eval_checkpoints;  // eval/ood/shift/diversity input
    std::vector<int> ablation_members{1, 2, 4, 8};
    std::vector<std::string> methods{"single", "sve"}; // finetune/shift comparisons
    int pretrain_epochs_weak = 2;
    int pretrain_epochs_strong = 40;
    std::string corruption_kind = "gaussian_noise";
    std::size_t diversity_top_k = 10;

    // Canonical config serialization and its hash, embedded in results.
    std::string canonical_json;
    std::uint64_t config_hash = 0;

    void validate() const; // throws ConfigError with field paths
};

// Parses a JSON config file. Unknown experiment names, missing fields and
// type mismatches raise ConfigError naming the offending field path.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text, const std::string& origin = "<config>");

} // namespace sve
