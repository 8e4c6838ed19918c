#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sve/data.hpp"
#include "sve/metrics.hpp"
#include "sve/model.hpp"

namespace sve {

enum class Schedule { Cosine, Linear, Constant };

const char* schedule_name(Schedule s);
Schedule schedule_from_name(const std::string& name);

struct TrainConfig {
    int epochs = 10;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    // Full-model methods (single, deep ensemble, MC dropout) train at a
    // smaller rate than adapter-style ones; 0 means lr / 10.
    double baseline_lr = 0.0;
    double weight_decay = 0.0;
    Schedule schedule = Schedule::Cosine;
    double warmup_fraction = 0.0;
    double grad_clip = 1.0;
    std::uint64_t seed = 0;
    Method method = Method::Sve;
    int members = 1;
    double sigma_init = 0.01;
    // Shared mini-batches across members (the default). When false, every
    // member samples its own batch each step.
    bool shared_batches = true;
    int mc_eval_passes = 10;
    // Evaluate on the held-out set every k epochs (0 = final epoch only).
    int eval_every = 0;

    void validate() const;
};

// Warmup ramps linearly from 0 to lr over warmup_fraction of total_steps,
// then the schedule decays to 0 at the final step (cosine or linear), or
// holds (constant).
double lr_at(long long step, long long total_steps, const TrainConfig& cfg);

// Decoupled-weight-decay Adam. Decay applies only to parameters flagged
// for it (weight matrices; never biases or singular values).
class AdamW {
public:
    explicit AdamW(const std::vector<TrainableParam>& params, double beta1 = 0.9,
                   double beta2 = 0.999, double eps = 1e-8);

    void step(const std::vector<TrainableParam>& params, double lr, double weight_decay);
    long long step_count() const { return step_count_; }

private:
    struct Slot {
        std::vector<double> m, v;
    };
    std::vector<Slot> slots_;
    double beta1_, beta2_, eps_;
    long long step_count_ = 0;
};

// Scales gradients so their global L2 norm is at most max_norm; returns the
// pre-clip norm.
double clip_global_norm(const std::vector<TrainableParam>& params, double max_norm);

struct EpochStats {
    double train_loss = 0.0;
    std::optional<MetricsReport> eval;
};

struct TrainHistory {
    std::vector<double> step_losses;
    std::vector<EpochStats> epochs;
};

// Joint ensemble optimization: every step samples a mini-batch (shared by
// all members unless configured otherwise), averages the member
// cross-entropies, backprops, clips the global gradient norm, takes an
// AdamW step on the trainable parameters and re-projects singular values
// to be non-negative. Aborts with NumericError (naming the step) on a
// non-finite loss.
TrainHistory train_joint(EnsembleModel& model, const Dataset& train, const Dataset* eval_set,
                         const TrainConfig& cfg);

// Trains a plain fully-trainable model on the source task and returns its
// backbone weights as the frozen basis source. Zero epochs returns the
// initialization (the random-init arm). Also hands back the trained model
// when out_model is non-null.
BaseWeights pretrain_base(const ModelSpec& arch, const Dataset& source, const TrainConfig& cfg,
                          EnsembleModel* out_model = nullptr);

// M full trainings with seeds cfg.seed + 0 .. cfg.seed + M - 1; prediction
// averages the members' probabilities.
std::vector<EnsembleModel> train_deep_ensemble(const ModelSpec& arch,
                                               const std::optional<BaseWeights>& base,
                                               const Dataset& train, const Dataset* eval_set,
                                               const TrainConfig& cfg, int ensemble_size,
                                               std::vector<TrainHistory>* histories = nullptr);

// Rows `indices` of ds.x, transposed to D x B, plus the matching labels.
std::pair<Tensor, std::vector<int>> gather_batch(const Dataset& ds,
                                                 const std::vector<std::size_t>& indices);

// Evaluates a model (or deep ensemble) on a dataset in the mode implied by
// its method.
MetricsReport evaluate_model(const EnsembleModel& model, const Dataset& ds, int mc_passes = 10);
MetricsReport evaluate_models(const std::vector<const EnsembleModel*>& models, const Dataset& ds);

// Mean predicted probabilities for a dataset, batched to bound graph size.
Tensor predict_dataset_probs(const EnsembleModel& model, const Dataset& ds, int mc_passes = 10);
Tensor predict_dataset_probs(const std::vector<const EnsembleModel*>& models, const Dataset& ds);

} // namespace sve
