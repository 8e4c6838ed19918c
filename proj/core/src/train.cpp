#include "sve/train.hpp"

#include <algorithm>
#include <cmath>

#include "sve/error.hpp"

namespace sve {

const char* schedule_name(Schedule s) {
    switch (s) {
        case Schedule::Cosine: return "cosine";
        case Schedule::Linear: return "linear";
        case Schedule::Constant: return "constant";
    }
    throw ConfigError("unknown schedule");
}

Schedule schedule_from_name(const std::string& name) {
    if (name == "cosine") return Schedule::Cosine;
    if (name == "linear") return Schedule::Linear;
    if (name == "constant") return Schedule::Constant;
    throw ConfigError("train.schedule: unknown name '" + name + "'");
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("train.epochs: must be >= 0");
    if (batch_size == 0) throw ConfigError("train.batch_size: must be >= 1");
    if (lr < 0.0) throw ConfigError("train.lr: must be >= 0");
    if (weight_decay < 0.0) throw ConfigError("train.weight_decay: must be >= 0");
    if (grad_clip <= 0.0) throw ConfigError("train.grad_clip: must be > 0");
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) {
        throw ConfigError("train.warmup_fraction: must be in [0,1)");
    }
    if (members < 1) throw ConfigError("train.members: must be >= 1");
    if (sigma_init < 0.0 || sigma_init >= 1.0) throw ConfigError("train.sigma_init: must be in [0,1)");
    if (mc_eval_passes < 1) throw ConfigError("train.mc_eval_passes: must be >= 1");
}

double lr_at(long long step, long long total_steps, const TrainConfig& cfg) {
    if (step < 0) throw ConfigError("lr_at: step must be >= 0");
    if (total_steps <= 0) return cfg.lr;
    const auto warmup_steps =
        static_cast<long long>(cfg.warmup_fraction * static_cast<double>(total_steps));
    if (step < warmup_steps) {
        return cfg.lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    if (cfg.schedule == Schedule::Constant) return cfg.lr;
    const long long decay_steps = total_steps - warmup_steps;
    if (decay_steps <= 0) return cfg.lr;
    const double progress =
        std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(decay_steps));
    if (cfg.schedule == Schedule::Linear) return cfg.lr * (1.0 - progress);
    return cfg.lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

AdamW::AdamW(const std::vector<TrainableParam>& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
    slots_.reserve(params.size());
    for (const auto& p : params) {
        slots_.push_back(
            {std::vector<double>(p.tensor.size(), 0.0), std::vector<double>(p.tensor.size(), 0.0)});
    }
}

void AdamW::step(const std::vector<TrainableParam>& params, double lr, double weight_decay) {
    if (params.size() != slots_.size()) throw DimensionError("AdamW: parameter set changed size");
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    const std::vector<double> empty;
    for (std::size_t k = 0; k < params.size(); ++k) {
        TrainableParam p = params[k];
        auto& theta = p.tensor.mutable_data();
        const std::vector<double>* g = p.tensor.has_grad() ? &p.tensor.grad() : nullptr;
        auto& m = slots_[k].m;
        auto& v = slots_[k].v;
        const double wd = p.decay ? weight_decay : 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = g ? (*g)[i] : 0.0;
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps_) + wd * theta[i]);
        }
    }
}

double clip_global_norm(const std::vector<TrainableParam>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (const auto& p : params) {
            if (!p.tensor.has_grad()) continue;
            for (double& g : p.tensor.node()->grad) g *= s;
        }
    }
    return norm;
}

std::pair<Tensor, std::vector<int>> gather_batch(const Dataset& ds,
                                                 const std::vector<std::size_t>& indices) {
    const std::size_t d = ds.dim();
    Tensor x = Tensor::zeros({d, indices.size()});
    std::vector<int> labels(indices.size());
    for (std::size_t j = 0; j < indices.size(); ++j) {
        labels[j] = ds.y[indices[j]];
        for (std::size_t i = 0; i < d; ++i) x.at(i, j) = ds.x.at(indices[j], i);
    }
    return {std::move(x), std::move(labels)};
}

namespace {

void check_method_compatible(const EnsembleModel& model, const TrainConfig& cfg) {
    if (model.spec.method != cfg.method) {
        throw ConfigError("train: model method '" + std::string(method_name(model.spec.method)) +
                          "' does not match config method '" + method_name(cfg.method) + "'");
    }
    if (model.members() != cfg.members) {
        throw ConfigError("train: model has " + std::to_string(model.members()) +
                          " members, config wants " + std::to_string(cfg.members));
    }
}

} // namespace

Tensor predict_dataset_probs(const std::vector<const EnsembleModel*>& models, const Dataset& ds) {
    const std::size_t chunk = 256;
    std::vector<double> probs;
    probs.reserve(ds.size() * static_cast<std::size_t>(ds.n_classes));
    for (std::size_t start = 0; start < ds.size(); start += chunk) {
        const std::size_t count = std::min(chunk, ds.size() - start);
        std::vector<std::size_t> idx(count);
        for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
        auto [x, labels] = gather_batch(ds, idx);
        (void)labels;
        PredictionBatch pred = predict_ensemble(models, transpose(x));
        const auto& pv = pred.mean_probs.data();
        probs.insert(probs.end(), pv.begin(), pv.end());
    }
    return Tensor::from_data({ds.size(), static_cast<std::size_t>(ds.n_classes)}, std::move(probs));
}

Tensor predict_dataset_probs(const EnsembleModel& model, const Dataset& ds, int mc_passes) {
    if (model.spec.method == Method::McDropout) {
        const std::size_t chunk = 256;
        std::vector<double> probs;
        probs.reserve(ds.size() * static_cast<std::size_t>(ds.n_classes));
        for (std::size_t start = 0; start < ds.size(); start += chunk) {
            const std::size_t count = std::min(chunk, ds.size() - start);
            std::vector<std::size_t> idx(count);
            for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
            auto [x, labels] = gather_batch(ds, idx);
            (void)labels;
            PredictionBatch pred = predict(model, transpose(x), EvalMode::McDropoutEval, mc_passes,
                                           0x6d63 + static_cast<std::uint64_t>(start));
            const auto& pv = pred.mean_probs.data();
            probs.insert(probs.end(), pv.begin(), pv.end());
        }
        return Tensor::from_data({ds.size(), static_cast<std::size_t>(ds.n_classes)}, std::move(probs));
    }
    return predict_dataset_probs(std::vector<const EnsembleModel*>{&model}, ds);
}

MetricsReport evaluate_model(const EnsembleModel& model, const Dataset& ds, int mc_passes) {
    return evaluate(predict_dataset_probs(model, ds, mc_passes), ds.y);
}

MetricsReport evaluate_models(const std::vector<const EnsembleModel*>& models, const Dataset& ds) {
    return evaluate(predict_dataset_probs(models, ds), ds.y);
}

TrainHistory train_joint(EnsembleModel& model, const Dataset& train, const Dataset* eval_set,
                         const TrainConfig& cfg) {
    cfg.validate();
    train.validate();
    check_method_compatible(model, cfg);

    const std::size_t n = train.size();
    const std::size_t batch = std::min(cfg.batch_size, n);
    const long long steps_per_epoch = static_cast<long long>((n + batch - 1) / batch);
    const long long total_steps = steps_per_epoch * cfg.epochs;
    const int members = model.members();

    std::vector<TrainableParam> params = model.trainable_params();
    AdamW opt(params);

    Rng root(cfg.seed);
    Rng shuffle_rng = root.split(0x73687566ull); // batch order
    Rng dropout_rng = root.split(0x64726f70ull); // dropout masks
    std::vector<Rng> member_shuffles;
    if (!cfg.shared_batches) {
        for (int m = 0; m < members; ++m) {
            member_shuffles.push_back(root.split(0x6d620000ull + static_cast<std::uint64_t>(m)));
        }
    }

    TrainHistory history;
    long long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<std::size_t> perm = shuffle_rng.permutation(n);
        std::vector<std::vector<std::size_t>> member_perms;
        if (!cfg.shared_batches) {
            for (int m = 0; m < members; ++m) member_perms.push_back(member_shuffles[m].permutation(n));
        }

        double epoch_loss = 0.0;
        long long epoch_steps = 0;
        for (std::size_t start = 0; start < n; start += batch, ++step) {
            const std::size_t count = std::min(batch, n - start);
            for (const auto& p : params) {
                Tensor t = p.tensor;
                t.zero_grad();
            }

            Tensor loss;
            Tensor shared_x;
            std::vector<int> shared_labels;
            if (cfg.shared_batches) {
                std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                             perm.begin() + static_cast<std::ptrdiff_t>(start + count));
                std::tie(shared_x, shared_labels) = gather_batch(train, idx);
            }
            for (int m = 0; m < members; ++m) {
                Tensor x;
                std::vector<int> labels;
                if (cfg.shared_batches) {
                    x = shared_x;
                    labels = shared_labels;
                } else {
                    std::vector<std::size_t> idx(
                        member_perms[static_cast<std::size_t>(m)].begin() + static_cast<std::ptrdiff_t>(start),
                        member_perms[static_cast<std::size_t>(m)].begin() +
                            static_cast<std::ptrdiff_t>(start + count));
                    std::tie(x, labels) = gather_batch(train, idx);
                }
                Tensor logits = model.member_logits(m, x, true, &dropout_rng);
                Tensor ce = softmax_cross_entropy(logits, labels);
                loss = m == 0 ? ce : running_mean_update(loss, ce, m + 1);
            }

            const double loss_value = loss.value();
            if (!std::isfinite(loss_value)) {
                throw NumericError("train_joint: non-finite loss at step " + std::to_string(step));
            }
            loss.backward();
            clip_global_norm(params, cfg.grad_clip);
            opt.step(params, lr_at(step, total_steps, cfg), cfg.weight_decay);
            model.project_nonneg();

            history.step_losses.push_back(loss_value);
            epoch_loss += loss_value;
            ++epoch_steps;
        }

        EpochStats stats;
        stats.train_loss = epoch_steps > 0 ? epoch_loss / static_cast<double>(epoch_steps) : 0.0;
        const bool last_epoch = epoch == cfg.epochs - 1;
        if (eval_set && (last_epoch || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0))) {
            stats.eval = evaluate_model(model, *eval_set, cfg.mc_eval_passes);
        }
        history.epochs.push_back(std::move(stats));
    }
    return history;
}

BaseWeights pretrain_base(const ModelSpec& arch, const Dataset& source, const TrainConfig& cfg,
                          EnsembleModel* out_model) {
    ModelSpec spec = arch;
    spec.method = Method::Single;
    spec.members = 1;
    spec.dropout_rate = 0.0;
    spec.n_classes = static_cast<std::size_t>(source.n_classes);

    TrainConfig pre_cfg = cfg;
    pre_cfg.method = Method::Single;
    pre_cfg.members = 1;

    Rng rng(pre_cfg.seed);
    EnsembleModel model = build_model(spec, std::nullopt, rng);
    if (pre_cfg.epochs > 0) train_joint(model, source, nullptr, pre_cfg);
    BaseWeights base = extract_base_weights(model);
    if (out_model) *out_model = std::move(model);
    return base;
}

std::vector<EnsembleModel> train_deep_ensemble(const ModelSpec& arch,
                                               const std::optional<BaseWeights>& base,
                                               const Dataset& train, const Dataset* eval_set,
                                               const TrainConfig& cfg, int ensemble_size,
                                               std::vector<TrainHistory>* histories) {
    if (ensemble_size < 1) throw ConfigError("train_deep_ensemble: ensemble size must be >= 1");
    std::vector<EnsembleModel> models;
    models.reserve(static_cast<std::size_t>(ensemble_size));
    for (int i = 0; i < ensemble_size; ++i) {
        ModelSpec spec = arch;
        spec.method = Method::Single;
        spec.members = 1;
        TrainConfig member_cfg = cfg;
        member_cfg.method = Method::Single;
        member_cfg.members = 1;
        member_cfg.seed = cfg.seed + static_cast<std::uint64_t>(i);
        Rng rng(member_cfg.seed);
        EnsembleModel model = build_model(spec, base, rng);
        TrainHistory h = train_joint(model, train, eval_set, member_cfg);
        if (histories) histories->push_back(std::move(h));
        models.push_back(std::move(model));
    }
    return models;
}

} // namespace sve
