#include "sve/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "sve/checkpoint.hpp"
#include "sve/error.hpp"
#include "sve/train.hpp"
#include "sve/version.hpp"

namespace sve {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

namespace fs = std::filesystem;

std::string json_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (char ch : s) {
        switch (ch) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default: out.push_back(ch);
        }
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << text;
    if (!out) throw IoError("short write: " + path);
}

std::vector<std::pair<std::string, double>> metric_kv(const MetricsReport& r) {
    std::vector<std::pair<std::string, double>> kv = {
        {"accuracy", r.accuracy}, {"ece", r.ece}, {"nll", r.nll}, {"brier", r.brier}};
    if (r.ood) {
        kv.emplace_back("auroc", r.ood->auroc);
        kv.emplace_back("auprc", r.ood->auprc);
        kv.emplace_back("fpr_at_95_tpr", r.ood->fpr_at_95_tpr);
    }
    return kv;
}

ResultRow make_row(std::uint64_t seed, std::vector<std::pair<std::string, std::string>> tags,
                   const MetricsReport& report, bool keep_bins = false) {
    ResultRow row;
    row.seed = seed;
    row.tags = std::move(tags);
    row.metrics = metric_kv(report);
    if (keep_bins) row.bins = report.bins;
    return row;
}

// --- JSON emission (deterministic key order, %.17g floats) ---------------

void emit_tags(std::ostringstream& os, const std::vector<std::pair<std::string, std::string>>& tags) {
    os << "{";
    for (std::size_t i = 0; i < tags.size(); ++i) {
        if (i) os << ", ";
        os << '"' << json_escape(tags[i].first) << "\": \"" << json_escape(tags[i].second) << '"';
    }
    os << "}";
}

void emit_metrics(std::ostringstream& os, const std::vector<std::pair<std::string, double>>& kv) {
    os << "{";
    for (std::size_t i = 0; i < kv.size(); ++i) {
        if (i) os << ", ";
        os << '"' << json_escape(kv[i].first) << "\": " << fmt17(kv[i].second);
    }
    os << "}";
}

std::string results_json(const ResultsRecord& rec) {
    std::ostringstream os;
    os << "{\n";
    os << "  \"experiment\": \"" << json_escape(rec.experiment) << "\",\n";
    os << "  \"code_version\": \"" << kVersionString << "\",\n";
    os << "  \"rng_algorithm\": \"" << Rng::algorithm_id() << "\",\n";
    os << "  \"config_hash\": \"" << hex64(rec.config_hash) << "\",\n";
    os << "  \"seeds\": [";
    for (std::size_t i = 0; i < rec.seeds.size(); ++i) {
        if (i) os << ", ";
        os << rec.seeds[i];
    }
    os << "],\n";

    os << "  \"rows\": [\n";
    for (std::size_t i = 0; i < rec.rows.size(); ++i) {
        const auto& row = rec.rows[i];
        os << "    {\"seed\": " << row.seed << ", \"tags\": ";
        emit_tags(os, row.tags);
        os << ", \"metrics\": ";
        emit_metrics(os, row.metrics);
        if (!row.bins.empty()) {
            os << ", \"reliability_bins\": [";
            for (std::size_t b = 0; b < row.bins.size(); ++b) {
                if (b) os << ", ";
                os << "{\"count\": " << row.bins[b].count << ", \"mean_conf\": "
                   << fmt17(row.bins[b].mean_conf) << ", \"mean_acc\": " << fmt17(row.bins[b].mean_acc)
                   << "}";
            }
            os << "]";
        }
        os << "}" << (i + 1 < rec.rows.size() ? "," : "") << "\n";
    }
    os << "  ],\n";

    os << "  \"aggregates\": [\n";
    for (std::size_t i = 0; i < rec.aggregates.size(); ++i) {
        const auto& agg = rec.aggregates[i];
        os << "    {\"tags\": ";
        emit_tags(os, agg.tags);
        os << ", \"n\": " << agg.n << ", \"mean\": ";
        emit_metrics(os, agg.mean);
        os << ", \"std\": ";
        emit_metrics(os, agg.std_dev);
        os << "}" << (i + 1 < rec.aggregates.size() ? "," : "") << "\n";
    }
    os << "  ]";

    if (rec.has_params) {
        os << ",\n  \"params\": {\"trainable_per_member\": " << rec.params.trainable_per_member
           << ", \"base_params\": " << rec.params.base_params
           << ", \"head_params\": " << rec.params.head_params
           << ", \"total_trainable\": " << rec.params.total_trainable
           << ", \"overhead_fraction_exact\": " << fmt17(rec.params.overhead_fraction_exact)
           << ", \"overhead_fraction_approx\": " << fmt17(rec.params.overhead_fraction_approx) << "}";
    }

    if (!rec.diversity.empty()) {
        os << ",\n  \"diversity\": [\n";
        for (std::size_t t = 0; t < rec.diversity.size(); ++t) {
            const auto& table = rec.diversity[t];
            os << "    {\"layer\": \"" << json_escape(table.layer) << "\", \"rows\": [";
            for (std::size_t r = 0; r < table.rows.size(); ++r) {
                if (r) os << ", ";
                os << "{\"sigma_index\": " << table.rows[r].sigma_index << ", \"pct_change\": [";
                for (std::size_t m = 0; m < table.rows[r].pct_change.size(); ++m) {
                    if (m) os << ", ";
                    os << fmt17(table.rows[r].pct_change[m]);
                }
                os << "]}";
            }
            os << "]}" << (t + 1 < rec.diversity.size() ? "," : "") << "\n";
        }
        os << "  ]";
    }

    os << "\n}\n";
    return os.str();
}

std::string rows_csv(const ResultsRecord& rec) {
    std::ostringstream os;
    if (rec.rows.empty()) return "seed\n";
    os << "seed";
    for (const auto& [k, v] : rec.rows[0].tags) os << "," << k;
    for (const auto& [k, v] : rec.rows[0].metrics) os << "," << k;
    os << "\n";
    for (const auto& row : rec.rows) {
        os << row.seed;
        for (const auto& [k, v] : row.tags) os << "," << v;
        for (const auto& [k, v] : row.metrics) os << "," << fmt17(v);
        os << "\n";
    }
    return os.str();
}

std::string plot_csv(const ResultsRecord& rec) {
    std::ostringstream os;
    if (rec.aggregates.empty()) return "\n";
    os << "";
    bool first = true;
    for (const auto& agg : rec.aggregates) {
        if (first) {
            for (const auto& [k, v] : agg.tags) os << k << ",";
            os << "n";
            for (const auto& [k, v] : agg.mean) os << ",mean_" << k << ",std_" << k;
            os << "\n";
            first = false;
        }
        for (const auto& [k, v] : agg.tags) os << v << ",";
        os << agg.n;
        for (std::size_t i = 0; i < agg.mean.size(); ++i) {
            os << "," << fmt17(agg.mean[i].second) << "," << fmt17(agg.std_dev[i].second);
        }
        os << "\n";
    }
    return os.str();
}

// --- Shared pipeline pieces ------------------------------------------------

std::optional<BaseWeights> load_base(const std::string& path) {
    if (path.empty()) return std::nullopt;
    LoadedCheckpoint ckpt = load_checkpoint(path);
    return extract_base_weights(ckpt.model);
}

struct TrainedMethod {
    std::vector<EnsembleModel> models; // 1 for most methods, M for deep ensemble
    MetricsReport test_metrics;
};

std::vector<const EnsembleModel*> model_ptrs(const std::vector<EnsembleModel>& models) {
    std::vector<const EnsembleModel*> ptrs;
    ptrs.reserve(models.size());
    for (const auto& m : models) ptrs.push_back(&m);
    return ptrs;
}

MetricsReport eval_method(const TrainedMethod& tm, const Dataset& test, int mc_passes) {
    if (tm.models.size() > 1) return evaluate_models(model_ptrs(tm.models), test);
    return evaluate_model(tm.models[0], test, mc_passes);
}

TrainedMethod train_method(const ExperimentConfig& cfg, Method method, std::uint64_t seed,
                           const std::optional<BaseWeights>& base, const Dataset& train,
                           const Dataset& test, int members_override = 0) {
    TrainConfig tc = method_train_config(cfg, method, seed);
    if (members_override > 0 && method == Method::Sve) tc.members = members_override;
    ModelSpec spec = resolved_model_spec(cfg, method, train);
    spec.members = tc.members;

    TrainedMethod out;
    if (method == Method::DeepEnsemble) {
        const int m = members_override > 0 ? members_override : cfg.train.members;
        out.models = train_deep_ensemble(spec, base, train, nullptr, tc, m);
    } else {
        Rng rng(tc.seed);
        EnsembleModel model = build_model(spec, base, rng);
        train_joint(model, train, nullptr, tc);
        out.models.push_back(std::move(model));
    }
    out.test_metrics = eval_method(out, test, cfg.train.mc_eval_passes);
    return out;
}

void save_method_checkpoints(const TrainedMethod& tm, const ExperimentConfig& cfg,
                             const std::string& stem) {
    if (tm.models.size() == 1) {
        save_checkpoint(tm.models[0], cfg.output_dir + "/" + stem + ".ckpt", cfg.canonical_json);
        return;
    }
    for (std::size_t i = 0; i < tm.models.size(); ++i) {
        save_checkpoint(tm.models[i], cfg.output_dir + "/" + stem + "_member" + std::to_string(i) + ".ckpt",
                        cfg.canonical_json);
    }
}

OverheadStats sve_overhead(const ExperimentConfig& cfg, const Dataset& train) {
    const ModelSpec spec = resolved_model_spec(cfg, Method::Sve, train);
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    if (spec.arch == "mlp") {
        for (std::size_t i = 0; i + 1 < spec.mlp_dims.size(); ++i) {
            shapes.emplace_back(spec.mlp_dims[i + 1], spec.mlp_dims[i]);
        }
    } else {
        for (int i = 0; i < 4; ++i) shapes.emplace_back(spec.d_model, spec.d_model);
        shapes.emplace_back(spec.d_ff, spec.d_model);
        shapes.emplace_back(spec.d_model, spec.d_ff);
    }
    return overhead_stats(shapes, spec.feature_dim(), cfg.train.members,
                          {spec.feature_dim(), spec.n_classes});
}

// --- Experiment bodies -------------------------------------------------------

ResultsRecord run_pretrain(const ExperimentConfig& cfg) {
    ResultsRecord rec;
    const Dataset source = cfg.data.source_set();
    for (std::uint64_t seed : cfg.seeds) {
        TrainConfig tc = method_train_config(cfg, Method::Single, seed);
        ModelSpec spec = resolved_model_spec(cfg, Method::Single, source);
        EnsembleModel model;
        pretrain_base(spec, source, tc, &model);
        save_checkpoint(model, cfg.output_dir + "/base_seed" + std::to_string(seed) + ".ckpt",
                        cfg.canonical_json);
        const MetricsReport on_source = evaluate_model(model, source);
        rec.rows.push_back(make_row(seed, {{"stage", "pretrain"}}, on_source));
    }
    return rec;
}

ResultsRecord run_finetune(const ExperimentConfig& cfg) {
    ResultsRecord rec;
    const Dataset train = cfg.data.train_set();
    const Dataset test = cfg.data.test_set();
    const std::optional<BaseWeights> base = load_base(cfg.base_checkpoint);
    for (std::uint64_t seed : cfg.seeds) {
        for (const std::string& method_str : cfg.methods) {
            const Method method = method_from_name(method_str);
            TrainedMethod tm = train_method(cfg, method, seed, base, train, test);
            save_method_checkpoints(tm, cfg, method_str + "_seed" + std::to_string(seed));
            rec.rows.push_back(make_row(seed, {{"method", method_str}}, tm.test_metrics, true));
        }
    }
    rec.params = sve_overhead(cfg, train);
    rec.has_params = true;
    return rec;
}

ResultsRecord run_eval(const ExperimentConfig& cfg) {
    ResultsRecord rec;
    const Dataset test = cfg.data.test_set();
    std::vector<EnsembleModel> models;
    for (const auto& path : cfg.eval_checkpoints) models.push_back(load_checkpoint(path).model);
    MetricsReport report;
    if (models.size() == 1 && models[0].spec.method == Method::McDropout) {
        report = evaluate_model(models[0], test, cfg.train.mc_eval_passes);
    } else {
        report = evaluate_models(model_ptrs(models), test);
    }
    ResultRow row = make_row(cfg.seeds[0], {{"stage", "eval"}}, report, true);
    rec.rows.push_back(std::move(row));
    return rec;
}

ResultsRecord run_ood(const ExperimentConfig& cfg) {
    ResultsRecord rec;
    const Dataset id_test = cfg.data.test_set();
    const Dataset ood_test = cfg.data.ood_set();
    std::vector<EnsembleModel> models;
    for (const auto& path : cfg.eval_checkpoints) models.push_back(load_checkpoint(path).model);

    const bool mc = models.size() == 1 && models[0].spec.method == Method::McDropout;
    Tensor id_probs = mc ? predict_dataset_probs(models[0], id_test, cfg.train.mc_eval_passes)
                         : predict_dataset_probs(model_ptrs(models), id_test);
    Tensor ood_probs = mc ? predict_dataset_probs(models[0], ood_test, cfg.train.mc_eval_passes)
                          : predict_dataset_probs(model_ptrs(models), ood_test);

    MetricsReport report = evaluate(id_probs, id_test.y);
    OodScores scores;
    scores.in_dist = max_softmax_scores(id_probs);
    scores.ood = max_softmax_scores(ood_probs);
    report.ood = ood_metrics(scores);
    rec.rows.push_back(make_row(cfg.seeds[0], {{"stage", "ood"}}, report));
    return rec;
}

ResultsRecord run_shift_sweep(const ExperimentConfig& cfg) {
    ResultsRecord rec;
    const Dataset train = cfg.data.train_set();
    const Dataset test = cfg.data.test_set();
    const std::optional<BaseWeights> base = load_base(cfg.base_checkpoint);
    const CorruptionKind kind = corruption_kind_from_name(cfg.corruption_kind);

    for (std::uint64_t seed : cfg.seeds) {
        for (const std::string& method_str : cfg.methods) {
            const Method method = method_from_name(method_str);
            TrainedMethod tm = train_method(cfg, method, seed, base, train, test);
            rec.rows.push_back(make_row(
                seed, {{"method", method_str}, {"kind", cfg.corruption_kind}, {"severity", "0"}},
                tm.test_metrics));
            for (int severity = 1; severity <= 5; ++severity) {
                const Dataset shifted =
                    corrupt(test, CorruptionSpec{kind, severity}, 0xC0DE + static_cast<std::uint64_t>(severity));
                const MetricsReport report = eval_method(tm, shifted, cfg.train.mc_eval_passes);
                rec.rows.push_back(make_row(seed,
                                            {{"method", method_str},
                                             {"kind", cfg.corruption_kind},
                                             {"severity", std::to_string(severity)}},
                                            report));
            }
        }
    }
    return rec;
}

ResultsRecord run_members_ablation(const ExperimentConfig& cfg) {
    ResultsRecord rec;
    const Dataset train = cfg.data.train_set();
    const Dataset test = cfg.data.test_set();
    const std::optional<BaseWeights> base = load_base(cfg.base_checkpoint);
    for (int m : cfg.ablation_members) {
        for (std::uint64_t seed : cfg.seeds) {
            TrainedMethod tm = train_method(cfg, Method::Sve, seed, base, train, test, m);
            rec.rows.push_back(make_row(seed, {{"members", std::to_string(m)}}, tm.test_metrics));
        }
    }
    return rec;
}

ResultsRecord run_backbone_quality(const ExperimentConfig& cfg) {
    ResultsRecord rec;
    const Dataset source = cfg.data.source_set();
    const Dataset train = cfg.data.train_set();
    const Dataset test = cfg.data.test_set();

    const std::vector<std::pair<std::string, int>> arms = {
        {"random", 0}, {"weak-pretrain", cfg.pretrain_epochs_weak},
        {"strong-pretrain", cfg.pretrain_epochs_strong}};

    for (const auto& [arm, pretrain_epochs] : arms) {
        std::optional<BaseWeights> base;
        if (pretrain_epochs > 0) {
            TrainConfig pre = method_train_config(cfg, Method::Single, cfg.seeds[0]);
            pre.epochs = pretrain_epochs;
            const ModelSpec spec = resolved_model_spec(cfg, Method::Single, source);
            base = pretrain_base(spec, source, pre);
        }
        for (std::uint64_t seed : cfg.seeds) {
            for (const std::string& method_str : cfg.methods) {
                const Method method = method_from_name(method_str);
                TrainedMethod tm = train_method(cfg, method, seed, base, train, test);
                rec.rows.push_back(make_row(seed, {{"arm", arm}, {"method", method_str}}, tm.test_metrics));
            }
        }
    }
    return rec;
}

ResultsRecord run_diversity(const ExperimentConfig& cfg) {
    ResultsRecord rec;
    rec.diversity = diversity_dump(cfg.eval_checkpoints[0], cfg.diversity_top_k, cfg.output_dir);

    // Prediction disagreement on the test split: mean total-variation
    // distance between member probabilities and their mean.
    LoadedCheckpoint ckpt = load_checkpoint(cfg.eval_checkpoints[0]);
    const Dataset test = cfg.data.test_set();
    std::vector<std::size_t> idx(std::min<std::size_t>(test.size(), 512));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto [x, labels] = gather_batch(test, idx);
    (void)labels;
    PredictionBatch pred = predict(ckpt.model, transpose(x));
    double tv = 0.0;
    for (const auto& member : pred.member_probs) {
        for (std::size_t i = 0; i < member.size(); ++i) {
            tv += 0.5 * std::fabs(member.data()[i] - pred.mean_probs.data()[i]);
        }
    }
    tv /= static_cast<double>(pred.member_probs.size() * idx.size());

    ResultRow row;
    row.seed = cfg.seeds[0];
    row.tags = {{"stage", "diversity"}};
    row.metrics = {{"mean_member_tv_disagreement", tv}};
    rec.rows.push_back(std::move(row));
    return rec;
}

} // namespace

TrainConfig method_train_config(const ExperimentConfig& cfg, Method method, std::uint64_t seed) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    tc.method = method;
    const double baseline_lr = tc.baseline_lr > 0.0 ? tc.baseline_lr : tc.lr * 0.1;
    switch (method) {
        case Method::Single:
            tc.members = 1;
            tc.lr = baseline_lr;
            break;
        case Method::Svf:
            tc.members = 1;
            break;
        case Method::Sve:
            break;
        case Method::DeepEnsemble:
            tc.lr = baseline_lr;
            break;
        case Method::McDropout:
            tc.members = 1;
            tc.lr = baseline_lr;
            break;
    }
    return tc;
}

ModelSpec resolved_model_spec(const ExperimentConfig& cfg, Method method, const Dataset& train) {
    ModelSpec spec = cfg.model;
    spec.method = method == Method::DeepEnsemble ? Method::Single : method;
    spec.n_classes = static_cast<std::size_t>(train.n_classes);
    if (spec.arch == "mlp") {
        spec.mlp_dims[0] = train.dim();
    } else if (spec.tokens * spec.d_model != train.dim()) {
        throw ConfigError("model: tokens * d_model = " + std::to_string(spec.tokens * spec.d_model) +
                          " does not match data dimension " + std::to_string(train.dim()));
    }
    switch (method) {
        case Method::Single:
        case Method::DeepEnsemble:
            spec.members = 1;
            spec.dropout_rate = 0.0;
            break;
        case Method::McDropout:
            spec.members = 1;
            if (spec.dropout_rate <= 0.0) spec.dropout_rate = 0.05;
            break;
        case Method::Svf:
            spec.members = 1;
            spec.sigma_init = cfg.train.sigma_init;
            break;
        case Method::Sve:
            spec.members = cfg.train.members;
            spec.sigma_init = cfg.train.sigma_init;
            break;
    }
    return spec;
}

std::vector<AggregateRow> aggregate_rows(const std::vector<ResultRow>& rows) {
    std::vector<AggregateRow> out;
    std::map<std::string, std::size_t> index;
    for (const auto& row : rows) {
        std::string key;
        for (const auto& [k, v] : row.tags) key += k + "=" + v + ";";
        auto it = index.find(key);
        if (it == index.end()) {
            index.emplace(key, out.size());
            AggregateRow agg;
            agg.tags = row.tags;
            for (const auto& [k, v] : row.metrics) {
                agg.mean.emplace_back(k, 0.0);
                agg.std_dev.emplace_back(k, 0.0);
            }
            out.push_back(std::move(agg));
            it = index.find(key);
        }
        out[it->second].n += 1;
    }
    // Two-pass mean and sample std in row order.
    std::map<std::string, std::vector<const ResultRow*>> grouped;
    for (const auto& row : rows) {
        std::string key;
        for (const auto& [k, v] : row.tags) key += k + "=" + v + ";";
        grouped[key].push_back(&row);
    }
    for (auto& agg : out) {
        std::string key;
        for (const auto& [k, v] : agg.tags) key += k + "=" + v + ";";
        const auto& members = grouped[key];
        const double n = static_cast<double>(members.size());
        for (std::size_t mi = 0; mi < agg.mean.size(); ++mi) {
            double sum = 0.0;
            for (const auto* row : members) sum += row->metrics[mi].second;
            const double mean = sum / n;
            double sq = 0.0;
            for (const auto* row : members) {
                const double d = row->metrics[mi].second - mean;
                sq += d * d;
            }
            agg.mean[mi].second = mean;
            agg.std_dev[mi].second = members.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
        }
    }
    return out;
}

std::vector<DiversityTable> diversity_dump(const std::string& checkpoint_path, std::size_t top_k,
                                           const std::string& out_dir) {
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
    std::vector<DiversityTable> tables;
    for (const auto& layer : ckpt.model.layers) {
        if (!layer.is_sve()) continue;
        tables.push_back(diversity_report(*layer.sve, std::min(top_k, layer.sve->rank_dim())));
    }
    if (tables.empty()) {
        throw CapabilityError("diversity_dump: checkpoint " + checkpoint_path + " has no SVE layers");
    }
    fs::create_directories(out_dir);
    for (const auto& table : tables) {
        std::ostringstream os;
        os << "sigma_index";
        const std::size_t members = table.rows.empty() ? 0 : table.rows[0].pct_change.size();
        for (std::size_t m = 0; m < members; ++m) os << ",member" << m;
        os << "\n";
        for (const auto& row : table.rows) {
            os << row.sigma_index;
            for (double v : row.pct_change) os << "," << fmt17(v);
            os << "\n";
        }
        write_text_file(out_dir + "/diversity_" + table.layer + ".csv", os.str());
    }
    return tables;
}

ResultsRecord run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(cfg.output_dir);

    ResultsRecord rec;
    if (cfg.experiment == "pretrain") rec = run_pretrain(cfg);
    else if (cfg.experiment == "finetune") rec = run_finetune(cfg);
    else if (cfg.experiment == "eval") rec = run_eval(cfg);
    else if (cfg.experiment == "ood") rec = run_ood(cfg);
    else if (cfg.experiment == "shift_sweep") rec = run_shift_sweep(cfg);
    else if (cfg.experiment == "members_ablation") rec = run_members_ablation(cfg);
    else if (cfg.experiment == "backbone_quality") rec = run_backbone_quality(cfg);
    else if (cfg.experiment == "diversity") rec = run_diversity(cfg);
    else throw ConfigError("config field experiment: unknown experiment '" + cfg.experiment + "'");

    rec.experiment = cfg.experiment;
    rec.config_hash = cfg.config_hash;
    rec.seeds = cfg.seeds;
    rec.aggregates = aggregate_rows(rec.rows);

    write_text_file(cfg.output_dir + "/results.json", results_json(rec));
    write_text_file(cfg.output_dir + "/rows.csv", rows_csv(rec));
    write_text_file(cfg.output_dir + "/plot.csv", plot_csv(rec));

    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    // Wall-clock lives outside results.json so result bytes stay reproducible.
    write_text_file(cfg.output_dir + "/timing.txt", "runtime_seconds " + fmt17(secs) + "\n");
    return rec;
}

} // namespace sve
