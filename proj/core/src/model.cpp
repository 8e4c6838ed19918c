#include "sve/model.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "sve/error.hpp"

namespace sve {

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::GeluTanh: return "gelu_tanh";
    }
    throw ConfigError("unknown activation");
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "gelu_tanh") return Activation::GeluTanh;
    throw ConfigError("model.activation: unknown name '" + name + "'");
}

const char* method_name(Method m) {
    switch (m) {
        case Method::Single: return "single";
        case Method::Svf: return "svf";
        case Method::Sve: return "sve";
        case Method::DeepEnsemble: return "deep_ensemble";
        case Method::McDropout: return "mc_dropout";
    }
    throw ConfigError("unknown method");
}

Method method_from_name(const std::string& name) {
    if (name == "single") return Method::Single;
    if (name == "svf") return Method::Svf;
    if (name == "sve") return Method::Sve;
    if (name == "deep_ensemble") return Method::DeepEnsemble;
    if (name == "mc_dropout") return Method::McDropout;
    throw ConfigError("method: unknown name '" + name + "'");
}

std::size_t ModelSpec::input_dim() const {
    if (arch == "mlp") return mlp_dims.empty() ? 0 : mlp_dims[0];
    return tokens * d_model;
}

std::size_t ModelSpec::feature_dim() const {
    if (arch == "mlp") return mlp_dims.empty() ? 0 : mlp_dims.back();
    return d_model;
}

void ModelSpec::validate() const {
    if (arch != "mlp" && arch != "transformer") {
        throw ConfigError("model.arch: must be 'mlp' or 'transformer', got '" + arch + "'");
    }
    if (arch == "mlp") {
        if (mlp_dims.size() < 2) throw ConfigError("model.hidden: mlp needs at least one hidden layer");
        for (std::size_t d : mlp_dims) {
            if (d == 0) throw ConfigError("model.hidden: zero layer width");
        }
    } else {
        if (tokens == 0 || d_model == 0 || n_heads == 0 || d_ff == 0) {
            throw ConfigError("model: transformer needs tokens, d_model, n_heads, d_ff");
        }
        if (d_model % n_heads != 0) throw ConfigError("model.n_heads: d_model must be divisible by n_heads");
    }
    if (n_classes < 2) throw ConfigError("model.n_classes: must be >= 2");
    if (members < 1) throw ConfigError("model.members: must be >= 1");
    if (method == Method::Svf && members != 1) {
        throw ConfigError("model.members: svf is the single-member case, members must be 1");
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("model.dropout: must be in [0,1)");
    if (sigma_init < 0.0 || sigma_init >= 1.0) throw ConfigError("model.sigma_init: must be in [0,1)");
}

std::string ModelSpec::to_json() const {
    nlohmann::json j;
    j["arch"] = arch;
    j["mlp_dims"] = mlp_dims;
    j["tokens"] = tokens;
    j["d_model"] = d_model;
    j["n_heads"] = n_heads;
    j["d_ff"] = d_ff;
    j["n_classes"] = n_classes;
    j["members"] = members;
    j["activation"] = activation_name(activation);
    j["dropout_rate"] = dropout_rate;
    j["method"] = method_name(method);
    j["sigma_init"] = sigma_init;
    j["target_layers"] = target_layers;
    return j.dump();
}

ModelSpec ModelSpec::from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model spec json: ") + e.what());
    }
    ModelSpec s;
    try {
        s.arch = j.at("arch").get<std::string>();
        s.mlp_dims = j.at("mlp_dims").get<std::vector<std::size_t>>();
        s.tokens = j.at("tokens").get<std::size_t>();
        s.d_model = j.at("d_model").get<std::size_t>();
        s.n_heads = j.at("n_heads").get<std::size_t>();
        s.d_ff = j.at("d_ff").get<std::size_t>();
        s.n_classes = j.at("n_classes").get<std::size_t>();
        s.members = j.at("members").get<int>();
        s.activation = activation_from_name(j.at("activation").get<std::string>());
        s.dropout_rate = j.at("dropout_rate").get<double>();
        s.method = method_from_name(j.at("method").get<std::string>());
        s.sigma_init = j.at("sigma_init").get<double>();
        s.target_layers = j.at("target_layers").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model spec json: ") + e.what());
    }
    s.validate();
    return s;
}

// --- DenseLayer ----------------------------------------------------------

DenseLayer DenseLayer::create(std::size_t out, std::size_t in, Rng& rng, double bound, bool trainable,
                              std::string name) {
    DenseLayer l;
    std::vector<double> w(out * in);
    for (double& v : w) v = rng.uniform_range(-bound, bound);
    l.w_ = Tensor::from_data({out, in}, std::move(w), trainable);
    l.b_ = Tensor::zeros({out}, trainable);
    l.name_ = std::move(name);
    return l;
}

DenseLayer DenseLayer::from_weights(Tensor w, Tensor b, bool trainable, std::string name) {
    if (b.size() != w.rows()) throw DimensionError("dense layer: bias length != output features");
    DenseLayer l;
    l.w_ = w.detached_copy(trainable);
    l.b_ = b.detached_copy(trainable);
    l.name_ = std::move(name);
    return l;
}

Tensor BackboneLayer::forward(int member, const Tensor& x) const {
    if (sve) return sve->forward(member, x);
    return dense->forward(x);
}

std::size_t BackboneLayer::out_features() const {
    return sve ? sve->out_features() : dense->w().rows();
}

std::size_t BackboneLayer::in_features() const {
    return sve ? sve->in_features() : dense->w().cols();
}

// --- Builders --------------------------------------------------------------

namespace {

constexpr std::uint64_t kWeightStreamBase = 1000;
constexpr std::uint64_t kHeadStreamBase = 2000;
constexpr std::uint64_t kWrapStreamBase = 3000;

struct LayerPlan {
    std::string name;
    std::size_t out = 0, in = 0;
};

std::vector<LayerPlan> layer_plans(const ModelSpec& spec) {
    std::vector<LayerPlan> plans;
    if (spec.arch == "mlp") {
        for (std::size_t i = 0; i + 1 < spec.mlp_dims.size(); ++i) {
            plans.push_back({"hidden" + std::to_string(i), spec.mlp_dims[i + 1], spec.mlp_dims[i]});
        }
    } else {
        plans.push_back({"attn_q", spec.d_model, spec.d_model});
        plans.push_back({"attn_k", spec.d_model, spec.d_model});
        plans.push_back({"attn_v", spec.d_model, spec.d_model});
        plans.push_back({"attn_o", spec.d_model, spec.d_model});
        plans.push_back({"fc1", spec.d_ff, spec.d_model});
        plans.push_back({"fc2", spec.d_model, spec.d_ff});
    }
    return plans;
}

bool wrap_layer(const ModelSpec& spec, const std::string& name) {
    return spec.uses_sve() && layer_name_matches(name, spec.target_layers);
}

void check_base_shapes(const std::vector<LayerPlan>& plans, const BaseWeights& base) {
    if (base.weights.size() != plans.size() || base.biases.size() != plans.size()) {
        throw DimensionError("base weights: expected " + std::to_string(plans.size()) + " layers, got " +
                             std::to_string(base.weights.size()));
    }
    for (std::size_t i = 0; i < plans.size(); ++i) {
        if (base.weights[i].rows() != plans[i].out || base.weights[i].cols() != plans[i].in) {
            throw DimensionError("base weights: layer " + plans[i].name + " has shape " +
                                 shape_str(base.weights[i].shape()) + ", expected [" +
                                 std::to_string(plans[i].out) + "x" + std::to_string(plans[i].in) + "]");
        }
        if (base.biases[i].size() != plans[i].out) {
            throw DimensionError("base weights: layer " + plans[i].name + " bias length mismatch");
        }
    }
}

EnsembleModel assemble(const ModelSpec& spec, const std::optional<BaseWeights>& base, Rng& rng) {
    spec.validate();
    if (spec.method == Method::DeepEnsemble) {
        throw ConfigError("model.method: deep_ensemble trains M single models; build singles instead");
    }
    const std::vector<LayerPlan> plans = layer_plans(spec);
    if (base) check_base_shapes(plans, *base);

    EnsembleModel model;
    model.spec = spec;

    SveConfig sve_cfg;
    sve_cfg.n_members = spec.members;
    sve_cfg.sigma_init = spec.sigma_init;
    sve_cfg.target_layers = spec.target_layers;

    const bool dense_trainable = !spec.uses_sve();
    for (std::size_t i = 0; i < plans.size(); ++i) {
        const auto& plan = plans[i];
        Tensor w, b;
        if (base) {
            w = base->weights[i].detached_copy();
            b = base->biases[i].detached_copy();
        } else {
            Rng wrng = rng.split(kWeightStreamBase + i);
            const double bound = 1.0 / std::sqrt(static_cast<double>(plan.in));
            std::vector<double> wd(plan.out * plan.in);
            for (double& v : wd) v = wrng.uniform_range(-bound, bound);
            w = Tensor::from_data({plan.out, plan.in}, std::move(wd));
            b = Tensor::zeros({plan.out});
        }
        BackboneLayer layer;
        layer.name = plan.name;
        if (wrap_layer(spec, plan.name)) {
            Rng wrap_rng = rng.split(kWrapStreamBase + i);
            layer.sve = SveLinear::wrap(w, b, sve_cfg, wrap_rng, plan.name);
        } else {
            layer.dense = DenseLayer::from_weights(w, b, dense_trainable, plan.name);
        }
        model.layers.push_back(std::move(layer));
    }

    if (spec.arch == "transformer") {
        if (base && base->ln_gains.size() == 2) {
            model.ln1_gain = base->ln_gains[0].detached_copy();
            model.ln1_bias = base->ln_biases[0].detached_copy();
            model.ln2_gain = base->ln_gains[1].detached_copy();
            model.ln2_bias = base->ln_biases[1].detached_copy();
        } else {
            model.ln1_gain = Tensor::full({spec.d_model}, 1.0);
            model.ln1_bias = Tensor::zeros({spec.d_model});
            model.ln2_gain = Tensor::full({spec.d_model}, 1.0);
            model.ln2_bias = Tensor::zeros({spec.d_model});
        }
    }

    // Per-member heads from independent child streams. The zero-noise
    // regime (sigma_init == 0) requests exactly identical members, so all
    // heads then share the member-0 stream.
    const double head_bound = 1.0 / std::sqrt(static_cast<double>(spec.feature_dim()));
    for (int m = 0; m < spec.members; ++m) {
        const std::uint64_t stream = spec.sigma_init == 0.0 && spec.uses_sve()
                                         ? kHeadStreamBase
                                         : kHeadStreamBase + static_cast<std::uint64_t>(m);
        Rng hrng = rng.split(stream);
        model.heads.push_back(DenseLayer::create(spec.n_classes, spec.feature_dim(), hrng, head_bound,
                                                 true, "head" + std::to_string(m)));
    }
    return model;
}

} // namespace

EnsembleModel mlp_model(const ModelSpec& spec, const std::optional<BaseWeights>& base, Rng& rng) {
    if (spec.arch != "mlp") throw ConfigError("mlp_model: spec.arch is not 'mlp'");
    return assemble(spec, base, rng);
}

EnsembleModel transformer_block_model(const ModelSpec& spec, const std::optional<BaseWeights>& base,
                                      Rng& rng) {
    if (spec.arch != "transformer") {
        throw ConfigError("transformer_block_model: spec.arch is not 'transformer'");
    }
    return assemble(spec, base, rng);
}

EnsembleModel build_model(const ModelSpec& spec, const std::optional<BaseWeights>& base, Rng& rng) {
    return spec.arch == "mlp" ? mlp_model(spec, base, rng) : transformer_block_model(spec, base, rng);
}

EnsembleModel build_model_shell(const ModelSpec& spec) {
    spec.validate();
    EnsembleModel model;
    model.spec = spec;
    const std::vector<LayerPlan> plans = layer_plans(spec);
    const bool dense_trainable = !spec.uses_sve();
    for (const auto& plan : plans) {
        BackboneLayer layer;
        layer.name = plan.name;
        if (wrap_layer(spec, plan.name)) {
            const std::size_t r = std::min(plan.out, plan.in);
            std::vector<Tensor> sigmas;
            for (int m = 0; m < spec.members; ++m) sigmas.push_back(Tensor::zeros({r}, true));
            layer.sve = SveLinear::from_parts(Tensor::zeros({plan.out, r}), Tensor::zeros({r, plan.in}),
                                              Tensor::zeros({r}), std::move(sigmas),
                                              Tensor::zeros({plan.out}), plan.name);
        } else {
            layer.dense = DenseLayer::from_weights(Tensor::zeros({plan.out, plan.in}),
                                                   Tensor::zeros({plan.out}), dense_trainable, plan.name);
        }
        model.layers.push_back(std::move(layer));
    }
    if (spec.arch == "transformer") {
        model.ln1_gain = Tensor::zeros({spec.d_model});
        model.ln1_bias = Tensor::zeros({spec.d_model});
        model.ln2_gain = Tensor::zeros({spec.d_model});
        model.ln2_bias = Tensor::zeros({spec.d_model});
    }
    for (int m = 0; m < spec.members; ++m) {
        model.heads.push_back(DenseLayer::from_weights(
            Tensor::zeros({spec.n_classes, spec.feature_dim()}), Tensor::zeros({spec.n_classes}), true,
            "head" + std::to_string(m)));
    }
    return model;
}

BaseWeights extract_base_weights(const EnsembleModel& model) {
    BaseWeights base;
    for (const auto& layer : model.layers) {
        if (layer.is_sve()) {
            throw CapabilityError("extract_base_weights: model has SVE layers, not a plain basis source");
        }
        base.weights.push_back(layer.dense->w().detached_copy());
        base.biases.push_back(layer.dense->b().detached_copy());
    }
    if (model.spec.arch == "transformer") {
        base.ln_gains.push_back(model.ln1_gain.detached_copy());
        base.ln_biases.push_back(model.ln1_bias.detached_copy());
        base.ln_gains.push_back(model.ln2_gain.detached_copy());
        base.ln_biases.push_back(model.ln2_bias.detached_copy());
    }
    return base;
}

// --- Forward ---------------------------------------------------------------

Tensor attention_mix(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads) {
    const std::size_t d = q.rows();
    if (k.rows() != d || v.rows() != d || k.cols() != q.cols() || v.cols() != q.cols()) {
        throw DimensionError("attention_mix: q/k/v shapes disagree");
    }
    if (n_heads == 0 || d % n_heads != 0) throw DimensionError("attention_mix: d not divisible by heads");
    const std::size_t dh = d / n_heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> outs;
    outs.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
        Tensor qh = row_slice(q, h * dh, dh);
        Tensor kh = row_slice(k, h * dh, dh);
        Tensor vh = row_slice(v, h * dh, dh);
        Tensor scores = scale(matmul(transpose(qh), kh), inv_scale); // row i = query token i
        Tensor attn = softmax_rows(scores);
        outs.push_back(matmul(vh, transpose(attn)));
    }
    return n_heads == 1 ? outs[0] : concat_rows(outs);
}

namespace {

Tensor mlp_logits(const EnsembleModel& model, int member, const Tensor& x_t, bool training,
                  Rng* dropout_rng) {
    Tensor h = x_t;
    for (const auto& layer : model.layers) {
        h = layer.forward(member, h);
        h = model.spec.activation == Activation::Relu ? relu(h) : gelu_tanh(h);
        if (training && model.spec.dropout_rate > 0.0) {
            if (!dropout_rng) throw ConfigError("dropout requested without an rng stream");
            h = dropout(h, model.spec.dropout_rate, *dropout_rng);
        }
    }
    return transpose(model.heads[static_cast<std::size_t>(member)].forward(h));
}

Tensor transformer_logits(const EnsembleModel& model, int member, const Tensor& x_t, bool training,
                          Rng* dropout_rng) {
    const std::size_t t_len = model.spec.tokens;
    const std::size_t d = model.spec.d_model;
    const std::size_t b = x_t.cols();

    // Feature blocks become tokens: column s*T + t of x is token t of sample s.
    std::vector<std::size_t> map(d * b * t_len);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t s = 0; s < b; ++s) {
            for (std::size_t t = 0; t < t_len; ++t) {
                map[i * (b * t_len) + s * t_len + t] = (t * d + i) * b + s;
            }
        }
    }
    Tensor x = reorder(x_t, {d, b * t_len}, std::move(map));

    Tensor h1 = layer_norm_cols(x, model.ln1_gain, model.ln1_bias);
    Tensor q = model.layers[0].forward(member, h1);
    Tensor k = model.layers[1].forward(member, h1);
    Tensor v = model.layers[2].forward(member, h1);

    std::vector<Tensor> mixed;
    mixed.reserve(b);
    for (std::size_t s = 0; s < b; ++s) {
        mixed.push_back(attention_mix(col_slice(q, s * t_len, t_len), col_slice(k, s * t_len, t_len),
                                      col_slice(v, s * t_len, t_len), model.spec.n_heads));
    }
    Tensor attn_out = b == 1 ? mixed[0] : concat_cols(mixed);
    Tensor x2 = add(x, model.layers[3].forward(member, attn_out));

    Tensor h2 = layer_norm_cols(x2, model.ln2_gain, model.ln2_bias);
    Tensor f = gelu_tanh(model.layers[4].forward(member, h2));
    if (training && model.spec.dropout_rate > 0.0) {
        if (!dropout_rng) throw ConfigError("dropout requested without an rng stream");
        f = dropout(f, model.spec.dropout_rate, *dropout_rng);
    }
    Tensor x3 = add(x2, model.layers[5].forward(member, f));

    // Mean pooling over tokens via a constant block matrix.
    Tensor pool = Tensor::zeros({b * t_len, b});
    for (std::size_t s = 0; s < b; ++s) {
        for (std::size_t t = 0; t < t_len; ++t) {
            pool.at(s * t_len + t, s) = 1.0 / static_cast<double>(t_len);
        }
    }
    Tensor pooled = matmul(x3, pool);
    return transpose(model.heads[static_cast<std::size_t>(member)].forward(pooled));
}

} // namespace

Tensor EnsembleModel::member_logits(int member, const Tensor& x_t, bool training,
                                    Rng* dropout_rng) const {
    if (member < 0 || member >= members()) {
        throw IndexError("member_logits: member " + std::to_string(member) + " out of range [0," +
                         std::to_string(members()) + ")");
    }
    if (x_t.rows() != spec.input_dim()) {
        throw DimensionError("member_logits: input has " + std::to_string(x_t.rows()) +
                             " features, model expects " + std::to_string(spec.input_dim()));
    }
    return spec.arch == "mlp" ? mlp_logits(*this, member, x_t, training, dropout_rng)
                              : transformer_logits(*this, member, x_t, training, dropout_rng);
}

std::vector<TrainableParam> EnsembleModel::trainable_params() const {
    std::vector<TrainableParam> params;
    for (const auto& layer : layers) {
        if (layer.is_sve()) {
            for (int m = 0; m < layer.sve->members(); ++m) {
                params.push_back({layer.sve->sigma_member(m), false});
            }
        } else if (layer.dense->w().requires_grad()) {
            params.push_back({layer.dense->w(), true});
            params.push_back({layer.dense->b(), false});
        }
    }
    for (const auto& head : heads) {
        params.push_back({head.w(), true});
        params.push_back({head.b(), false});
    }
    return params;
}

long long EnsembleModel::trainable_parameter_count() const {
    long long n = 0;
    for (const auto& p : trainable_params()) n += static_cast<long long>(p.tensor.size());
    return n;
}

void EnsembleModel::project_nonneg() {
    for (auto& layer : layers) {
        if (layer.is_sve()) layer.sve->project_nonneg();
    }
}

std::vector<NamedArray> EnsembleModel::named_arrays() const {
    std::vector<NamedArray> arrays;
    for (const auto& layer : layers) {
        if (layer.is_sve()) {
            const auto& l = *layer.sve;
            arrays.push_back({layer.name + ".u", l.u()});
            arrays.push_back({layer.name + ".vt", l.vt()});
            arrays.push_back({layer.name + ".sigma_pretrained", l.sigma_pretrained()});
            arrays.push_back({layer.name + ".bias", *l.bias()});
            for (int m = 0; m < l.members(); ++m) {
                arrays.push_back({layer.name + ".sigma." + std::to_string(m), l.sigma_member(m)});
            }
        } else {
            arrays.push_back({layer.name + ".w", layer.dense->w()});
            arrays.push_back({layer.name + ".b", layer.dense->b()});
        }
    }
    if (spec.arch == "transformer") {
        arrays.push_back({"ln1.gain", ln1_gain});
        arrays.push_back({"ln1.bias", ln1_bias});
        arrays.push_back({"ln2.gain", ln2_gain});
        arrays.push_back({"ln2.bias", ln2_bias});
    }
    for (std::size_t m = 0; m < heads.size(); ++m) {
        arrays.push_back({"head." + std::to_string(m) + ".w", heads[m].w()});
        arrays.push_back({"head." + std::to_string(m) + ".b", heads[m].b()});
    }
    return arrays;
}

// --- Prediction --------------------------------------------------------------

Tensor running_mean_update(const Tensor& state, const Tensor& sample, int count) {
    return add(state, scale(sub(sample, state), 1.0 / static_cast<double>(count)));
}

namespace {

PredictionBatch predict_passes(const std::vector<std::pair<const EnsembleModel*, int>>& passes,
                               const Tensor& x_batch, bool stochastic, std::uint64_t mc_seed) {
    if (passes.empty()) throw ConfigError("predict: no members");
    Tensor x_t = transpose(x_batch);
    Rng mc_rng(mc_seed);
    PredictionBatch out;
    int count = 0;
    for (const auto& [model, member] : passes) {
        Tensor logits = model->member_logits(member, x_t, stochastic, stochastic ? &mc_rng : nullptr);
        if (!logits.all_finite()) throw NumericError("predict: non-finite logits");
        Tensor probs = softmax_rows(logits);
        out.member_logits.push_back(logits);
        out.member_probs.push_back(probs);
        ++count;
        out.mean_probs = count == 1 ? probs : running_mean_update(out.mean_probs, probs, count);
    }
    return out;
}

} // namespace

PredictionBatch predict(const EnsembleModel& model, const Tensor& x_batch, EvalMode mode,
                        int mc_passes, std::uint64_t mc_seed) {
    std::vector<std::pair<const EnsembleModel*, int>> passes;
    if (mode == EvalMode::McDropoutEval) {
        if (model.spec.dropout_rate <= 0.0) {
            throw ConfigError("predict: mc_dropout_eval needs a model with dropout_rate > 0");
        }
        for (int p = 0; p < mc_passes; ++p) passes.emplace_back(&model, 0);
        return predict_passes(passes, x_batch, true, mc_seed);
    }
    for (int m = 0; m < model.members(); ++m) passes.emplace_back(&model, m);
    return predict_passes(passes, x_batch, false, mc_seed);
}

PredictionBatch predict_ensemble(const std::vector<const EnsembleModel*>& models,
                                 const Tensor& x_batch, EvalMode mode, int mc_passes,
                                 std::uint64_t mc_seed) {
    if (models.empty()) throw ConfigError("predict_ensemble: no models");
    if (models.size() == 1) return predict(*models[0], x_batch, mode, mc_passes, mc_seed);
    std::vector<std::pair<const EnsembleModel*, int>> passes;
    for (const auto* model : models) {
        for (int m = 0; m < model->members(); ++m) passes.emplace_back(model, m);
    }
    return predict_passes(passes, x_batch, false, mc_seed);
}

} // namespace sve
