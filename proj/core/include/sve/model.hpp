#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sve/layer.hpp"
#include "sve/rng.hpp"
#include "sve/tensor.hpp"

namespace sve {

enum class Activation { Relu, GeluTanh };
enum class Method { Single, Svf, Sve, DeepEnsemble, McDropout };
enum class EvalMode { Eval, McDropoutEval };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);
const char* method_name(Method m);
Method method_from_name(const std::string& name);

// Architecture + ensemble description; everything needed to rebuild the
// model shell (checkpoint load) or to build and initialize it fresh.
struct ModelSpec {
    std::string arch = "mlp"; // "mlp" | "transformer"

    // mlp: dims[0] is the input dimension, the rest are hidden widths.
    std::vector<std::size_t> mlp_dims{2, 16};

    // transformer: input is tokens * d_model features reshaped to a
    // token sequence.
    std::size_t tokens = 0;
    std::size_t d_model = 0;
    std::size_t n_heads = 0;
    std::size_t d_ff = 0;

    std::size_t n_classes = 2;
    int members = 1;
    Activation activation = Activation::Relu;
    double dropout_rate = 0.0;
    Method method = Method::Sve;
    double sigma_init = 0.01;
    std::vector<std::string> target_layers{"*"};

    std::size_t input_dim() const;
    std::size_t feature_dim() const; // head input width
    bool uses_sve() const { return method == Method::Sve || method == Method::Svf; }
    void validate() const;

    std::string to_json() const;
    static ModelSpec from_json(const std::string& json_text);
};

// Pretrained (or fresh) backbone weights, in the fixed layer order of the
// architecture: mlp hidden layers, or q,k,v,o,fc1,fc2 for the transformer
// block. LayerNorm parameters apply to the transformer only.
struct BaseWeights {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;
    std::vector<Tensor> ln_gains;
    std::vector<Tensor> ln_biases;
};

// Plain dense layer (w x + b); trainable flag drives requires_grad.
class DenseLayer {
public:
    static DenseLayer create(std::size_t out, std::size_t in, Rng& rng, double bound, bool trainable,
                             std::string name);
    static DenseLayer from_weights(Tensor w, Tensor b, bool trainable, std::string name);

    Tensor forward(const Tensor& x) const { return add_col_broadcast(matmul(w_, x), b_); }
    const Tensor& w() const { return w_; }
    const Tensor& b() const { return b_; }
    Tensor& w() { return w_; }
    Tensor& b() { return b_; }
    const std::string& name() const { return name_; }

private:
    Tensor w_, b_;
    std::string name_;
};

// One backbone layer: either SVE-wrapped or plain dense.
struct BackboneLayer {
    std::optional<SveLinear> sve;
    std::optional<DenseLayer> dense;
    std::string name;

    bool is_sve() const { return sve.has_value(); }
    Tensor forward(int member, const Tensor& x) const;
    std::size_t out_features() const;
    std::size_t in_features() const;
};

struct NamedArray {
    std::string name;
    Tensor tensor;
};

struct TrainableParam {
    Tensor tensor;
    bool decay; // weight matrices decay; biases and sigmas do not
};

// Shared frozen basis + per-member parameters + one classification head per
// member. Also hosts the plain baselines (single / deep-ensemble member /
// MC-dropout), whose backbone layers are dense and trainable.
class EnsembleModel {
public:
    ModelSpec spec;
    std::vector<BackboneLayer> layers;
    std::vector<DenseLayer> heads; // exactly one per member
    // Transformer layernorm parameters, frozen at pretrained values.
    Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;

    int members() const { return spec.members; }

    // B x C logits for one member. x_t is input_dim x B (features along
    // rows). Dropout is live only when `training` or mc-dropout eval passes
    // request it; rng must then be non-null.
    Tensor member_logits(int member, const Tensor& x_t, bool training, Rng* dropout_rng) const;

    std::vector<TrainableParam> trainable_params() const;
    long long trainable_parameter_count() const;
    void project_nonneg();

    // Every stored array, in a fixed order, for persistence.
    std::vector<NamedArray> named_arrays() const;
};

struct PredictionBatch {
    std::vector<Tensor> member_logits; // M tensors of B x C
    std::vector<Tensor> member_probs;  // softmax rows, each row sums to 1
    Tensor mean_probs;                 // running mean over members
};

// Allocates the model structure from the spec with zeroed arrays; no SVD,
// no rng. Checkpoint loading fills the arrays afterwards.
EnsembleModel build_model_shell(const ModelSpec& spec);

// MLP classifier: hidden layers wrapped via SVD when the method is
// SVE/SVF, dense otherwise; base weights are used when given (pretrained
// regime) or drawn fresh (random-init regime). Heads use scaled uniform
// init with bound 1/sqrt(d) from per-member child streams.
EnsembleModel mlp_model(const ModelSpec& spec, const std::optional<BaseWeights>& base, Rng& rng);

// One pre-norm transformer encoder block (LN -> MHSA(q,k,v,o) -> residual
// -> LN -> fc1/gelu/fc2 -> residual), mean-pooled over tokens, then the
// per-member head. LayerNorm gains/biases stay frozen.
EnsembleModel transformer_block_model(const ModelSpec& spec, const std::optional<BaseWeights>& base,
                                      Rng& rng);

// Dispatch on spec.arch.
EnsembleModel build_model(const ModelSpec& spec, const std::optional<BaseWeights>& base, Rng& rng);

// Extracts dense backbone weights (a trained Single model) as the frozen
// basis source for later wraps.
BaseWeights extract_base_weights(const EnsembleModel& model);

// Multi-head scaled dot-product attention over one sequence: q, k, v are
// d x T (columns are tokens). With a single token this reduces to v.
Tensor attention_mix(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads);

// Runs every member (or mc_passes stochastic passes for MC-dropout eval),
// softmaxes logits and averages probabilities across members with a
// running mean, so equal members average to themselves exactly.
PredictionBatch predict(const EnsembleModel& model, const Tensor& x_batch /* B x D */,
                        EvalMode mode = EvalMode::Eval, int mc_passes = 10,
                        std::uint64_t mc_seed = 0x6d63);

// Deep-ensemble prediction: each model contributes all of its members.
PredictionBatch predict_ensemble(const std::vector<const EnsembleModel*>& models,
                                 const Tensor& x_batch, EvalMode mode = EvalMode::Eval,
                                 int mc_passes = 10, std::uint64_t mc_seed = 0x6d63);

// Incremental mean: state + (sample - state) / count. Equal inputs leave
// the state bitwise unchanged, which the zero-noise identity relies on.
Tensor running_mean_update(const Tensor& state, const Tensor& sample, int count);

} // namespace sve
