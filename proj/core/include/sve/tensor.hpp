#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sve/rng.hpp"

namespace sve {

using Shape = std::vector<std::size_t>;

// Dense row-major tensor of 64-bit floats with reverse-mode autodiff.
//
// A Tensor is a shared handle to a graph node. Ops produce fresh nodes and
// never mutate their inputs; leaf tensors (parameters) may be mutated
// through mutable_data() between graph builds. Gradients are allocated only
// for nodes with requires_grad set, so frozen tensors structurally cannot
// accumulate gradients. One backward pass is single-threaded and
// accumulates in a fixed reverse-topological order.
class Tensor {
public:
    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad; // allocated lazily, only if requires_grad
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backprop;

        std::size_t size() const { return value.size(); }
        void ensure_grad() {
            if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
        }
    };

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor identity(std::size_t n);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t rank() const { return shape().size(); }
    // Matrix accessors; 1-D tensors count as single-column matrices.
    std::size_t rows() const;
    std::size_t cols() const;

    bool requires_grad() const;

    const std::vector<double>& data() const;
    std::vector<double>& mutable_data();
    double value() const; // scalar tensors only
    double at(std::size_t r, std::size_t c) const;
    double& at(std::size_t r, std::size_t c);

    const std::vector<double>& grad() const; // throws if never allocated
    bool has_grad() const;
    void zero_grad();

    // Runs reverse-mode accumulation from this scalar.
    void backward() const;

    bool all_finite() const;
    Tensor detached_copy(bool requires_grad = false) const;

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// --- Ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise; operands must have equal shapes or one may be a scalar.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& a);
// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu_tanh(const Tensor& a);
// Gradient passes only where input > threshold.
Tensor clamp_min(const Tensor& a, double threshold);

// out[i][j] = v[i] * m[i][j]; v is a length-rows vector.
Tensor row_scale(const Tensor& v, const Tensor& m);
// out[i][j] = m[i][j] + v[i]; per-column bias add.
Tensor add_col_broadcast(const Tensor& m, const Tensor& v);

Tensor softmax_rows(const Tensor& m);
// Normalizes each column to zero mean / unit variance, then applies
// gain/bias per row. Gradient flows to all three inputs when required.
Tensor layer_norm_cols(const Tensor& m, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor row_slice(const Tensor& m, std::size_t start, std::size_t count);
Tensor col_slice(const Tensor& m, std::size_t start, std::size_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Pure index remap: out.value[i] = in.value[src_index[i]]. Backward
// scatter-adds through the map. Every source index must be < in.size().
Tensor reorder(const Tensor& a, Shape out_shape, std::vector<std::size_t> src_index);

// Inverted dropout; rate == 0 returns the input unchanged.
Tensor dropout(const Tensor& a, double rate, Rng& rng);

// Mean over batch of -log softmax(logits)[label]; logits are B x C.
// Stabilized by row-max subtraction. Backward is (softmax - onehot) / B.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Normal draws shaped as a tensor (no gradient).
Tensor gaussian(Rng& rng, Shape shape, double mean, double std);

// Compares analytic gradients of f against central differences over
// n_probe sampled parameter entries. Returns the worst relative error with
// denominator max(|analytic|, |numeric|, 1e-8). f must be a deterministic
// function of the parameter values.
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                  double h, std::size_t n_probe, Rng& rng);

std::string shape_str(const Shape& s);

} // namespace sve
