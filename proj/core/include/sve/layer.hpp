#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sve/rng.hpp"
#include "sve/svd.hpp"
#include "sve/tensor.hpp"

namespace sve {

struct SveConfig {
    int n_members = 1;
    double sigma_init = 0.01;
    std::vector<std::string> target_layers{"*"};

    // Throws ConfigError on invalid values; warns to stderr above 0.5.
    void validate() const;
};

// Simple glob match supporting '*' wildcards; used for target_layers.
bool layer_name_matches(const std::string& name, const std::vector<std::string>& patterns);

// A linear layer reparameterized through the SVD of its pretrained weight:
// frozen singular vectors shared by all members, one trainable singular
// value vector per member, multiplicatively perturbed at init. The frozen
// factors never allocate gradients.
class SveLinear {
public:
    // Decomposes w, freezes the factors and the optional bias, and draws
    // member sigmas as sigma_pretrained * (1 + eps), eps ~ N(0, sigma_init^2)
    // from per-member child streams of rng. Negative draws clamp to zero.
    static SveLinear wrap(const Tensor& w, const std::optional<Tensor>& bias, const SveConfig& cfg,
                          Rng& rng, std::string name);

    // Reassembles a layer from stored arrays (checkpoint path); shapes are
    // trusted, no SVD is recomputed.
    static SveLinear from_parts(Tensor u, Tensor vt, Tensor sigma_pretrained,
                                std::vector<Tensor> sigma_members, std::optional<Tensor> bias,
                                std::string name);

    // u (sigma_m ⊙ (vt x)) + bias for a n x B input; never materializes the
    // member weight matrix. Gradient reaches only sigma_members[member].
    Tensor forward(int member, const Tensor& x) const;

    // In-place clamp of every member sigma entry to >= 0.
    void project_nonneg();

    int members() const { return static_cast<int>(sigma_members_.size()); }
    std::size_t out_features() const { return u_.rows(); }
    std::size_t in_features() const { return vt_.cols(); }
    std::size_t rank_dim() const { return sigma_pretrained_.size(); }
    const std::string& name() const { return name_; }

    const Tensor& u() const { return u_; }
    const Tensor& vt() const { return vt_; }
    const Tensor& sigma_pretrained() const { return sigma_pretrained_; }
    const std::optional<Tensor>& bias() const { return bias_; }
    const Tensor& sigma_member(int m) const;
    Tensor& sigma_member(int m);
    std::vector<Tensor>& sigma_members() { return sigma_members_; }

private:
    Tensor u_;                 // frozen m x r
    Tensor vt_;                // frozen r x n
    Tensor sigma_pretrained_;  // frozen length r
    std::optional<Tensor> bias_; // frozen length m
    std::vector<Tensor> sigma_members_; // trainable, length r each
    std::string name_;
};

struct OverheadStats {
    long long trainable_per_member = 0;  // sum over layers of min(m, n)
    long long base_params = 0;           // sum over layers of m * n
    long long head_params = 0;           // M * (d * C + C)
    long long total_trainable = 0;       // M * trainable_per_member + head_params
    double overhead_fraction_exact = 0;  // (M-1) * sum min(m,n) / sum m*n
    double overhead_fraction_approx = 0; // (M-1) / (2 d)
};

// Parameter accounting for a model description: per-layer shapes (m, n),
// hidden dimension d, ensemble size, and the head shape (d, C).
OverheadStats overhead_stats(const std::vector<std::pair<std::size_t, std::size_t>>& layer_shapes,
                             std::size_t hidden_dim, int members,
                             std::pair<std::size_t, std::size_t> head_shape);

struct DiversityRow {
    std::size_t sigma_index;
    std::vector<double> pct_change; // one entry per member
};

struct DiversityTable {
    std::string layer;
    std::vector<DiversityRow> rows;
};

// Per-member relative change 100 * (sigma_m[i] - sigma[i]) / sigma[i] for
// the top_k pretrained singular values; entries with sigma[i] == 0 are
// skipped.
DiversityTable diversity_report(const SveLinear& layer, std::size_t top_k);

} // namespace sve
