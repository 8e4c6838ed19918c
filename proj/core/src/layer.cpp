#include "sve/layer.hpp"

#include <algorithm>
#include <iostream>

#include "sve/error.hpp"

namespace sve {

void SveConfig::validate() const {
    if (n_members < 1) throw ConfigError("SveConfig.n_members: must be >= 1");
    if (sigma_init < 0.0) throw ConfigError("SveConfig.sigma_init: must be >= 0");
    if (sigma_init >= 1.0) throw ConfigError("SveConfig.sigma_init: must be < 1");
    if (sigma_init > 0.5) {
        std::cerr << "warning: sigma_init " << sigma_init
                  << " > 0.5; multiplicative init may produce negative draws\n";
    }
}

namespace {

bool glob_match(const char* pat, const char* str) {
    if (*pat == '\0') return *str == '\0';
    if (*pat == '*') {
        for (const char* s = str;; ++s) {
            if (glob_match(pat + 1, s)) return true;
            if (*s == '\0') return false;
        }
    }
    if (*str == '\0' || *pat != *str) return false;
    return glob_match(pat + 1, str + 1);
}

} // namespace

bool layer_name_matches(const std::string& name, const std::vector<std::string>& patterns) {
    for (const auto& p : patterns) {
        if (glob_match(p.c_str(), name.c_str())) return true;
    }
    return false;
}

SveLinear SveLinear::wrap(const Tensor& w, const std::optional<Tensor>& bias, const SveConfig& cfg,
                          Rng& rng, std::string name) {
    cfg.validate();
    if (bias && bias->size() != w.rows()) {
        throw DimensionError("SveLinear::wrap: bias length " + std::to_string(bias->size()) +
                             " does not match output features " + std::to_string(w.rows()));
    }
    SvdFactors f = svd(w);
    SveLinear layer;
    layer.u_ = f.u;
    layer.vt_ = f.vt;
    layer.sigma_pretrained_ = Tensor::from_data({f.sigma.size()}, f.sigma);
    if (bias) layer.bias_ = bias->detached_copy();
    layer.name_ = std::move(name);

    const std::size_t r = f.sigma.size();
    layer.sigma_members_.reserve(static_cast<std::size_t>(cfg.n_members));
    for (int m = 0; m < cfg.n_members; ++m) {
        std::vector<double> s(f.sigma);
        if (cfg.sigma_init > 0.0) {
            Rng child = rng.split(static_cast<std::uint64_t>(m));
            const std::vector<double> eps = child.normal_vec(r, 0.0, cfg.sigma_init);
            for (std::size_t i = 0; i < r; ++i) s[i] = std::max(0.0, s[i] * (1.0 + eps[i]));
        }
        layer.sigma_members_.push_back(Tensor::from_data({r}, std::move(s), true));
    }
    return layer;
}

SveLinear SveLinear::from_parts(Tensor u, Tensor vt, Tensor sigma_pretrained,
                                std::vector<Tensor> sigma_members, std::optional<Tensor> bias,
                                std::string name) {
    SveLinear layer;
    layer.u_ = std::move(u);
    layer.vt_ = std::move(vt);
    layer.sigma_pretrained_ = std::move(sigma_pretrained);
    layer.sigma_members_ = std::move(sigma_members);
    layer.bias_ = std::move(bias);
    layer.name_ = std::move(name);
    return layer;
}

const Tensor& SveLinear::sigma_member(int m) const {
    if (m < 0 || m >= members()) {
        throw IndexError("SveLinear: member " + std::to_string(m) + " out of range [0," +
                         std::to_string(members()) + ") in layer " + name_);
    }
    return sigma_members_[static_cast<std::size_t>(m)];
}

Tensor& SveLinear::sigma_member(int m) {
    if (m < 0 || m >= members()) {
        throw IndexError("SveLinear: member " + std::to_string(m) + " out of range [0," +
                         std::to_string(members()) + ") in layer " + name_);
    }
    return sigma_members_[static_cast<std::size_t>(m)];
}

Tensor SveLinear::forward(int member, const Tensor& x) const {
    const Tensor& sigma = sigma_member(member);
    Tensor h = matmul(vt_, x);
    h = row_scale(sigma, h);
    h = matmul(u_, h);
    if (bias_) h = add_col_broadcast(h, *bias_);
    return h;
}

void SveLinear::project_nonneg() {
    for (auto& s : sigma_members_) {
        for (double& v : s.mutable_data()) v = std::max(v, 0.0);
    }
}

OverheadStats overhead_stats(const std::vector<std::pair<std::size_t, std::size_t>>& layer_shapes,
                             std::size_t hidden_dim, int members,
                             std::pair<std::size_t, std::size_t> head_shape) {
    if (members < 1) throw ConfigError("overhead_stats: members must be >= 1");
    OverheadStats st;
    for (const auto& [m, n] : layer_shapes) {
        st.trainable_per_member += static_cast<long long>(std::min(m, n));
        st.base_params += static_cast<long long>(m) * static_cast<long long>(n);
    }
    const auto [d, c] = head_shape;
    st.head_params = static_cast<long long>(members) *
                     (static_cast<long long>(d) * static_cast<long long>(c) + static_cast<long long>(c));
    st.total_trainable = static_cast<long long>(members) * st.trainable_per_member + st.head_params;
    st.overhead_fraction_exact =
        st.base_params > 0
            ? static_cast<double>((members - 1) * st.trainable_per_member) / static_cast<double>(st.base_params)
            : 0.0;
    st.overhead_fraction_approx =
        hidden_dim > 0 ? static_cast<double>(members - 1) / (2.0 * static_cast<double>(hidden_dim)) : 0.0;
    return st;
}

DiversityTable diversity_report(const SveLinear& layer, std::size_t top_k) {
    if (top_k > layer.rank_dim()) {
        throw IndexError("diversity_report: top_k " + std::to_string(top_k) + " exceeds rank " +
                         std::to_string(layer.rank_dim()));
    }
    DiversityTable table;
    table.layer = layer.name();
    const auto& pre = layer.sigma_pretrained().data();
    for (std::size_t i = 0; i < top_k; ++i) {
        if (pre[i] == 0.0) continue;
        DiversityRow row;
        row.sigma_index = i;
        for (int m = 0; m < layer.members(); ++m) {
            const double sm = layer.sigma_member(m).data()[i];
            row.pct_change.push_back(100.0 * (sm - pre[i]) / pre[i]);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

} // namespace sve
