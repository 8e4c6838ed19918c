#include "sve/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sve/error.hpp"

namespace sve {
namespace {

constexpr int kMaxSweeps = 60;

struct ColMat {
    // Column-major storage: cols[j] is column j.
    std::vector<std::vector<double>> cols;

    std::size_t n_rows() const { return cols.empty() ? 0 : cols[0].size(); }
    std::size_t n_cols() const { return cols.size(); }
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// One-sided Jacobi on a (m x n, m >= n): orthogonalizes the columns of a
// in place accumulating the right rotations into v (n x n, starts as I).
// Returns the final Gram residual max |a_i . a_j| / max_norm_sq.
//
// A pair is rotated while |a_p . a_q| exceeds 1e-13 * |a_p| * |a_q|; this
// is strictly below the 1e-12 * sigma_1^2 stop bound and keeps the
// normalized u columns orthogonal to ~1e-13 even when the spectrum spans
// several decades.
double hestenes_sweeps(ColMat& a, ColMat& v) {
    constexpr double kPairTol = 1e-13;
    const std::size_t n = a.n_cols();
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double max_norm_sq = 0.0;
        for (std::size_t j = 0; j < n; ++j) max_norm_sq = std::max(max_norm_sq, dot(a.cols[j], a.cols[j]));
        if (max_norm_sq == 0.0) return 0.0; // zero matrix

        double max_off = 0.0;
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double gamma = dot(a.cols[p], a.cols[q]);
                max_off = std::max(max_off, std::fabs(gamma));
                if (gamma == 0.0) continue;
                const double alpha = dot(a.cols[p], a.cols[p]);
                const double beta = dot(a.cols[q], a.cols[q]);
                if (std::fabs(gamma) <= kPairTol * std::sqrt(alpha) * std::sqrt(beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                auto rotate = [c, s](std::vector<double>& x, std::vector<double>& y) {
                    for (std::size_t i = 0; i < x.size(); ++i) {
                        const double xi = x[i];
                        const double yi = y[i];
                        x[i] = c * xi - s * yi;
                        y[i] = s * xi + c * yi;
                    }
                };
                rotate(a.cols[p], a.cols[q]);
                rotate(v.cols[p], v.cols[q]);
            }
        }
        if (!rotated) return max_off / max_norm_sq;
    }
    // Residual report after the cap.
    double max_norm_sq = 0.0, max_off = 0.0;
    const std::size_t nn = a.n_cols();
    for (std::size_t j = 0; j < nn; ++j) max_norm_sq = std::max(max_norm_sq, dot(a.cols[j], a.cols[j]));
    for (std::size_t p = 0; p + 1 < nn; ++p)
        for (std::size_t q = p + 1; q < nn; ++q)
            max_off = std::max(max_off, std::fabs(dot(a.cols[p], a.cols[q])));
    throw ConvergenceError("svd: Jacobi sweeps did not converge after " + std::to_string(kMaxSweeps) +
                           " sweeps; residual " + std::to_string(max_off / max_norm_sq));
}

// Fills zero-sigma columns of u with unit vectors orthogonal to the columns
// accepted so far. Candidates are the standard basis vectors; the one with
// the largest residual after orthogonalization wins (ties to lowest index).
void complete_basis(std::vector<std::vector<double>>& u_cols, std::size_t first_zero) {
    const std::size_t m = u_cols[0].size();
    for (std::size_t j = first_zero; j < u_cols.size(); ++j) {
        std::vector<double> best;
        double best_norm_sq = -1.0;
        for (std::size_t e = 0; e < m; ++e) {
            std::vector<double> cand(m, 0.0);
            cand[e] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t k = 0; k < j; ++k) {
                    const double proj = dot(cand, u_cols[k]);
                    for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * u_cols[k][i];
                }
            }
            const double nsq = dot(cand, cand);
            if (nsq > best_norm_sq + 1e-15) {
                best_norm_sq = nsq;
                best = std::move(cand);
            }
        }
        const double inv = 1.0 / std::sqrt(best_norm_sq);
        for (double& x : best) x *= inv;
        u_cols[j] = std::move(best);
    }
}

SvdFactors svd_tall(const Tensor& w) {
    const std::size_t m = w.rows(), n = w.cols();
    ColMat a;
    a.cols.assign(n, std::vector<double>(m));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) a.cols[j][i] = w.at(i, j);
    ColMat v;
    v.cols.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) v.cols[j][j] = 1.0;

    hestenes_sweeps(a, v);

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(dot(a.cols[j], a.cols[j]));

    // Descending sort, ties by original column index.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&sigma](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    std::vector<std::vector<double>> u_cols(n);
    std::vector<double> sigma_sorted(n);
    std::size_t first_zero = n;
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        sigma_sorted[j] = sigma[src];
        if (sigma[src] > 0.0) {
            u_cols[j] = a.cols[src];
            const double inv = 1.0 / sigma[src];
            for (double& x : u_cols[j]) x *= inv;
        } else {
            u_cols[j].assign(m, 0.0);
            first_zero = std::min(first_zero, j);
        }
    }
    if (first_zero < n) complete_basis(u_cols, first_zero);

    SvdFactors f;
    f.sigma = std::move(sigma_sorted);
    f.u = Tensor::zeros({m, n});
    f.vt = Tensor::zeros({n, n});
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < m; ++i) f.u.at(i, j) = u_cols[j][i];
        for (std::size_t i = 0; i < n; ++i) f.vt.at(j, i) = v.cols[order[j]][i];
    }
    return f;
}

void apply_sign_convention(SvdFactors& f) {
    const std::size_t m = f.u.rows(), r = f.u.cols(), n = f.vt.cols();
    for (std::size_t j = 0; j < r; ++j) {
        std::size_t arg = 0;
        double best = std::fabs(f.u.at(0, j));
        for (std::size_t i = 1; i < m; ++i) {
            const double v = std::fabs(f.u.at(i, j));
            if (v > best) {
                best = v;
                arg = i;
            }
        }
        if (f.u.at(arg, j) < 0.0) {
            for (std::size_t i = 0; i < m; ++i) f.u.at(i, j) = -f.u.at(i, j);
            for (std::size_t i = 0; i < n; ++i) f.vt.at(j, i) = -f.vt.at(j, i);
        }
    }
}

} // namespace

SvdFactors svd(const Tensor& w) {
    if (w.rank() > 2) throw DimensionError("svd: expected a matrix, got " + shape_str(w.shape()));
    if (!w.all_finite()) throw NumericError("svd: input has non-finite entries");
    const std::size_t m = w.rows(), n = w.cols();

    SvdFactors f;
    if (m >= n) {
        f = svd_tall(w);
    } else {
        // w = (w^T)^T: factor the transpose and swap the roles of u and v.
        Tensor wt = Tensor::zeros({n, m});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) wt.at(j, i) = w.at(i, j);
        SvdFactors ft = svd_tall(wt);
        const std::size_t r = ft.sigma.size(); // == m
        f.sigma = ft.sigma;
        f.u = Tensor::zeros({m, r});
        f.vt = Tensor::zeros({r, n});
        // u = V of the transpose, vt = U^T of the transpose.
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < r; ++j) f.u.at(i, j) = ft.vt.at(j, i);
        for (std::size_t j = 0; j < r; ++j)
            for (std::size_t i = 0; i < n; ++i) f.vt.at(j, i) = ft.u.at(i, j);
    }
    apply_sign_convention(f);
    return f;
}

Tensor reconstruct(const SvdFactors& f) {
    const std::size_t m = f.u.rows(), r = f.sigma.size(), n = f.vt.cols();
    Tensor w = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < r; ++k) {
            const double us = f.u.at(i, k) * f.sigma[k];
            if (us == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) w.at(i, j) += us * f.vt.at(k, j);
        }
    }
    return w;
}

SpectrumStats spectrum_stats(const SvdFactors& f, double eps) {
    SpectrumStats st;
    st.energy_fractions.resize(f.sigma.size(), 0.0);
    const double s1 = f.sigma.empty() ? 0.0 : f.sigma[0];
    st.rank = 0;
    double total = 0.0;
    for (double s : f.sigma) total += s * s;
    double running = 0.0;
    for (std::size_t i = 0; i < f.sigma.size(); ++i) {
        if (f.sigma[i] > eps * s1) ++st.rank;
        running += f.sigma[i] * f.sigma[i];
        st.energy_fractions[i] = total > 0.0 ? running / total : 0.0;
    }
    if (s1 == 0.0) st.rank = 0;
    return st;
}

} // namespace sve
