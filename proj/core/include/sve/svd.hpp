#pragma once

#include <cstddef>
#include <vector>

#include "sve/tensor.hpp"

namespace sve {

// Factor triple of a real m x n matrix: w = u * diag(sigma) * vt with
// r = min(m, n). sigma is sorted descending and non-negative; u (m x r) and
// vt (r x n) have orthonormal columns / rows.
struct SvdFactors {
    Tensor u;
    std::vector<double> sigma;
    Tensor vt;

    std::size_t rank_dim() const { return sigma.size(); }
};

// Dense SVD by one-sided Jacobi (Hestenes) with cyclic sweeps. Converges
// when every off-diagonal Gram entry falls below 1e-12 * sigma_1^2; capped
// at 60 sweeps (ConvergenceError beyond that, reporting the residual).
//
// Deterministic sign convention: in each column of u the entry of largest
// absolute value is made non-negative (ties resolved to the lowest row
// index), negating the matching row of vt. Ties in the descending sigma
// sort are broken by original column index. Exactly-zero singular values
// are kept; their u columns are completed to an orthonormal basis.
SvdFactors svd(const Tensor& w);

// u * diag(sigma) * vt.
Tensor reconstruct(const SvdFactors& f);

struct SpectrumStats {
    // Count of sigma_i > eps * sigma_1.
    std::size_t rank;
    // Cumulative fractions of sum sigma_i^2; all zeros when the spectrum is zero.
    std::vector<double> energy_fractions;
};

SpectrumStats spectrum_stats(const SvdFactors& f, double eps = 1e-8);

} // namespace sve
