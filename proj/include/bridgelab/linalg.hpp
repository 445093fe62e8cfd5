// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small dense 64-bit linear algebra on rank-2 TensorD matrices.

#pragma once

#include <cstddef>
#include <vector>

#include "bridgelab/rng.hpp"
#include "bridgelab/tensor.hpp"

namespace bridgelab {

struct SymmetricEigen {
    std::vector<double> values;  // descending
    TensorD vectors;             // column j pairs with values[j]
    bool degenerate = false;     // some eigenvalues coincide to working precision
    double max_residual = 0.0;   // max_j ||A v_j - lambda_j v_j||
    std::size_t sweeps = 0;
};

// Cyclic Jacobi. Throws ContractViolation when max |A - A^T| exceeds
// `asymmetry_tol` or the matrix is not square.
SymmetricEigen eig_sym(const TensorD& a, double asymmetry_tol = 1e-8);

TensorD identity(std::size_t n);
TensorD transpose(const TensorD& a);
TensorD matmul(const TensorD& a, const TensorD& b);
double frobenius_norm(const TensorD& a);

// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the sign of
// R's diagonal folded into Q.
TensorD random_orthogonal(std::size_t n, RngStream rng);

// First k columns of `m` as an [rows, k] matrix.
TensorD leading_columns(const TensorD& m, std::size_t k);

// max |Q^T Q - I| over the columns of q.
double orthonormality_error(const TensorD& q);

}  // namespace bridgelab
