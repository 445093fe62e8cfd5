// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// First-layer weight covariance versus data covariance: after random-label
// training from an isotropic init, the weight second moment E[w w^T] should
// share eigenvectors with the input covariance, with eigenvalues related by
// a monotone transfer function.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridgelab/linalg.hpp"
#include "bridgelab/tensor.hpp"
#include "bridgelab/trainer.hpp"

namespace bridgelab {

// Uncentered second moment (1/m) sum_i w_i w_i^T of the rows of W [m, d].
// Appends a warning when m < d (rank-deficient estimate).
TensorD weight_second_moment(const TensorD& w, std::vector<std::string>* warnings = nullptr);

// (1/k) ||A^T B||_F^2 for orthonormal d x k frames; the mean squared cosine of
// the principal angles. Throws ContractViolation when either frame deviates
// from orthonormality by more than 1e-6 or the shapes disagree.
double subspace_alignment(const TensorD& a, const TensorD& b);

// Maximum-weight perfect matching on a square score matrix (Hungarian).
// Returns assignment[row] = column.
std::vector<std::size_t> max_weight_assignment(const TensorD& score);

struct TransferPair {
    std::size_t data_index = 0;    // eigenpair of the data covariance
    std::size_t weight_index = 0;  // matched eigenpair of the weight moment
    double sigma2 = 0.0;
    double tau2 = 0.0;
    double overlap = 0.0;  // |v . u|
};

struct TransferCurve {
    std::vector<TransferPair> pairs;  // in data-eigenvalue order
    double spearman = 0.0;            // rank correlation of (sigma2, tau2)
    std::string csv() const;          // sigma,tau
};

// Pairs eigenvectors by the maximal-|v_i . u_j| assignment. Inside a block of
// repeated data eigenvalues the matched weight eigenvalues are listed in
// descending order, since the eigenbasis there is arbitrary.
TransferCurve transfer_curve(const SymmetricEigen& data, const SymmetricEigen& weights, double rel_tol = 1e-9);

// Index ranges [begin, end) of eigenvalues equal within rel_tol.
std::vector<std::pair<std::size_t, std::size_t>> degenerate_blocks(const std::vector<double>& values,
                                                                   double rel_tol = 1e-9);

struct BaselineSummary {
    std::size_t draws = 0;
    double mean = 0.0;
    double stddev = 0.0;
    double p05 = 0.0;
    double p95 = 0.0;
};

// Alignment of `reference` (d x k) against `draws` Haar-random k-frames.
BaselineSummary random_alignment_baseline(const TensorD& reference, std::size_t draws, std::uint64_t seed);

struct TheoremConfig {
    std::vector<double> eigenvalues{16, 8, 4, 2, 1, 1, 1, 1};
    std::size_t hidden = 256;
    std::size_t samples = 4096;
    std::size_t num_classes = 10;
    std::size_t k = 4;
    double init_std = 1e-3;  // 0 means 1 / sqrt(d)
    bool relu = true;       // hidden activation; false selects GELU
    std::uint64_t seed = 0;
    std::uint64_t rotation_seed = 1;
    bool rotation_check = true;
    std::size_t baseline_draws = 1000;
    TrainConfig train = default_train();

    static TrainConfig default_train();
    void validate() const;
    nlohmann::json to_json() const;
};

struct CovarianceReport {
    std::vector<double> sigma2;        // data covariance eigenvalues, descending
    TensorD data_vectors;              // [d, d]
    std::vector<double> tau2_before;   // weight moment eigenvalues at init
    std::vector<double> tau2_after;    // after training
    TensorD weight_vectors;            // [d, d], after training
    std::vector<double> alignment_before;  // index k-1 holds the top-k score
    std::vector<double> alignment_after;
    bool degenerate = false;  // top-k data subspace not uniquely defined
    TransferCurve transfer;
    BaselineSummary baseline;
    double final_train_acc = 0.0;
    std::optional<double> rotated_alignment;  // top-k, paired rotated run
    std::vector<std::string> warnings;
    std::size_t k = 0;

    double top_k_before() const { return alignment_before.at(k - 1); }
    double top_k_after() const { return alignment_after.at(k - 1); }
    nlohmann::json to_json() const;
};

// Orthogonal G with G^T S G = S for S = Q diag(lambda) Q^T: sign flips on
// simple eigenvalues and seeded rotations inside repeated-eigenvalue blocks.
TensorD covariance_preserving_rotation(const TensorD& q, const std::vector<double>& eigenvalues,
                                       std::uint64_t seed);

// Trains a one-hidden-layer network on fully random labels by SGD and
// compares the first-layer weight moment with the data covariance.
CovarianceReport run_theorem_check(const TheoremConfig& cfg);

}  // namespace bridgelab
