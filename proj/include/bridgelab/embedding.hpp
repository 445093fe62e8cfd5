// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Feature separability: pooled final hidden states, a deterministic PCA
// projection, k-means clustering and cluster-quality scores against labels.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridgelab/data.hpp"
#include "bridgelab/model.hpp"

namespace bridgelab {

// Mean-pooled final-layer states (after the final layer norm), [N, d_model].
TensorD extract_hidden(const Model& model, const TensorF& images, std::size_t batch_size = 256);

struct Projection2D {
    TensorD coords;                  // [N, 2]
    std::vector<double> explained;   // variance share of each kept component
    std::vector<double> components;  // two unit loadings, row-major [2, d]
    bool rank_deficient = false;     // second coordinate zeroed
};

// Projects centered rows onto the top two principal axes. Each axis is signed
// so its largest-magnitude loading is positive. Requires N >= 3.
Projection2D reduce2d(const TensorD& h);

struct ClusterResult {
    std::vector<int> assignments;
    TensorD centroids;                    // [k, d]
    double inertia = 0.0;
    std::vector<double> inertia_history;  // after each assignment step
    std::size_t iterations = 0;
    bool converged = false;
};

// k-means++ seeding then Lloyd iterations until the assignment is a fixpoint
// or `max_iters` is reached. Arg-min ties go to the lower cluster index; an
// emptied cluster keeps its previous centroid. Throws ContractViolation for
// k == 0 or k > N.
ClusterResult kmeans(const TensorD& points, std::size_t k, std::uint64_t seed, std::size_t max_iters = 300);

// Mean silhouette with Euclidean distances; samples in singleton clusters
// score 0. Empty when fewer than two clusters are occupied.
std::optional<double> silhouette(const TensorD& points, const std::vector<int>& assignments);

// Hubert-Arabie adjusted Rand index. Returns 1 when both partitions are
// trivial in the same way (the index is otherwise 0/0).
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

struct ClusterQuality {
    std::optional<double> silhouette;
    double ari = 0.0;
    std::vector<std::string> flags;

    nlohmann::json to_json() const;
};

ClusterQuality cluster_quality(const TensorD& points, const ClusterResult& result, const std::vector<int>& labels);

struct EmbeddingReport {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    Projection2D projection;
    ClusterResult pca_clusters;
    ClusterQuality pca_quality;
    ClusterResult raw_clusters;
    ClusterQuality raw_quality;
    std::vector<int> labels;

    nlohmann::json to_json() const;
    // "index,x,y,label,cluster_pca,cluster_raw"
    std::string coords_csv() const;
};

// Clusters in both the 2D projection and the raw hidden space. k = 0 uses the
// number of distinct labels.
EmbeddingReport embedding_report(const TensorD& hidden, const std::vector<int>& labels, std::size_t k,
                                 std::uint64_t seed);
EmbeddingReport embedding_report(const Model& model, const TensorF& images, const std::vector<int>& labels,
                                 std::size_t k, std::uint64_t seed);

}  // namespace bridgelab
