// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "bridgelab/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "bridgelab/format.hpp"
#include "bridgelab/linalg.hpp"
#include "bridgelab/trainer.hpp"

namespace bridgelab {

using nlohmann::json;

namespace {

double sq_dist(const TensorD& points, std::size_t i, const TensorD& centers, std::size_t c) {
    const std::size_t d = points.dim(1);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double diff = points(i, j) - centers(c, j);
        s += diff * diff;
    }
    return s;
}

double dist(const TensorD& points, std::size_t a, std::size_t b) { return std::sqrt(sq_dist(points, a, points, b)); }

void check_matrix(const TensorD& m, const char* what) {
    if (m.rank() != 2 || m.dim(0) == 0 || m.dim(1) == 0) {
        throw ContractViolation(std::string(what) + ": expected a non-empty [N, d] matrix, got " +
                                shape_to_string(m.shape()));
    }
}

double choose2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

TensorD extract_hidden(const Model& model, const TensorF& images, std::size_t batch_size) {
    return extract_features(model, images, batch_size).cast<double>();
}

// ---------------------------------------------------------------------------
// PCA

Projection2D reduce2d(const TensorD& h) {
    check_matrix(h, "reduce2d");
    const std::size_t n = h.dim(0);
    const std::size_t d = h.dim(1);
    if (n < 3) {
        throw ContractViolation("reduce2d: need at least 3 rows, got " + std::to_string(n));
    }
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            mean[j] += h(i, j);
        }
    }
    for (double& m : mean) {
        m /= static_cast<double>(n);
    }
    TensorD centered({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            centered(i, j) = h(i, j) - mean[j];
        }
    }
    TensorD cov({d, d});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < d; ++a) {
            const double x = centered(i, a);
            for (std::size_t b = a; b < d; ++b) {
                cov(a, b) += x * centered(i, b);
            }
        }
    }
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a; b < d; ++b) {
            cov(a, b) /= static_cast<double>(n);
            cov(b, a) = cov(a, b);
        }
    }
    const SymmetricEigen eig = eig_sym(cov);
    double total = 0.0;
    for (const double v : eig.values) {
        total += std::max(v, 0.0);
    }

    Projection2D p;
    p.coords = TensorD({n, 2});
    p.components.assign(2 * d, 0.0);
    const std::size_t kept = std::min<std::size_t>(2, d);
    for (std::size_t c = 0; c < kept; ++c) {
        const double lambda = std::max(eig.values[c], 0.0);
        if (c == 1 && (total == 0.0 || lambda <= 1e-12 * total)) {
            p.rank_deficient = true;
            p.explained.push_back(0.0);
            break;
        }
        std::size_t arg = 0;
        for (std::size_t j = 1; j < d; ++j) {
            if (std::abs(eig.vectors(j, c)) > std::abs(eig.vectors(arg, c))) {
                arg = j;
            }
        }
        const double sign = eig.vectors(arg, c) < 0.0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < d; ++j) {
            p.components[c * d + j] = sign * eig.vectors(j, c);
        }
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                s += centered(i, j) * p.components[c * d + j];
            }
            p.coords(i, c) = s;
        }
        p.explained.push_back(total > 0.0 ? lambda / total : 0.0);
    }
    if (kept < 2) {
        p.rank_deficient = true;
        p.explained.push_back(0.0);
    }
    return p;
}

// ---------------------------------------------------------------------------
// k-means

ClusterResult kmeans(const TensorD& points, std::size_t k, std::uint64_t seed, std::size_t max_iters) {
    check_matrix(points, "kmeans");
    const std::size_t n = points.dim(0);
    const std::size_t d = points.dim(1);
    if (k == 0 || k > n) {
        throw ContractViolation("kmeans: k = " + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
    }
    RngStream rng(seed, hash_string("embedding.kmeans"));
    ClusterResult r;
    r.centroids = TensorD({k, d});
    auto set_center = [&](std::size_t c, std::size_t i) {
        for (std::size_t j = 0; j < d; ++j) {
            r.centroids(c, j) = points(i, j);
        }
    };

    // k-means++: each new center is drawn with probability proportional to
    // the squared distance to the nearest chosen center.
    set_center(0, rng.uniform_index(n));
    std::vector<double> nearest(n);
    for (std::size_t i = 0; i < n; ++i) {
        nearest[i] = sq_dist(points, i, r.centroids, 0);
    }
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (const double v : nearest) {
            total += v;
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += nearest[i];
                if (acc > target && nearest[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.uniform_index(n);
        }
        set_center(c, pick);
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], sq_dist(points, i, r.centroids, c));
        }
    }

    r.assignments.assign(n, -1);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(points, i, r.centroids, 0);
            for (std::size_t c = 1; c < k; ++c) {
                const double dc = sq_dist(points, i, r.centroids, c);
                if (dc < best_d) {
                    best_d = dc;
                    best = static_cast<int>(c);
                }
            }
            changed = changed || r.assignments[i] != best;
            r.assignments[i] = best;
            inertia += best_d;
        }
        r.inertia_history.push_back(inertia);
        r.inertia = inertia;
        r.iterations = iter + 1;
        if (!changed) {
            r.converged = true;
            break;
        }
        TensorD sums({k, d});
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(r.assignments[i]);
            ++counts[c];
            for (std::size_t j = 0; j < d; ++j) {
                sums(c, j) += points(i, j);
            }
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                continue;
            }
            for (std::size_t j = 0; j < d; ++j) {
                r.centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
            }
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Quality

std::optional<double> silhouette(const TensorD& points, const std::vector<int>& assignments) {
    check_matrix(points, "silhouette");
    const std::size_t n = points.dim(0);
    if (assignments.size() != n) {
        throw ContractViolation("silhouette: " + std::to_string(assignments.size()) + " assignments for " +
                                std::to_string(n) + " points");
    }
    std::map<int, std::size_t> sizes;
    for (const int a : assignments) {
        ++sizes[a];
    }
    if (sizes.size() < 2) {
        return std::nullopt;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::map<int, double> sum;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                sum[assignments[j]] += dist(points, i, j);
            }
        }
        const std::size_t own = sizes[assignments[i]];
        if (own == 1) {
            continue;
        }
        const double a = sum[assignments[i]] / static_cast<double>(own - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [c, size] : sizes) {
            if (c != assignments[i]) {
                b = std::min(b, sum[c] / static_cast<double>(size));
            }
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) {
        throw ContractViolation("adjusted_rand_index: partitions of different sizes");
    }
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> rows;
    std::map<int, double> cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }
    double index = 0.0;
    for (const auto& [key, count] : joint) {
        index += choose2(count);
    }
    double sum_a = 0.0;
    double sum_b = 0.0;
    for (const auto& [key, count] : rows) {
        sum_a += choose2(count);
    }
    for (const auto& [key, count] : cols) {
        sum_b += choose2(count);
    }
    const double pairs = choose2(static_cast<double>(a.size()));
    const double expected = pairs > 0.0 ? sum_a * sum_b / pairs : 0.0;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) {
        return 1.0;
    }
    return (index - expected) / (max_index - expected);
}

ClusterQuality cluster_quality(const TensorD& points, const ClusterResult& result, const std::vector<int>& labels) {
    if (labels.size() != result.assignments.size()) {
        throw ContractViolation("cluster_quality: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(result.assignments.size()) + " samples");
    }
    ClusterQuality q;
    q.silhouette = silhouette(points, result.assignments);
    if (!q.silhouette) {
        q.flags.push_back("silhouette undefined: a single occupied cluster");
    }
    q.ari = adjusted_rand_index(result.assignments, labels);
    return q;
}

json ClusterQuality::to_json() const {
    return {{"silhouette", silhouette ? json(*silhouette) : json(nullptr)}, {"ari", ari}, {"flags", flags}};
}

// ---------------------------------------------------------------------------
// Report

namespace {

json cluster_json(const ClusterResult& r, const ClusterQuality& q) {
    return {{"inertia", r.inertia},
            {"iterations", r.iterations},
            {"converged", r.converged},
            {"quality", q.to_json()}};
}

}  // namespace

json EmbeddingReport::to_json() const {
    return {{"k", k},
            {"seed", seed},
            {"samples", labels.size()},
            {"reduction", "pca"},
            {"explained_variance", projection.explained},
            {"rank_deficient", projection.rank_deficient},
            {"pca", cluster_json(pca_clusters, pca_quality)},
            {"raw", cluster_json(raw_clusters, raw_quality)}};
}

std::string EmbeddingReport::coords_csv() const {
    CsvWriter out({"index", "x", "y", "label", "cluster_pca", "cluster_raw"});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out.row({std::to_string(i), format_double(projection.coords(i, 0)), format_double(projection.coords(i, 1)),
                 std::to_string(labels[i]), std::to_string(pca_clusters.assignments[i]),
                 std::to_string(raw_clusters.assignments[i])});
    }
    return out.str();
}

EmbeddingReport embedding_report(const TensorD& hidden, const std::vector<int>& labels, std::size_t k,
                                 std::uint64_t seed) {
    check_matrix(hidden, "embedding_report");
    if (labels.size() != hidden.dim(0)) {
        throw ContractViolation("embedding_report: label count differs from row count");
    }
    EmbeddingReport r;
    r.k = k == 0 ? std::set<int>(labels.begin(), labels.end()).size() : k;
    r.seed = seed;
    r.labels = labels;
    r.projection = reduce2d(hidden);
    r.pca_clusters = kmeans(r.projection.coords, r.k, seed);
    r.pca_quality = cluster_quality(r.projection.coords, r.pca_clusters, labels);
    r.raw_clusters = kmeans(hidden, r.k, seed);
    r.raw_quality = cluster_quality(hidden, r.raw_clusters, labels);
    return r;
}

EmbeddingReport embedding_report(const Model& model, const TensorF& images, const std::vector<int>& labels,
                                 std::size_t k, std::uint64_t seed) {
    return embedding_report(extract_hidden(model, images), labels, k, seed);
}

}  // namespace bridgelab
