// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "bridgelab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace bridgelab {

namespace {

void require_matrix(const TensorD& a, const char* what) {
    if (a.rank() != 2) {
        throw ContractViolation(std::string(what) + ": expected a rank-2 matrix, got " + shape_to_string(a.shape()));
    }
}

}  // namespace

TensorD identity(std::size_t n) {
    TensorD out({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        out(i, i) = 1.0;
    }
    return out;
}

TensorD transpose(const TensorD& a) {
    require_matrix(a, "transpose");
    TensorD out({a.dim(1), a.dim(0)});
    for (std::size_t i = 0; i < a.dim(0); ++i) {
        for (std::size_t j = 0; j < a.dim(1); ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

TensorD matmul(const TensorD& a, const TensorD& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw ContractViolation("matmul: " + shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
    }
    const std::size_t n = a.dim(0);
    const std::size_t k = a.dim(1);
    const std::size_t m = b.dim(1);
    TensorD out({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a(i, p);
            for (std::size_t j = 0; j < m; ++j) {
                out(i, j) += aip * b(p, j);
            }
        }
    }
    return out;
}

double frobenius_norm(const TensorD& a) {
    double s = 0.0;
    for (const double v : a.data()) {
        s += v * v;
    }
    return std::sqrt(s);
}

SymmetricEigen eig_sym(const TensorD& input, double asymmetry_tol) {
    require_matrix(input, "eig_sym");
    const std::size_t n = input.dim(0);
    if (input.dim(1) != n) {
        throw ContractViolation("eig_sym: matrix is not square " + shape_to_string(input.shape()));
    }
    double asym = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            asym = std::max(asym, std::abs(input(i, j) - input(j, i)));
        }
    }
    if (asym > asymmetry_tol) {
        throw ContractViolation("eig_sym: matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
    }

    TensorD a = input;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            a(i, j) = a(j, i) = 0.5 * (input(i, j) + input(j, i));
        }
    }
    TensorD v = identity(n);
    const double scale = std::max(frobenius_norm(a), std::numeric_limits<double>::min());

    SymmetricEigen result;
    constexpr std::size_t kMaxSweeps = 100;
    for (; result.sweeps < kMaxSweeps; ++result.sweeps) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                off += a(i, j) * a(i, j);
            }
        }
        if (std::sqrt(off) <= 1e-15 * scale) {
            break;
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= 1e-300) {
                    continue;
                }
                // Rotation angle that annihilates a(p, q) (Golub & Van Loan, symmetric Schur).
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
    result.values.resize(n);
    result.vectors = TensorD({n, n});
    for (std::size_t j = 0; j < n; ++j) {
        result.values[j] = a(order[j], order[j]);
        // Sign convention: the largest-magnitude component is positive.
        std::size_t arg = 0;
        for (std::size_t k = 1; k < n; ++k) {
            if (std::abs(v(k, order[j])) > std::abs(v(arg, order[j])) + 1e-12) {
                arg = k;
            }
        }
        const double sign = v(arg, order[j]) < 0 ? -1.0 : 1.0;
        for (std::size_t k = 0; k < n; ++k) {
            result.vectors(k, j) = sign * v(k, order[j]);
        }
    }
    const double spread = std::max(std::abs(result.values.front()), std::abs(result.values.back()));
    for (std::size_t j = 0; j + 1 < n; ++j) {
        if (result.values[j] - result.values[j + 1] <= 1e-9 * std::max(spread, 1e-300)) {
            result.degenerate = true;
        }
    }
    for (std::size_t j = 0; j < n; ++j) {
        double r2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double av = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                av += input(i, k) * result.vectors(k, j);
            }
            const double diff = av - result.values[j] * result.vectors(i, j);
            r2 += diff * diff;
        }
        result.max_residual = std::max(result.max_residual, std::sqrt(r2));
    }
    return result;
}

TensorD random_orthogonal(std::size_t n, RngStream rng) {
    if (n == 0) {
        throw ContractViolation("random_orthogonal: dimension must be positive");
    }
    TensorD g({n, n});
    for (double& x : g.data()) {
        x = rng.normal();
    }
    // Modified Gram-Schmidt on the columns; R's diagonal is the column norm,
    // which is positive, so the Haar sign correction is already applied.
    TensorD q = g;
    for (std::size_t j = 0; j < n; ++j) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t i = 0; i < j; ++i) {
                double dot = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    dot += q(k, i) * q(k, j);
                }
                for (std::size_t k = 0; k < n; ++k) {
                    q(k, j) -= dot * q(k, i);
                }
            }
        }
        double norm = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            norm += q(k, j) * q(k, j);
        }
        norm = std::sqrt(norm);
        if (norm < 1e-12) {
            throw Error("random_orthogonal: degenerate Gaussian draw");
        }
        for (std::size_t k = 0; k < n; ++k) {
            q(k, j) /= norm;
        }
    }
    return q;
}

TensorD leading_columns(const TensorD& m, std::size_t k) {
    require_matrix(m, "leading_columns");
    if (k == 0 || k > m.dim(1)) {
        throw ContractViolation("leading_columns: k out of range");
    }
    TensorD out({m.dim(0), k});
    for (std::size_t i = 0; i < m.dim(0); ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            out(i, j) = m(i, j);
        }
    }
    return out;
}

double orthonormality_error(const TensorD& q) {
    require_matrix(q, "orthonormality_error");
    const TensorD gram = matmul(transpose(q), q);
    double err = 0.0;
    for (std::size_t i = 0; i < gram.dim(0); ++i) {
        for (std::size_t j = 0; j < gram.dim(1); ++j) {
            err = std::max(err, std::abs(gram(i, j) - (i == j ? 1.0 : 0.0)));
        }
    }
    return err;
}

}  // namespace bridgelab
