#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fedpt/errors.hpp"

namespace fedpt {

using Vec = std::vector<double>;

// Dense row-major matrix. Small enough at simulator scale that no structure
// beyond a flat buffer is warranted.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    // y = M x
    Vec apply(std::span<const double> x) const;
};

// Symmetric real matrix; symmetry is a caller obligation, checked by the
// operations that require it.
struct SymMatrix {
    std::size_t dim = 0;
    Vec data;  // row-major, dim*dim

    SymMatrix() = default;
    explicit SymMatrix(std::size_t n) : dim(n), data(n * n, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return data[i * dim + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * dim + j]; }

    double max_asymmetry() const;
    double frobenius_norm() const;
    Vec apply(std::span<const double> x) const;
};

// Eigenvalues sorted ascending; when present, vectors.at(i, k) is component i
// of the eigenvector paired with values[k].
struct Spectrum {
    Vec values;
    std::optional<Matrix> vectors;
};

// Cyclic Jacobi eigendecomposition. Deterministic: fixed sweep order, fixed
// ascending (value, index) sort. Convergence when the off-diagonal Frobenius
// norm drops below 1e-12 * ||m||_F; throws NoConvergence past max_sweeps.
// Throws NonSymmetric when max|a_ij - a_ji| > 1e-9 and DimensionTooLarge
// beyond dim 4096.
Spectrum sym_eigen(const SymMatrix& m, bool want_vectors, int max_sweeps = 100);

// Cosine similarity. Throws ZeroVector when either norm is below 1e-30; the
// kernel construction substitutes 0 (off-diagonal) / 1 (diagonal) for that
// case. Result clamped to [-1, 1].
double cosine(std::span<const double> u, std::span<const double> v);

// result[k] = sum_i weights[i] * items[i][k] / sum_i weights[i]
Vec weighted_average(const std::vector<Vec>& items, std::span<const double> weights);

double dot(std::span<const double> u, std::span<const double> v);
double norm2(std::span<const double> v);

}  // namespace fedpt
