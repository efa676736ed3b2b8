#include "fedpt/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedpt {

Vec Matrix::apply(std::span<const double> x) const {
    if (x.size() != cols) throw DimensionMismatch("Matrix::apply: size mismatch");
    Vec y(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        double acc = 0.0;
        const double* row = data.data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
    return y;
}

double SymMatrix::max_asymmetry() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = i + 1; j < dim; ++j)
            worst = std::max(worst, std::abs(at(i, j) - at(j, i)));
    return worst;
}

double SymMatrix::frobenius_norm() const {
    double acc = 0.0;
    for (double x : data) acc += x * x;
    return std::sqrt(acc);
}

Vec SymMatrix::apply(std::span<const double> x) const {
    if (x.size() != dim) throw DimensionMismatch("SymMatrix::apply: size mismatch");
    Vec y(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
        double acc = 0.0;
        const double* row = data.data() + i * dim;
        for (std::size_t j = 0; j < dim; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
    return y;
}

namespace {

double offdiag_norm(const SymMatrix& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.dim; ++i)
        for (std::size_t j = i + 1; j < a.dim; ++j) acc += 2.0 * a.at(i, j) * a.at(i, j);
    return std::sqrt(acc);
}

}  // namespace

Spectrum sym_eigen(const SymMatrix& m, bool want_vectors, int max_sweeps) {
    const std::size_t n = m.dim;
    if (n < 1) throw DimensionMismatch("sym_eigen: dim must be >= 1");
    if (n > 4096) throw DimensionTooLarge("sym_eigen: dim exceeds 4096");
    if (m.max_asymmetry() > 1e-9) throw NonSymmetric("sym_eigen: input not symmetric within 1e-9");

    SymMatrix a = m;
    // Enforce exact symmetry of the working copy so rotations stay consistent.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (a.at(i, j) + a.at(j, i));
            a.at(i, j) = a.at(j, i) = v;
        }

    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

    const double tol = 1e-12 * a.frobenius_norm();

    bool converged = offdiag_norm(a) <= tol;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (apq == 0.0) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                const double app = a.at(p, p);
                const double aqq = a.at(q, q);
                a.at(p, p) = app - t * apq;
                a.at(q, q) = aqq + t * apq;
                a.at(p, q) = a.at(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    if (k == p || k == q) continue;
                    const double akp = a.at(k, p);
                    const double akq = a.at(k, q);
                    a.at(k, p) = a.at(p, k) = c * akp - s * akq;
                    a.at(k, q) = a.at(q, k) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v.at(k, p);
                    const double vkq = v.at(k, q);
                    v.at(k, p) = c * vkp - s * vkq;
                    v.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
        converged = offdiag_norm(a) <= tol;
    }
    if (!converged) throw NoConvergence("sym_eigen: Jacobi sweep cap exceeded");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (a.at(x, x) != a.at(y, y)) return a.at(x, x) < a.at(y, y);
        return x < y;
    });

    Spectrum out;
    out.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) out.values[k] = a.at(order[k], order[k]);
    if (want_vectors) {
        Matrix vs(n, n);
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < n; ++i) vs.at(i, k) = v.at(i, order[k]);
        out.vectors = std::move(vs);
    }
    return out;
}

double dot(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw DimensionMismatch("dot: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
    return acc;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.empty() || u.size() != v.size())
        throw DimensionMismatch("cosine: vectors must share a positive length");
    const double nu = norm2(u);
    const double nv = norm2(v);
    if (nu < 1e-30 || nv < 1e-30) throw ZeroVector("cosine: zero-norm input");
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

Vec weighted_average(const std::vector<Vec>& items, std::span<const double> weights) {
    if (items.empty()) throw EmptyInput("weighted_average: no items");
    if (weights.size() != items.size())
        throw DimensionMismatch("weighted_average: one weight per item required");
    const std::size_t len = items.front().size();
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw InvalidParams("weighted_average: weights must be nonnegative");
        total += w;
    }
    if (total <= 0.0) throw InvalidParams("weighted_average: weight sum must be positive");

    Vec out(len, 0.0);
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].size() != len) throw DimensionMismatch("weighted_average: ragged items");
        const double w = weights[i] / total;
        for (std::size_t k = 0; k < len; ++k) out[k] += w * items[i][k];
    }
    return out;
}

}  // namespace fedpt
