// SPDX-License-Identifier: Apache-2.0
#include "jasnn/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "jasnn/errors.hpp"

namespace jasnn {

namespace {

using Columns = std::vector<std::vector<double>>;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void rotate(std::vector<double>& x, std::vector<double>& y, double c, double s) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i], yi = y[i];
        x[i] = c * xi - s * yi;
        y[i] = s * xi + c * yi;
    }
}

// Replaces columns flagged in `missing` by unit vectors orthogonal to all
// other columns (modified Gram-Schmidt over the canonical basis).
void complete_basis(Columns& cols, const std::vector<bool>& missing) {
    const std::size_t dim = cols.empty() ? 0 : cols.front().size();
    std::size_t next_basis = 0;
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (!missing[j]) continue;
        while (next_basis < dim) {
            std::vector<double> cand(dim, 0.0);
            cand[next_basis++] = 1.0;
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t o = 0; o < cols.size(); ++o) {
                    if (o == j || (missing[o] && o > j)) continue;
                    const double d = dot(cand, cols[o]);
                    for (std::size_t i = 0; i < dim; ++i) cand[i] -= d * cols[o][i];
                }
            const double norm = std::sqrt(dot(cand, cand));
            if (norm > 1e-6) {
                for (auto& v : cand) v /= norm;
                cols[j] = std::move(cand);
                break;
            }
        }
    }
}

} // namespace

SvdResult jacobi_svd(const Tensor& w) {
    if (w.rank() != 2) throw DimensionError("jacobi_svd expects a matrix, got " + shape_str(w.shape()));
    const std::size_t m = w.dim(0), n = w.dim(1);
    for (double v : w.values())
        if (!std::isfinite(v)) throw NumericError("jacobi_svd: matrix has non-finite entries");

    // Orthogonalize the columns of a tall matrix a [p x q]; transpose wide inputs.
    const bool wide = m < n;
    const std::size_t p = wide ? n : m, q = wide ? m : n;
    const auto wv = w.values();
    Columns a(q, std::vector<double>(p));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (wide)
                a[i][j] = wv[i * n + j];
            else
                a[j][i] = wv[i * n + j];
        }
    Columns rot(q, std::vector<double>(q, 0.0));
    for (std::size_t j = 0; j < q; ++j) rot[j][j] = 1.0;

    int sweeps = 0;
    double off = 0.0;
    constexpr double eps = std::numeric_limits<double>::epsilon();
    for (;;) {
        double total = 0.0;
        for (const auto& col : a) total += dot(col, col);
        if (total == 0.0) break;
        double off_sq = 0.0;
        for (std::size_t i = 0; i + 1 < q; ++i)
            for (std::size_t j = i + 1; j < q; ++j) {
                const double g = dot(a[i], a[j]);
                off_sq += g * g;
            }
        off = std::sqrt(off_sq) / total;
        if (off <= kJacobiTolerance) break;
        if (sweeps == kJacobiMaxSweeps) {
            std::ostringstream os;
            os << "jacobi_svd did not converge in " << kJacobiMaxSweeps
               << " sweeps; off-diagonal residual " << off;
            throw NumericError(os.str());
        }
        ++sweeps;
        for (std::size_t i = 0; i + 1 < q; ++i) {
            for (std::size_t j = i + 1; j < q; ++j) {
                const double alpha = dot(a[i], a[i]);
                const double beta = dot(a[j], a[j]);
                const double gamma = dot(a[i], a[j]);
                if (std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate(a[i], a[j], c, s);
                rotate(rot[i], rot[j], c, s);
            }
        }
    }

    std::vector<double> norms(q);
    for (std::size_t j = 0; j < q; ++j) norms[j] = std::sqrt(dot(a[j], a[j]));
    std::vector<std::size_t> order(q);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    const double largest = q ? norms[order.front()] : 0.0;
    const double negligible = largest * static_cast<double>(p) * eps;
    Columns left(q), right(q);
    std::vector<double> sigma(q);
    std::vector<bool> missing(q, false);
    for (std::size_t k = 0; k < q; ++k) {
        const std::size_t j = order[k];
        sigma[k] = norms[j];
        right[k] = rot[j];
        left[k] = a[j];
        if (norms[j] > negligible && norms[j] > 0.0) {
            for (auto& v : left[k]) v /= norms[j];
        } else {
            sigma[k] = 0.0;
            missing[k] = true;
        }
    }
    complete_basis(left, missing);

    // a = left * diag(sigma) * right^T, with left [p x q] and right [q x q].
    SvdResult out;
    out.sigma = std::move(sigma);
    out.sweeps = sweeps;
    std::vector<double> u(m * q), v(q * n);
    if (!wide) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = 0; k < q; ++k) u[i * q + k] = left[k][i];
        for (std::size_t k = 0; k < q; ++k)
            for (std::size_t j = 0; j < n; ++j) v[k * n + j] = right[k][j];
    } else {
        // w = a^T = right * diag(sigma) * left^T.
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = 0; k < q; ++k) u[i * q + k] = right[k][i];
        for (std::size_t k = 0; k < q; ++k)
            for (std::size_t j = 0; j < n; ++j) v[k * n + j] = left[k][j];
    }
    out.u = Tensor::from({m, q}, std::move(u));
    out.v = Tensor::from({q, n}, std::move(v));
    return out;
}

} // namespace jasnn
