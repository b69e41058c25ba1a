#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qlemap/graph.hpp"
#include "qlemap/matrix.hpp"
#include "qlemap/pauli.hpp"
#include "qlemap/random.hpp"

namespace qlemap {

struct EigenDecomposition {
    std::vector<double> eigenvalues;  // ascending
    Matrix eigenvectors;              // column i pairs with eigenvalues[i]
};

namespace detail {

// Flip so the first component with magnitude above 1e-10 is positive.
inline void normalize_sign(std::vector<double>& v) {
    for (double x : v) {
        if (std::abs(x) > 1e-10) {
            if (x < 0.0)
                for (auto& y : v) y = -y;
            return;
        }
    }
}

}  // namespace detail

/// Full spectrum of a real symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps run until the off-diagonal Frobenius norm drops below
/// 1e-12 * max(1, ||M||_F). Eigenvectors are sign-normalized; eigenvalues
/// closer than 1e-9 are treated as tied and ordered by their vectors
/// lexicographically, which keeps degenerate embeddings reproducible.
inline EigenDecomposition sym_eigen(const Matrix& m, std::size_t max_sweeps = 100) {
    if (!is_symmetric(m, 1e-10)) throw std::invalid_argument("sym_eigen: matrix is not symmetric");
    const std::size_t n = m.rows();
    Matrix a = m;
    Matrix v = Matrix::identity(n);

    double fro = 0.0;
    for (double x : m.data()) fro += x * x;
    const double tol = 1e-12 * std::max(1.0, std::sqrt(fro));

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) s += a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    std::size_t sweep = 0;
    while (off_norm() >= tol) {
        if (++sweep > max_sweeps) throw std::runtime_error("sym_eigen: no convergence within sweep cap");
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }

    struct Pair {
        double value;
        std::vector<double> vec;
    };
    std::vector<Pair> pairs(n);
    for (std::size_t i = 0; i < n; ++i) {
        pairs[i].value = a(i, i);
        pairs[i].vec = v.column(i);
        detail::normalize_sign(pairs[i].vec);
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) { return x.value < y.value; });
    for (std::size_t start = 0; start < n;) {
        std::size_t end = start + 1;
        while (end < n && pairs[end].value - pairs[start].value < 1e-9) ++end;
        std::stable_sort(pairs.begin() + static_cast<std::ptrdiff_t>(start), pairs.begin() + static_cast<std::ptrdiff_t>(end),
                         [](const Pair& x, const Pair& y) { return x.vec > y.vec; });
        start = end;
    }

    EigenDecomposition out;
    out.eigenvectors = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        out.eigenvalues.push_back(pairs[i].value);
        for (std::size_t k = 0; k < n; ++k) out.eigenvectors(k, i) = pairs[i].vec[k];
    }
    return out;
}

/// Laplacian eigenmap: eigenvectors at sorted positions 1..d, skipping the
/// bottom (constant) eigenvector. Row v of the result embeds node v.
inline Matrix classical_eigenmap(const Matrix& laplacian_matrix, std::size_t d) {
    if (d == 0 || d >= laplacian_matrix.rows())
        throw std::invalid_argument("classical_eigenmap: need 1 <= d < matrix size");
    const auto eig = sym_eigen(laplacian_matrix);
    Matrix y(laplacian_matrix.rows(), d);
    for (std::size_t r = 0; r < y.rows(); ++r)
        for (std::size_t c = 0; c < d; ++c) y(r, c) = eig.eigenvectors(r, c + 1);
    return y;
}

/// Sum of the d smallest eigenvalues: the floor of any d-block embedding cost.
inline double smallest_eigenvalue_sum(const Matrix& m, std::size_t d) {
    const auto eig = sym_eigen(m);
    if (d > eig.eigenvalues.size()) throw std::invalid_argument("smallest_eigenvalue_sum: d exceeds size");
    return std::accumulate(eig.eigenvalues.begin(), eig.eigenvalues.begin() + static_cast<std::ptrdiff_t>(d), 0.0);
}

// ---------------------------------------------------------------------------
// Logistic regression

struct LogisticModel {
    std::vector<double> weights;
    double bias = 0.0;
    bool degenerate = false;  // single-class training set: constant predictor
    std::string warning;
    std::size_t epochs_run = 0;
};

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double logistic_predict(const LogisticModel& model, std::span<const double> row) {
    if (row.size() != model.weights.size()) throw std::invalid_argument("logistic_predict: dimension mismatch");
    return sigmoid(dot(model.weights, row) + model.bias);
}

/// Unregularized logistic regression by full-batch gradient descent on the
/// mean cross-entropy over `train_nodes`. Stops when the gradient norm falls
/// below 1e-6 or after `epochs` epochs. Weights start at small normals drawn
/// from `seed`.
inline LogisticModel logistic_train(const Matrix& rows, std::span<const int> labels,
                                    std::span<const std::size_t> train_nodes, std::size_t epochs = 5000,
                                    double lr = 0.1, std::uint64_t seed = 0) {
    const std::size_t dim = rows.cols();
    LogisticModel model;
    model.weights.assign(dim, 0.0);
    if (train_nodes.empty()) throw std::invalid_argument("logistic_train: empty training set");

    std::size_t ones = 0;
    for (auto v : train_nodes) {
        if (v >= rows.rows() || v >= labels.size()) throw std::out_of_range("logistic_train: node out of range");
        if (labels[v] != 0 && labels[v] != 1) throw std::invalid_argument("logistic_train: training node without label");
        ones += static_cast<std::size_t>(labels[v]);
    }
    if (ones == 0 || ones == train_nodes.size()) {
        model.degenerate = true;
        model.bias = ones == 0 ? -20.0 : 20.0;
        model.warning = "single-class training set; returning a constant predictor";
        return model;
    }

    Rng rng(seed);
    for (auto& w : model.weights) w = 0.01 * standard_normal(rng);

    const double inv_n = 1.0 / static_cast<double>(train_nodes.size());
    std::vector<double> grad(dim);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double gbias = 0.0;
        for (auto v : train_nodes) {
            const auto x = rows.row(v);
            const double err = sigmoid(dot(model.weights, x) + model.bias) - static_cast<double>(labels[v]);
            for (std::size_t k = 0; k < dim; ++k) grad[k] += err * x[k];
            gbias += err;
        }
        gbias *= inv_n;
        double gn2 = gbias * gbias;
        for (auto& g : grad) {
            g *= inv_n;
            gn2 += g * g;
        }
        model.epochs_run = epoch + 1;
        if (std::sqrt(gn2) < 1e-6) break;
        for (std::size_t k = 0; k < dim; ++k) model.weights[k] -= lr * grad[k];
        model.bias -= lr * gbias;
    }
    return model;
}

// "node,y0,...,y{d-1},row_norm", one row per matrix row.
inline void write_embedding_csv(std::ostream& os, const Matrix& y) {
    os << "node";
    for (std::size_t c = 0; c < y.cols(); ++c) os << ",y" << c;
    os << ",row_norm\n";
    for (std::size_t r = 0; r < y.rows(); ++r) {
        os << r;
        for (std::size_t c = 0; c < y.cols(); ++c) os << ',' << format_double(y(r, c));
        os << ',' << format_double(norm2(y.row(r))) << '\n';
    }
}

inline Matrix read_embedding_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("node,", 0) != 0) throw std::runtime_error("embedding csv: missing header");
    const auto cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;
    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> vals;
        std::size_t pos = line.find(',');
        for (std::size_t c = 0; c < cols; ++c) {
            vals.push_back(std::strtod(line.c_str() + pos + 1, nullptr));
            pos = line.find(',', pos + 1);
            if (pos == std::string::npos) throw std::runtime_error("embedding csv: short row");
        }
        rows.push_back(std::move(vals));
    }
    Matrix y(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c) y(r, c) = rows[r][c];
    return y;
}

}  // namespace qlemap
