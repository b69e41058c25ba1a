#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qlemap {

using Objective = std::function<double(std::span<const double>)>;

enum class OptimizeMethod {
    LinearTrustRegion,  // COBYLA-style linear models over a simplex (default)
    NelderMead,
};

struct OptimizeConfig {
    OptimizeMethod method = OptimizeMethod::LinearTrustRegion;
    std::size_t max_iter = 2000;  // objective evaluations per run
    double initial_step = 0.5;    // starting trust radius
    double tolerance = 1e-4;      // final trust radius
    std::uint64_t seed = 0;       // recorded in manifests; the method itself is deterministic
};

struct OptimizeResult {
    std::vector<double> x_opt;
    double f_opt = std::numeric_limits<double>::infinity();
    std::size_t evaluations = 0;
    std::vector<std::pair<std::size_t, double>> trace;  // (evaluation index, best f so far)
    bool converged = false;
};

namespace detail {

// Unconstrained linear-interpolation trust-region method after Powell's
// COBYLA. The model is the linear interpolant over a simplex of n + 1
// points; the trust step is the steepest-descent step of length rho; rho is
// halved whenever a step fails to achieve a tenth of the predicted decrease
// on an acceptable simplex. Constants follow the original method.
class SimplexTrustRegion {
public:
    SimplexTrustRegion(const Objective& f, std::vector<double> x0, const OptimizeConfig& cfg)
        : f_(f), cfg_(cfg), n_(x0.size()), base_(std::move(x0)) {}

    OptimizeResult run() {
        result_.x_opt = base_;
        try {
            f_base_ = evaluate(base_);
            if (n_ == 0) {
                result_.converged = true;
                return std::move(result_);
            }
            rho_ = cfg_.initial_step;
            init_simplex();
            iterate();
        } catch (const BudgetExhausted&) {
            result_.converged = false;
        }
        return std::move(result_);
    }

private:
    struct BudgetExhausted {};

    static constexpr double kAlpha = 0.25;  // minimum relative vertex-to-face distance
    static constexpr double kBeta = 2.1;    // maximum relative edge length
    static constexpr double kGamma = 0.5;   // geometry step length factor
    static constexpr double kDelta = 1.1;   // vertex-drop edge threshold

    double evaluate(const std::vector<double>& x) {
        if (result_.evaluations >= cfg_.max_iter) throw BudgetExhausted{};
        const double v = f_(x);
        ++result_.evaluations;
        if (!std::isfinite(v))
            throw std::runtime_error("minimize: objective returned a non-finite value at evaluation " +
                                     std::to_string(result_.evaluations));
        if (v < result_.f_opt) {
            result_.f_opt = v;
            result_.x_opt = x;
        }
        result_.trace.emplace_back(result_.evaluations, result_.f_opt);
        return v;
    }

    std::vector<double> point(const std::vector<double>& offset) const {
        std::vector<double> x = base_;
        for (std::size_t i = 0; i < n_; ++i) x[i] += offset[i];
        return x;
    }

    static double dotp(const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    }

    void init_simplex() {
        offsets_.assign(n_, std::vector<double>(n_, 0.0));
        inv_.assign(n_, std::vector<double>(n_, 0.0));
        fvals_.assign(n_, 0.0);
        for (std::size_t j = 0; j < n_; ++j) {
            offsets_[j][j] = rho_;
            inv_[j][j] = 1.0 / rho_;
        }
        for (std::size_t j = 0; j < n_; ++j) fvals_[j] = evaluate(point(offsets_[j]));
    }

    // Moves the base to the best vertex; inv row of the new base becomes the
    // negated sum of all rows, the rest are unchanged.
    void select_best() {
        std::size_t best = n_;
        double fbest = f_base_;
        for (std::size_t j = 0; j < n_; ++j)
            if (fvals_[j] < fbest) {
                fbest = fvals_[j];
                best = j;
            }
        if (best == n_) return;

        const auto shift = offsets_[best];
        for (std::size_t i = 0; i < n_; ++i) base_[i] += shift[i];
        for (std::size_t j = 0; j < n_; ++j) {
            if (j == best) continue;
            for (std::size_t i = 0; i < n_; ++i) offsets_[j][i] -= shift[i];
        }
        for (std::size_t i = 0; i < n_; ++i) offsets_[best][i] = -shift[i];

        std::vector<double> sum(n_, 0.0);
        for (const auto& row : inv_)
            for (std::size_t i = 0; i < n_; ++i) sum[i] += row[i];
        for (std::size_t i = 0; i < n_; ++i) inv_[best][i] = -sum[i];

        std::swap(fvals_[best], f_base_);
    }

    void replace_vertex(std::size_t j, const std::vector<double>& offset, double fval) {
        offsets_[j] = offset;
        fvals_[j] = fval;
        const double pivot = dotp(inv_[j], offset);
        for (auto& v : inv_[j]) v /= pivot;
        for (std::size_t k = 0; k < n_; ++k) {
            if (k == j) continue;
            const double t = dotp(inv_[k], offset);
            for (std::size_t i = 0; i < n_; ++i) inv_[k][i] -= t * inv_[j][i];
        }
        if (++replacements_ % (4 * n_ + 8) == 0) refresh_inverse();
    }

    // Gauss-Jordan rebuild of the inverse to flush accumulated rounding.
    void refresh_inverse() {
        // a = [S | I] with S(i, j) = offsets_[j][i]
        std::vector<std::vector<double>> a(n_, std::vector<double>(2 * n_, 0.0));
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < n_; ++j) a[i][j] = offsets_[j][i];
            a[i][n_ + i] = 1.0;
        }
        for (std::size_t c = 0; c < n_; ++c) {
            std::size_t piv = c;
            for (std::size_t r = c + 1; r < n_; ++r)
                if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
            if (a[piv][c] == 0.0) return;  // keep the updated inverse
            std::swap(a[c], a[piv]);
            const double d = a[c][c];
            for (auto& v : a[c]) v /= d;
            for (std::size_t r = 0; r < n_; ++r) {
                if (r == c || a[r][c] == 0.0) continue;
                const double m = a[r][c];
                for (std::size_t k = 0; k < 2 * n_; ++k) a[r][k] -= m * a[c][k];
            }
        }
        // S^{-1}(j, i) sits at a[j][n_ + i]
        for (std::size_t j = 0; j < n_; ++j)
            for (std::size_t i = 0; i < n_; ++i) inv_[j][i] = a[j][n_ + i];
    }

    std::vector<double> model_gradient() const {
        std::vector<double> g(n_, 0.0);
        for (std::size_t j = 0; j < n_; ++j) {
            const double df = fvals_[j] - f_base_;
            for (std::size_t i = 0; i < n_; ++i) g[i] += df * inv_[j][i];
        }
        return g;
    }

    void iterate() {
        bool improve_geometry = false;
        std::vector<double> vsig(n_), veta(n_);
        while (true) {
            select_best();

            bool acceptable = true;
            for (std::size_t j = 0; j < n_; ++j) {
                vsig[j] = 1.0 / std::sqrt(dotp(inv_[j], inv_[j]));
                veta[j] = std::sqrt(dotp(offsets_[j], offsets_[j]));
                if (vsig[j] < kAlpha * rho_ || veta[j] > kBeta * rho_) acceptable = false;
            }

            if (improve_geometry && !acceptable) {
                improve_geometry = false;
                geometry_step(vsig, veta);
                continue;
            }
            improve_geometry = false;

            const auto g = model_gradient();
            const double gnorm = std::sqrt(dotp(g, g));
            bool reduce = true;
            if (gnorm > 0.0 && std::isfinite(gnorm)) {
                std::vector<double> step(n_);
                for (std::size_t i = 0; i < n_; ++i) step[i] = -rho_ * g[i] / gnorm;
                const double predicted = rho_ * gnorm;
                const double fnew = evaluate(point(step));
                const double actual = f_base_ - fnew;

                // Choose the vertex to drop.
                double ratio = actual <= 0.0 ? 1.0 : 0.0;
                std::size_t jdrop = n_;
                std::vector<double> sigbar(n_);
                for (std::size_t j = 0; j < n_; ++j) {
                    const double t = std::abs(dotp(inv_[j], step));
                    if (t > ratio) {
                        jdrop = j;
                        ratio = t;
                    }
                    sigbar[j] = t * vsig[j];
                }
                double edgmax = kDelta * rho_;
                std::size_t far = n_;
                for (std::size_t j = 0; j < n_; ++j) {
                    if (sigbar[j] >= kAlpha * rho_ || sigbar[j] >= vsig[j]) {
                        double t = veta[j];
                        if (actual > 0.0) {
                            t = 0.0;
                            for (std::size_t i = 0; i < n_; ++i) t += (step[i] - offsets_[j][i]) * (step[i] - offsets_[j][i]);
                            t = std::sqrt(t);
                        }
                        if (t > edgmax) {
                            far = j;
                            edgmax = t;
                        }
                    }
                }
                if (far != n_) jdrop = far;
                if (jdrop != n_) replace_vertex(jdrop, step, fnew);
                reduce = !(actual > 0.0 && actual >= 0.1 * predicted);
            }
            if (!reduce) continue;

            if (!acceptable) {
                improve_geometry = true;
                continue;
            }
            if (rho_ <= cfg_.tolerance) {
                result_.converged = true;
                return;
            }
            rho_ *= 0.5;
            if (rho_ <= 1.5 * cfg_.tolerance) rho_ = cfg_.tolerance;
        }
    }

    void geometry_step(const std::vector<double>& vsig, const std::vector<double>& veta) {
        std::size_t jdrop = n_;
        double worst = kBeta * rho_;
        for (std::size_t j = 0; j < n_; ++j)
            if (veta[j] > worst) {
                worst = veta[j];
                jdrop = j;
            }
        if (jdrop == n_) {
            double smallest = kAlpha * rho_;
            for (std::size_t j = 0; j < n_; ++j)
                if (vsig[j] < smallest) {
                    smallest = vsig[j];
                    jdrop = j;
                }
        }
        if (jdrop == n_) return;

        std::vector<double> step(n_);
        const double scale = kGamma * rho_ * vsig[jdrop];
        for (std::size_t i = 0; i < n_; ++i) step[i] = scale * inv_[jdrop][i];
        // Point the step downhill on the linear model.
        if (dotp(model_gradient(), step) > 0.0)
            for (auto& s : step) s = -s;
        const double fnew = evaluate(point(step));
        replace_vertex(jdrop, step, fnew);
    }

    const Objective& f_;
    OptimizeConfig cfg_;
    std::size_t n_;
    std::vector<double> base_;
    double f_base_ = 0.0;
    double rho_ = 0.0;
    std::vector<std::vector<double>> offsets_;  // offsets_[j] = vertex j - base
    std::vector<std::vector<double>> inv_;      // inv_[j] . offsets_[k] = delta_jk
    std::vector<double> fvals_;
    std::size_t replacements_ = 0;
    OptimizeResult result_;
};

// Adaptive Nelder-Mead (Gao & Han coefficients). Converges when every vertex
// is within `tolerance` of the best one in the max norm.
class NelderMead {
public:
    NelderMead(const Objective& f, std::vector<double> x0, const OptimizeConfig& cfg)
        : f_(f), cfg_(cfg), n_(x0.size()), x0_(std::move(x0)) {}

    OptimizeResult run() {
        result_.x_opt = x0_;
        try {
            const double f0 = evaluate(x0_);
            if (n_ == 0) {
                result_.converged = true;
                return std::move(result_);
            }
            const double dn = static_cast<double>(n_);
            const double refl = 1.0, expand = 1.0 + 2.0 / dn;
            const double contract = 0.75 - 1.0 / (2.0 * dn), shrink = 1.0 - 1.0 / dn;

            std::vector<std::vector<double>> x(n_ + 1, x0_);
            std::vector<double> fx(n_ + 1, f0);
            for (std::size_t j = 0; j < n_; ++j) {
                x[j + 1][j] += cfg_.initial_step;
                fx[j + 1] = evaluate(x[j + 1]);
            }
            std::vector<std::size_t> order(n_ + 1);
            while (true) {
                for (std::size_t i = 0; i <= n_; ++i) order[i] = i;
                std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return fx[a] < fx[b]; });
                const auto best = order.front(), worst = order.back(), second = order[n_ - 1];

                double spread = 0.0;
                for (std::size_t j = 0; j <= n_; ++j)
                    for (std::size_t i = 0; i < n_; ++i) spread = std::max(spread, std::abs(x[j][i] - x[best][i]));
                if (spread <= cfg_.tolerance) {
                    result_.converged = true;
                    break;
                }

                std::vector<double> centroid(n_, 0.0);
                for (std::size_t j = 0; j <= n_; ++j) {
                    if (j == worst) continue;
                    for (std::size_t i = 0; i < n_; ++i) centroid[i] += x[j][i] / dn;
                }
                auto along = [&](double t) {
                    std::vector<double> p(n_);
                    for (std::size_t i = 0; i < n_; ++i) p[i] = centroid[i] + t * (x[worst][i] - centroid[i]);
                    return p;
                };

                auto xr = along(-refl);
                const double fr = evaluate(xr);
                if (fr < fx[best]) {
                    auto xe = along(-refl * expand);
                    const double fe = evaluate(xe);
                    if (fe < fr) {
                        x[worst] = std::move(xe);
                        fx[worst] = fe;
                    } else {
                        x[worst] = std::move(xr);
                        fx[worst] = fr;
                    }
                    continue;
                }
                if (fr < fx[second]) {
                    x[worst] = std::move(xr);
                    fx[worst] = fr;
                    continue;
                }
                const bool outside = fr < fx[worst];
                auto xc = along(outside ? -refl * contract : contract);
                const double fc = evaluate(xc);
                if (fc < (outside ? fr : fx[worst])) {
                    x[worst] = std::move(xc);
                    fx[worst] = fc;
                    continue;
                }
                for (std::size_t j = 0; j <= n_; ++j) {
                    if (j == best) continue;
                    for (std::size_t i = 0; i < n_; ++i) x[j][i] = x[best][i] + shrink * (x[j][i] - x[best][i]);
                    fx[j] = evaluate(x[j]);
                }
            }
        } catch (const BudgetExhausted&) {
            result_.converged = false;
        }
        return std::move(result_);
    }

private:
    struct BudgetExhausted {};

    double evaluate(const std::vector<double>& x) {
        if (result_.evaluations >= cfg_.max_iter) throw BudgetExhausted{};
        const double v = f_(x);
        ++result_.evaluations;
        if (!std::isfinite(v))
            throw std::runtime_error("minimize: objective returned a non-finite value at evaluation " +
                                     std::to_string(result_.evaluations));
        if (v < result_.f_opt) {
            result_.f_opt = v;
            result_.x_opt = x;
        }
        result_.trace.emplace_back(result_.evaluations, result_.f_opt);
        return v;
    }

    const Objective& f_;
    OptimizeConfig cfg_;
    std::size_t n_;
    std::vector<double> x0_;
    OptimizeResult result_;
};

}  // namespace detail

/// Derivative-free minimization from x0. Deterministic in (f, x0, cfg); the
/// returned point is never worse than x0. A non-finite objective value
/// aborts with std::runtime_error.
inline OptimizeResult minimize(const Objective& f, std::vector<double> x0, const OptimizeConfig& cfg = {}) {
    if (cfg.max_iter < 1) throw std::invalid_argument("minimize: max_iter must be >= 1");
    if (!(cfg.initial_step > 0.0)) throw std::invalid_argument("minimize: initial_step must be > 0");
    if (!(cfg.tolerance > 0.0)) throw std::invalid_argument("minimize: tolerance must be > 0");
    if (cfg.method == OptimizeMethod::NelderMead) return detail::NelderMead(f, std::move(x0), cfg).run();
    return detail::SimplexTrustRegion(f, std::move(x0), cfg).run();
}

}  // namespace qlemap
