#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qlemap/ansatz.hpp"
#include "qlemap/baseline.hpp"
#include "qlemap/optimizer.hpp"
#include "qlemap/parallel.hpp"
#include "qlemap/pauli.hpp"
#include "qlemap/qsim.hpp"
#include "qlemap/random.hpp"

namespace qlemap {

enum class EvalMode { Exact, Shots };

// How the Laplacian term is computed in exact mode.
enum class ExpectationPath {
    Fast,     // one simulation + sparse quadratic form
    PerTerm,  // sum of h_l <P_l (x) I_anc>, optionally parallel
};

struct EmbeddingProblem {
    PauliDecomposition decomposition;  // possibly thresholded
    std::size_t n = 0;                 // node qubits
    std::size_t p = 2;                 // ancilla qubits, d = 2^p
    std::size_t k = 1;                 // ansatz layers
    double lambda = 100.0;
    EvalMode mode = EvalMode::Exact;
    std::size_t shots = 1024;
    std::uint64_t shot_seed = 0;

    std::size_t dimension() const noexcept { return std::size_t{1} << p; }
    EmbeddingAnsatzSpec ansatz() const noexcept { return {n, p, k}; }

    void validate() const {
        if (decomposition.n_qubits != n) throw std::invalid_argument("embedding: decomposition size does not match n");
        if (p < 1 || p > 2) throw std::invalid_argument("embedding: only d = 2 or d = 4 is supported");
        if (!(lambda >= 0.0)) throw std::invalid_argument("embedding: lambda must be >= 0");
        if (mode == EvalMode::Shots && shots == 0) throw std::invalid_argument("embedding: shots must be >= 1");
    }
};

struct CostBreakdown {
    double expectation = 0.0;
    double penalty = 0.0;  // without lambda
    double total = 0.0;
};

struct EmbeddingResult {
    ParamVector theta_opt;
    double final_cost = 0.0;
    double expectation_term = 0.0;
    double penalty_term = 0.0;  // without lambda
    Matrix Y;                   // 2^n x d
    std::vector<double> weights;
    std::vector<std::pair<std::size_t, double>> cost_trace;
    std::vector<double> restart_costs;
    std::size_t evaluations = 0;
};

/// Ancilla observables whose expectations fix the pairwise block overlaps.
/// d = 2: {X_a0}. d = 4: {X_a0, Z_a1 X_a0, X_a1, X_a1 Z_a0, X_a1 X_a0, Y_a1 Y_a0},
/// with a0 = qubit n and a1 = qubit n + 1.
inline std::vector<PauliString> penalty_observables(std::size_t n, std::size_t p) {
    const std::string id(n, 'I');
    if (p == 1) return {PauliString::from_text("X" + id)};
    if (p == 2)
        return {PauliString::from_text("IX" + id), PauliString::from_text("ZX" + id), PauliString::from_text("XI" + id),
                PauliString::from_text("XZ" + id), PauliString::from_text("XX" + id), PauliString::from_text("YY" + id)};
    throw std::invalid_argument("penalty observables: only d = 2 or d = 4 is supported");
}

/// Real parts of w_i w_j <psi_i|psi_j> for i < j, in order (0,1), (0,2),
/// (0,3), (1,2), (1,3), (2,3), recovered from the expectations of
/// penalty_observables(n, p) (same order).
inline std::vector<double> overlaps_from_expectations(std::size_t p, std::span<const double> ev) {
    if (p == 1) {
        if (ev.size() != 1) throw std::invalid_argument("overlap recovery: expected 1 expectation");
        return {ev[0] / 2.0};
    }
    if (p == 2) {
        if (ev.size() != 6) throw std::invalid_argument("overlap recovery: expected 6 expectations");
        const double x0 = ev[0], x0z1 = ev[1], x1 = ev[2], x1z0 = ev[3], xx = ev[4], yy = ev[5];
        const double o01 = (x0 + x0z1) / 4.0, o23 = (x0 - x0z1) / 4.0;
        const double o02 = (x1 + x1z0) / 4.0, o13 = (x1 - x1z0) / 4.0;
        const double o03 = (xx - yy) / 4.0, o12 = (xx + yy) / 4.0;
        return {o01, o02, o03, o12, o13, o23};
    }
    throw std::invalid_argument("overlap recovery: only d = 2 or d = 4 is supported");
}

/// Cost evaluator for one problem. Construction reconstructs the
/// (thresholded) Laplacian once; every evaluation is a pure function of theta.
class EmbeddingCost {
public:
    explicit EmbeddingCost(EmbeddingProblem problem, ExpectationPath path = ExpectationPath::Fast,
                           std::size_t workers = 1)
        : problem_(std::move(problem)), path_(path), workers_(workers) {
        problem_.validate();
        const Matrix dense = reconstruct(problem_.decomposition);
        for (std::size_t r = 0; r < dense.rows(); ++r)
            for (std::size_t c = 0; c < dense.cols(); ++c)
                if (dense(r, c) != 0.0) entries_.push_back({r, c, dense(r, c)});
        const std::size_t total = problem_.n + problem_.p;
        for (const auto& t : problem_.decomposition.terms) extended_.push_back(t.string.extended(total));
        observables_ = penalty_observables(problem_.n, problem_.p);
    }

    const EmbeddingProblem& problem() const noexcept { return problem_; }

    Statevector state(std::span<const double> theta) const {
        return run(build_embedding_circuit(problem_.ansatz(), theta));
    }

    /// <psi| I_anc (x) L~ |psi>.
    double expectation(const Statevector& sv, std::span<const double> theta = {}) const {
        if (problem_.mode == EvalMode::Exact && path_ == ExpectationPath::Fast) return quadratic_form(sv);
        return per_term_expectation(sv, theta);
    }

    double quadratic_form(const Statevector& sv) const {
        const auto a = sv.amplitudes();
        const std::size_t len = std::size_t{1} << problem_.n;
        double acc = 0.0;
        for (std::size_t b = 0; b < problem_.dimension(); ++b) {
            const std::size_t off = b * len;
            for (const auto& e : entries_) acc += e.value * (std::conj(a[off + e.row]) * a[off + e.col]).real();
        }
        return acc;
    }

    double per_term_expectation(const Statevector& sv, std::span<const double> theta = {}) const {
        const auto& terms = problem_.decomposition.terms;
        std::vector<double> values(terms.size());
        const std::uint64_t base = shot_base(theta);
        parallel_for(terms.size(), workers_, [&](std::size_t l) {
            const double ev = problem_.mode == EvalMode::Exact
                                  ? exact_pauli_expectation(sv, extended_[l])
                                  : sampled_pauli_expectation(sv, extended_[l], problem_.shots, derive_seed(base, l));
            values[l] = terms[l].coefficient * ev;
        });
        double acc = 0.0;
        for (double v : values) acc += v;
        return acc;
    }

    /// 2 * sum_{i<j} |w_i w_j <psi_i|psi_j>|^2, without lambda.
    double penalty(const Statevector& sv, std::span<const double> theta = {}) const {
        double acc = 0.0;
        if (problem_.mode == EvalMode::Exact) {
            for (std::size_t i = 0; i < problem_.dimension(); ++i)
                for (std::size_t j = i + 1; j < problem_.dimension(); ++j)
                    acc += std::norm(block_overlap(sv, problem_.n, i, j));
        } else {
            const std::uint64_t base = derive_seed(shot_base(theta), 0x70656e616c747956ULL);
            std::vector<double> ev(observables_.size());
            for (std::size_t o = 0; o < observables_.size(); ++o)
                ev[o] = sampled_pauli_expectation(sv, observables_[o], problem_.shots, derive_seed(base, o));
            for (double x : overlaps_from_expectations(problem_.p, ev)) acc += x * x;
        }
        return 2.0 * acc;
    }

    CostBreakdown breakdown(std::span<const double> theta) const {
        const auto sv = state(theta);
        CostBreakdown out;
        out.expectation = expectation(sv, theta);
        out.penalty = penalty(sv, theta);
        out.total = out.expectation + problem_.lambda * out.penalty;
        return out;
    }

    double operator()(std::span<const double> theta) const { return breakdown(theta).total; }

private:
    struct Entry {
        std::size_t row, col;
        double value;
    };

    // Shot streams depend only on theta, keeping the cost a function of theta.
    std::uint64_t shot_base(std::span<const double> theta) const {
        return derive_seed(problem_.shot_seed, hash_doubles(theta));
    }

    EmbeddingProblem problem_;
    ExpectationPath path_;
    std::size_t workers_;
    std::vector<Entry> entries_;
    std::vector<PauliString> extended_;
    std::vector<PauliString> observables_;
};

inline double laplacian_expectation(std::span<const double> theta, const EmbeddingProblem& problem,
                                    ExpectationPath path = ExpectationPath::Fast) {
    const EmbeddingCost cost(problem, path);
    return cost.expectation(cost.state(theta), theta);
}

inline double orthogonality_penalty(std::span<const double> theta, const EmbeddingProblem& problem) {
    const EmbeddingCost cost(problem);
    return cost.penalty(cost.state(theta), theta);
}

inline double embedding_cost(std::span<const double> theta, const EmbeddingProblem& problem) {
    return EmbeddingCost(problem)(theta);
}

/// Reads Y and the block weights off a state: w_i = ||block i||, column i of
/// Y = block i / w_i (real part), zero when w_i < 1e-12.
inline std::pair<Matrix, std::vector<double>> embedding_from_state(const Statevector& sv, std::size_t n) {
    const std::size_t len = std::size_t{1} << n;
    const std::size_t d = sv.dimension() / len;
    Matrix y(len, d);
    std::vector<double> w(d, 0.0);
    const auto a = sv.amplitudes();
    for (std::size_t b = 0; b < d; ++b) {
        double n2 = 0.0;
        for (std::size_t v = 0; v < len; ++v) n2 += std::norm(a[b * len + v]);
        w[b] = std::sqrt(n2);
        if (w[b] < 1e-12) continue;
        for (std::size_t v = 0; v < len; ++v) y(v, b) = a[b * len + v].real() / w[b];
    }
    return {std::move(y), std::move(w)};
}

inline EmbeddingResult extract_embedding(std::span<const double> theta, const EmbeddingProblem& problem) {
    const auto sv = run(build_embedding_circuit(problem.ansatz(), theta));
    auto [y, w] = embedding_from_state(sv, problem.n);
    EmbeddingResult out;
    out.theta_opt.assign(theta.begin(), theta.end());
    out.Y = std::move(y);
    out.weights = std::move(w);
    return out;
}

/// Sum of the d smallest eigenvalues of the (thresholded) Laplacian.
inline double theoretical_minimum(const EmbeddingProblem& problem) {
    return smallest_eigenvalue_sum(reconstruct(problem.decomposition), problem.dimension());
}

inline ParamVector random_angles(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    ParamVector theta(count);
    for (auto& t : theta) t = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    return theta;
}

/// Best of `restarts` optimizer runs from uniform angles in [0, 2pi);
/// restart r starts from random_angles(dim, derive_seed(seed, r)).
inline EmbeddingResult train_embedding(const EmbeddingProblem& problem, std::size_t restarts,
                                       const OptimizeConfig& cfg, std::uint64_t seed,
                                       ExpectationPath path = ExpectationPath::Fast, std::size_t workers = 1) {
    if (restarts < 1) throw std::invalid_argument("train_embedding: restarts must be >= 1");
    const EmbeddingCost cost(problem, path, workers);
    const std::size_t dim = problem.ansatz().num_parameters();

    OptimizeResult best;
    std::vector<double> restart_costs;
    std::size_t evaluations = 0;
    std::string last_error;
    for (std::size_t r = 0; r < restarts; ++r) {
        try {
            auto res = minimize([&](std::span<const double> x) { return cost(x); },
                                random_angles(dim, derive_seed(seed, r)), cfg);
            evaluations += res.evaluations;
            restart_costs.push_back(res.f_opt);
            if (best.x_opt.empty() || res.f_opt < best.f_opt) best = std::move(res);
        } catch (const std::exception& e) {
            restart_costs.push_back(std::numeric_limits<double>::quiet_NaN());
            last_error = e.what();
        }
    }
    if (best.x_opt.empty()) throw std::runtime_error("train_embedding: every restart failed: " + last_error);

    EmbeddingResult out = extract_embedding(best.x_opt, problem);
    const auto parts = cost.breakdown(best.x_opt);
    out.final_cost = best.f_opt;
    out.expectation_term = parts.expectation;
    out.penalty_term = parts.penalty;
    out.cost_trace = std::move(best.trace);
    out.restart_costs = std::move(restart_costs);
    out.evaluations = evaluations;
    return out;
}

struct LambdaTrial {
    double lambda = 0.0;
    double accuracy = 0.0;
    double final_cost = 0.0;
};

struct LambdaSelection {
    double lambda = 0.0;
    std::vector<LambdaTrial> trials;
};

/// Penalty schedule: try 100; stop if accuracy >= 0.8. Otherwise try 200 when
/// the final cost fell below the theoretical minimum (overlapping blocks), or
/// 10 when it stayed above. Returns the best-accuracy lambda, earliest on ties.
/// `trial(lambda)` must fill accuracy and final_cost.
inline LambdaSelection select_lambda(const std::function<LambdaTrial(double)>& trial, double minimum) {
    LambdaSelection out;
    auto attempt = [&](double lambda) {
        LambdaTrial t = trial(lambda);
        t.lambda = lambda;
        out.trials.push_back(t);
        return t;
    };
    const auto first = attempt(100.0);
    if (first.accuracy < 0.8) attempt(first.final_cost < minimum ? 200.0 : 10.0);
    const auto best = std::max_element(out.trials.begin(), out.trials.end(),
                                       [](const LambdaTrial& a, const LambdaTrial& b) { return a.accuracy < b.accuracy; });
    out.lambda = best->lambda;
    return out;
}

}  // namespace qlemap
