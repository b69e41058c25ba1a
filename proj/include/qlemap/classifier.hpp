#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlemap/ansatz.hpp"
#include "qlemap/embedding.hpp"
#include "qlemap/optimizer.hpp"
#include "qlemap/qsim.hpp"
#include "qlemap/random.hpp"

namespace qlemap {

inline constexpr double kProbabilityClamp = 1e-10;
inline constexpr double kDegenerateMass = 1e-12;

struct NodePrediction {
    std::size_t node = 0;
    double p0 = 0.5;
    double p1 = 0.5;
    double row_mass = 0.0;   // P(node register = v)
    bool degenerate = false; // row_mass below 1e-12
};

struct ClassifierModel {
    ParamVector gamma_opt;
    std::vector<std::pair<std::size_t, double>> loss_trace;
    ClassifierAnsatzSpec spec;
    double train_loss = 0.0;
    std::vector<double> restart_losses;
};

/// Amplitude-encodes an embedding: amplitude (block i, node v) = w_i * Y(v, i),
/// rescaled to unit norm. Block i occupies indices [i * rows, (i + 1) * rows).
inline Statevector encode_embedding(const Matrix& y, std::span<const double> weights) {
    if (!is_power_of_two(y.rows()) || !is_power_of_two(y.cols()))
        throw std::invalid_argument("encode_embedding: both dimensions must be powers of 2");
    if (weights.size() != y.cols()) throw std::invalid_argument("encode_embedding: one weight per column required");
    std::vector<Complex> amps(y.rows() * y.cols());
    for (std::size_t i = 0; i < y.cols(); ++i)
        for (std::size_t v = 0; v < y.rows(); ++v) amps[i * y.rows() + v] = weights[i] * y(v, i);
    return Statevector::normalized(std::move(amps));
}

namespace detail {

// Dense unitary of a small circuit, column c = U|c>.
inline std::vector<Complex> circuit_unitary(const Circuit& c) {
    const std::size_t dim = std::size_t{1} << c.n_qubits();
    std::vector<Complex> u(dim * dim);
    for (std::size_t col = 0; col < dim; ++col) {
        std::vector<Complex> e(dim);
        e[col] = 1.0;
        for (const auto& g : c.gates()) apply_gate_inplace(e, c.n_qubits(), g);
        for (std::size_t r = 0; r < dim; ++r) u[r * dim + col] = e[r];
    }
    return u;
}

inline void check_register(const Statevector& sv, std::size_t n, const ClassifierAnsatzSpec& spec) {
    if (sv.n_qubits() != n + spec.q)
        throw std::invalid_argument("classifier: state has " + std::to_string(sv.n_qubits()) + " qubits, expected " +
                                    std::to_string(n + spec.q));
}

inline NodePrediction make_prediction(std::size_t v, double mass, double joint1) {
    NodePrediction out;
    out.node = v;
    out.row_mass = mass;
    if (mass < kDegenerateMass) {
        out.degenerate = true;
        return out;
    }
    out.p1 = std::clamp(joint1 / mass, 0.0, 1.0);
    out.p0 = 1.0 - out.p1;
    return out;
}

}  // namespace detail

/// Per-node label probabilities after applying the classifier to the ancilla
/// register (the top spec.q qubits). p1 = P(output = 1, node = v) / P(node = v)
/// where the output qubit is the most significant ancilla. Read exactly from
/// the amplitudes.
inline std::vector<NodePrediction> conditional_probabilities(const Statevector& sv, std::size_t n,
                                                             const ClassifierAnsatzSpec& spec,
                                                             std::span<const double> gamma) {
    detail::check_register(sv, n, spec);
    const auto u = detail::circuit_unitary(build_classifier_circuit(spec, gamma));
    const std::size_t len = std::size_t{1} << n;
    const std::size_t d = std::size_t{1} << spec.q;
    const std::size_t out_bit = d >> 1;
    const auto a = sv.amplitudes();

    std::vector<NodePrediction> out(len);
    std::vector<Complex> phi(d);
    for (std::size_t v = 0; v < len; ++v) {
        double mass = 0.0;
        for (std::size_t b = 0; b < d; ++b) {
            phi[b] = a[b * len + v];
            mass += std::norm(phi[b]);
        }
        double joint1 = 0.0;
        for (std::size_t r = 0; r < d; ++r) {
            if (!(r & out_bit)) continue;
            Complex acc{};
            for (std::size_t c = 0; c < d; ++c) acc += u[r * d + c] * phi[c];
            joint1 += std::norm(acc);
        }
        out[v] = detail::make_prediction(v, mass, joint1);
    }
    return out;
}

/// Shot estimate: measures the node register and the output qubit `shots`
/// times and forms the empirical conditionals. Nodes never observed are
/// degenerate.
inline std::vector<NodePrediction> sampled_conditional_probabilities(const Statevector& sv, std::size_t n,
                                                                     const ClassifierAnsatzSpec& spec,
                                                                     std::span<const double> gamma,
                                                                     std::size_t shots, std::uint64_t seed) {
    detail::check_register(sv, n, spec);
    const auto final_state =
        run(build_classifier_circuit(spec, gamma).placed(sv.n_qubits(), n), sv);
    std::vector<std::size_t> qubits(n);
    for (std::size_t q = 0; q < n; ++q) qubits[q] = q;
    qubits.push_back(n + spec.q - 1);
    const auto counts = measure_counts(final_state, qubits, shots, seed);

    const std::size_t len = std::size_t{1} << n;
    std::vector<double> total(len, 0.0), ones(len, 0.0);
    for (const auto& [key, count] : counts) {
        std::size_t v = 0;
        for (std::size_t q = 0; q < n; ++q)
            if (key[q] == '1') v |= std::size_t{1} << q;
        total[v] += static_cast<double>(count);
        if (key[n] == '1') ones[v] += static_cast<double>(count);
    }
    std::vector<NodePrediction> out(len);
    for (std::size_t v = 0; v < len; ++v) {
        if (total[v] == 0.0) {
            out[v] = detail::make_prediction(v, 0.0, 0.0);
            continue;
        }
        const double mass = total[v] / static_cast<double>(shots);
        out[v] = detail::make_prediction(v, mass, mass * ones[v] / total[v]);
    }
    return out;
}

struct ClassifierEval {
    EvalMode mode = EvalMode::Exact;
    std::size_t shots = 1024;
    std::uint64_t seed = 0;
};

/// Exact or shot-based predictions. Shot streams are keyed on gamma so a
/// repeated gamma sees the same samples.
inline std::vector<NodePrediction> predict(const Statevector& sv, std::size_t n, const ClassifierAnsatzSpec& spec,
                                           std::span<const double> gamma, const ClassifierEval& eval = {}) {
    if (eval.mode == EvalMode::Exact) return conditional_probabilities(sv, n, spec, gamma);
    return sampled_conditional_probabilities(sv, n, spec, gamma, eval.shots,
                                             derive_seed(eval.seed, hash_doubles(gamma)));
}

/// Negated binary cross-entropy summed over the non-degenerate train nodes;
/// probabilities are clamped to [1e-10, 1 - 1e-10].
inline double bce_loss(std::span<const NodePrediction> predictions, std::span<const int> labels,
                       std::span<const std::size_t> train_nodes) {
    double acc = 0.0;
    for (auto v : train_nodes) {
        if (v >= predictions.size() || v >= labels.size()) throw std::out_of_range("bce_loss: node out of range");
        if (labels[v] != 0 && labels[v] != 1) throw std::invalid_argument("bce_loss: missing label for node " + std::to_string(v));
        const auto& pr = predictions[v];
        if (pr.degenerate) continue;
        const double p1 = std::clamp(pr.p1, kProbabilityClamp, 1.0 - kProbabilityClamp);
        acc += labels[v] == 1 ? std::log(p1) : std::log(1.0 - p1);
    }
    return -acc;
}

/// 1 or 0 by the larger probability; nullopt on an exact tie.
inline std::optional<int> decide(double p1) {
    if (p1 > 0.5) return 1;
    if (p1 < 0.5) return 0;
    return std::nullopt;
}

/// Fraction of test nodes whose decision matches the label. Ties count as
/// wrong; degenerate nodes are skipped.
inline double accuracy_of(std::span<const NodePrediction> predictions, std::span<const int> labels,
                          std::span<const std::size_t> test_nodes) {
    if (test_nodes.empty()) throw std::invalid_argument("accuracy: empty test set");
    std::size_t correct = 0, counted = 0;
    for (auto v : test_nodes) {
        if (v >= predictions.size() || v >= labels.size()) throw std::out_of_range("accuracy: node out of range");
        if (predictions[v].degenerate) continue;
        ++counted;
        const auto guess = decide(predictions[v].p1);
        if (guess && *guess == labels[v]) ++correct;
    }
    if (counted == 0) throw std::invalid_argument("accuracy: every test node is degenerate");
    return static_cast<double>(correct) / static_cast<double>(counted);
}

/// Minimizes bce_loss over gamma; best of `restarts` runs from uniform angles
/// in [0, 2pi), restart r seeded with derive_seed(seed, r).
inline ClassifierModel train_classifier(const Statevector& sv, std::size_t n, std::span<const int> labels,
                                        std::span<const std::size_t> train_nodes, const ClassifierAnsatzSpec& spec,
                                        std::size_t restarts, const OptimizeConfig& cfg, std::uint64_t seed,
                                        const ClassifierEval& eval = {}) {
    if (restarts < 1) throw std::invalid_argument("train_classifier: restarts must be >= 1");
    detail::check_register(sv, n, spec);
    auto loss = [&](std::span<const double> gamma) {
        const auto preds = predict(sv, n, spec, gamma, eval);
        return bce_loss(preds, labels, train_nodes);
    };

    ClassifierModel model;
    model.spec = spec;
    OptimizeResult best;
    std::string last_error;
    for (std::size_t r = 0; r < restarts; ++r) {
        try {
            auto res = minimize(loss, random_angles(spec.num_parameters(), derive_seed(seed, r)), cfg);
            model.restart_losses.push_back(res.f_opt);
            if (best.x_opt.empty() || res.f_opt < best.f_opt) best = std::move(res);
        } catch (const std::exception& e) {
            model.restart_losses.push_back(std::numeric_limits<double>::quiet_NaN());
            last_error = e.what();
        }
    }
    if (best.x_opt.empty()) throw std::runtime_error("train_classifier: every restart failed: " + last_error);
    model.gamma_opt = std::move(best.x_opt);
    model.train_loss = best.f_opt;
    model.loss_trace = std::move(best.trace);
    return model;
}

inline double evaluate_accuracy(const ClassifierModel& model, const Statevector& sv, std::size_t n,
                                std::span<const int> labels, std::span<const std::size_t> test_nodes,
                                const ClassifierEval& eval = {}) {
    const auto preds = predict(sv, n, model.spec, model.gamma_opt, eval);
    return accuracy_of(preds, labels, test_nodes);
}

}  // namespace qlemap
