#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlemap/qsim.hpp"

namespace qlemap {

using ParamVector = std::vector<double>;

/// Ry-only embedding ansatz on n node qubits and p ancilla qubits.
///
/// Layout (layer-major, qubit-minor): theta[l * (n + p) + q] is the Ry angle
/// of qubit q in rotation layer l, l = 0..k. Layer 0 is applied first; each
/// later layer is preceded by one CNOT ring.
struct EmbeddingAnsatzSpec {
    std::size_t n = 0;  // node qubits
    std::size_t p = 0;  // ancilla qubits, d = 2^p
    std::size_t k = 1;  // entangling layers

    std::size_t num_qubits() const noexcept { return n + p; }
    std::size_t num_parameters() const noexcept { return (k + 1) * (n + p); }
    std::size_t dimension() const noexcept { return std::size_t{1} << p; }
};

/// Classifier ansatz on q qubits: a U3 layer followed by `layers` x [one
/// CNOT, U3 layer]. gamma[(l * q + j) * 3 + {0,1,2}] = (theta, phi, lambda)
/// of qubit j in U3 layer l.
struct ClassifierAnsatzSpec {
    std::size_t q = 2;
    std::size_t layers = 8;

    std::size_t num_parameters() const noexcept { return 3 * q * (layers + 1); }
};

/// CX(last -> 0) then CX(i -> i+1) for i = 0..m-2.
inline void append_cnot_ring(Circuit& c) {
    const std::size_t m = c.n_qubits();
    if (m < 2) return;
    c.add(Gate::cx(m - 1, 0));
    for (std::size_t i = 0; i + 1 < m; ++i) c.add(Gate::cx(i, i + 1));
}

inline Circuit build_embedding_circuit(const EmbeddingAnsatzSpec& spec, std::span<const double> theta) {
    if (theta.size() != spec.num_parameters())
        throw std::invalid_argument("embedding ansatz: expected " + std::to_string(spec.num_parameters()) +
                                    " parameters, got " + std::to_string(theta.size()));
    const std::size_t m = spec.num_qubits();
    Circuit c(m);
    for (std::size_t layer = 0; layer <= spec.k; ++layer) {
        if (layer > 0) append_cnot_ring(c);
        for (std::size_t q = 0; q < m; ++q) c.add(Gate::ry(q, theta[layer * m + q]));
    }
    return c;
}

/// Odd layers (1, 3, ...) use CX(0 -> 1), even layers CX(1 -> 0). Only q in
/// {1, 2} is supported; a single qubit gets no CNOTs.
inline Circuit build_classifier_circuit(const ClassifierAnsatzSpec& spec, std::span<const double> gamma) {
    if (spec.q < 1 || spec.q > 2) throw std::invalid_argument("classifier ansatz: q must be 1 or 2");
    if (gamma.size() != spec.num_parameters())
        throw std::invalid_argument("classifier ansatz: expected " + std::to_string(spec.num_parameters()) +
                                    " parameters, got " + std::to_string(gamma.size()));
    Circuit c(spec.q);
    auto u3_layer = [&](std::size_t layer) {
        for (std::size_t j = 0; j < spec.q; ++j) {
            const std::size_t base = (layer * spec.q + j) * 3;
            c.add(Gate::u3(j, gamma[base], gamma[base + 1], gamma[base + 2]));
        }
    };
    u3_layer(0);
    for (std::size_t layer = 1; layer <= spec.layers; ++layer) {
        if (spec.q == 2) c.add(layer % 2 == 1 ? Gate::cx(0, 1) : Gate::cx(1, 0));
        u3_layer(layer);
    }
    return c;
}

}  // namespace qlemap
