#include <gtest/gtest.h>

#include "qlemap/ansatz.hpp"
#include "qlemap/random.hpp"

using namespace qlemap;

namespace {

ParamVector random_params(std::size_t count, Rng& rng) {
    ParamVector p(count);
    for (auto& x : p) x = uniform(rng, -7, 7);
    return p;
}

}  // namespace

TEST(EmbeddingAnsatz, ParameterCounts) {
    EXPECT_EQ((EmbeddingAnsatzSpec{5, 2, 1}.num_parameters()), 14u);
    for (std::size_t n = 1; n <= 6; ++n)
        for (std::size_t p = 1; p <= 2; ++p)
            for (std::size_t k = 0; k <= 3; ++k) {
                const EmbeddingAnsatzSpec spec{n, p, k};
                EXPECT_EQ(spec.num_parameters(), (k + 1) * (n + p));
                const auto c = build_embedding_circuit(spec, ParamVector(spec.num_parameters(), 0.1));
                EXPECT_EQ(c.count(GateKind::RY), (k + 1) * (n + p));
                EXPECT_EQ(c.count(GateKind::CX), k * (n + p));
            }
    EXPECT_THROW(build_embedding_circuit({2, 1, 1}, ParamVector(5)), std::invalid_argument);
}

TEST(EmbeddingAnsatz, ZeroAnglesGiveGroundState) {
    const EmbeddingAnsatzSpec spec{3, 1, 0};
    const auto sv = run(build_embedding_circuit(spec, ParamVector(spec.num_parameters(), 0.0)));
    EXPECT_EQ(sv[0], Complex(1));
}

TEST(EmbeddingAnsatz, RingOrder) {
    const auto c = build_embedding_circuit({2, 1, 1}, ParamVector(6, 0.0));
    std::vector<std::pair<std::size_t, std::size_t>> cx;
    for (const auto& g : c.gates())
        if (g.kind == GateKind::CX) cx.emplace_back(*g.control, g.target);
    EXPECT_EQ(cx, (std::vector<std::pair<std::size_t, std::size_t>>{{2, 0}, {0, 1}, {1, 2}}));
    // layer-major layout: the second Ry layer reads theta[3..5]
    ParamVector theta{0, 0, 0, 1, 2, 3};
    const auto c2 = build_embedding_circuit({2, 1, 1}, theta);
    std::vector<double> angles;
    for (const auto& g : c2.gates())
        if (g.kind == GateKind::RY) angles.push_back(g.params[0]);
    EXPECT_EQ(angles, (std::vector<double>{0, 0, 0, 1, 2, 3}));
}

TEST(EmbeddingAnsatz, AmplitudesStayReal) {
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        const EmbeddingAnsatzSpec spec{5, 2, 1 + static_cast<std::size_t>(t % 2)};
        const auto sv = run(build_embedding_circuit(spec, random_params(spec.num_parameters(), rng)));
        for (const auto& a : sv.amplitudes()) EXPECT_LT(std::abs(a.imag()), 1e-12);
    }
}

TEST(ClassifierAnsatz, StructureAndZeroAngles) {
    const ClassifierAnsatzSpec spec{2, 8};
    EXPECT_EQ(spec.num_parameters(), 54u);
    const auto c = build_classifier_circuit(spec, ParamVector(54, 0.0));
    EXPECT_EQ(c.count(GateKind::CX), 8u);
    EXPECT_EQ(c.count(GateKind::U3), 18u);

    // gamma = 0: same output as the CNOT-only circuit.
    Circuit cnots(2);
    for (std::size_t l = 1; l <= 8; ++l) cnots.add(l % 2 ? Gate::cx(0, 1) : Gate::cx(1, 0));
    Rng rng(2);
    std::vector<Complex> a(4);
    for (auto& x : a) x = Complex(standard_normal(rng), standard_normal(rng));
    const auto sv = Statevector::normalized(a);
    const auto s1 = run(c, sv), s2 = run(cnots, sv);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_LT(std::abs(s1[i] - s2[i]), 1e-12);

    EXPECT_EQ(build_classifier_circuit({1, 8}, ParamVector(27, 0.0)).count(GateKind::CX), 0u);
    EXPECT_THROW(build_classifier_circuit({3, 8}, ParamVector(81)), std::invalid_argument);
    EXPECT_THROW(build_classifier_circuit(spec, ParamVector(53)), std::invalid_argument);
}

TEST(ClassifierAnsatz, AlternatesControl) {
    const auto c = build_classifier_circuit({2, 4}, ParamVector(30, 0.0));
    std::vector<std::size_t> controls;
    for (const auto& g : c.gates())
        if (g.kind == GateKind::CX) controls.push_back(*g.control);
    EXPECT_EQ(controls, (std::vector<std::size_t>{0, 1, 0, 1}));
}

TEST(ClassifierAnsatz, AdjointUndoesCircuit) {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        const auto c = build_classifier_circuit({2, 8}, random_params(54, rng));
        std::vector<Complex> a(4);
        for (auto& x : a) x = Complex(standard_normal(rng), standard_normal(rng));
        const auto sv = Statevector::normalized(a);
        const auto back = run(c.adjoint(), run(c, sv));
        for (std::size_t i = 0; i < 4; ++i) EXPECT_LT(std::abs(back[i] - sv[i]), 1e-10);
    }
}

TEST(ClassifierAnsatz, CommutesWithNodePermutation) {
    // Placed on the top two qubits of a 5-qubit register, the classifier
    // commutes with an X/CX shuffle of the three node qubits.
    Rng rng(4);
    const auto cls = build_classifier_circuit({2, 8}, random_params(54, rng)).placed(5, 3);
    Circuit perm(5);
    perm.add(Gate::x(0)).add(Gate::cx(0, 2)).add(Gate::cx(2, 1)).add(Gate::x(1));
    std::vector<Complex> a(32);
    for (auto& x : a) x = Complex(standard_normal(rng), 0.0);
    const auto sv = Statevector::normalized(a);
    const auto ab = run(perm, run(cls, sv)), ba = run(cls, run(perm, sv));
    for (std::size_t i = 0; i < 32; ++i) EXPECT_LT(std::abs(ab[i] - ba[i]), 1e-12);
}
