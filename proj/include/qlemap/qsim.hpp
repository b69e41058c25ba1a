#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlemap/pauli.hpp"
#include "qlemap/random.hpp"

namespace qlemap {

// Dense statevector over m qubits. Basis index bit q is qubit q.
class Statevector {
public:
    Statevector() = default;

    static Statevector zero_state(std::size_t n_qubits) {
        Statevector sv;
        sv.n_qubits_ = n_qubits;
        sv.amps_.assign(std::size_t{1} << n_qubits, Complex{});
        sv.amps_[0] = 1.0;
        return sv;
    }

    /// Wraps amplitudes that must already have unit norm (within 1e-10).
    static Statevector from_amplitudes(std::vector<Complex> amps) {
        if (!is_power_of_two(amps.size())) throw std::invalid_argument("statevector: length must be a power of 2");
        double n2 = 0.0;
        for (const auto& a : amps) n2 += std::norm(a);
        if (std::abs(n2 - 1.0) > 1e-10) throw std::invalid_argument("statevector: amplitudes are not normalized");
        Statevector sv;
        sv.n_qubits_ = log2_floor(amps.size());
        sv.amps_ = std::move(amps);
        return sv;
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    static Statevector normalized(std::vector<Complex> amps) {
        double n2 = 0.0;
        for (const auto& a : amps) n2 += std::norm(a);
        if (n2 <= 0.0) throw std::invalid_argument("statevector: zero vector");
        const double s = 1.0 / std::sqrt(n2);
        for (auto& a : amps) a *= s;
        return from_amplitudes(std::move(amps));
    }

    std::size_t n_qubits() const noexcept { return n_qubits_; }
    std::size_t dimension() const noexcept { return amps_.size(); }
    std::span<const Complex> amplitudes() const noexcept { return amps_; }
    std::span<Complex> mutable_amplitudes() noexcept { return amps_; }
    Complex operator[](std::size_t i) const { return amps_[i]; }

    double norm() const {
        double n2 = 0.0;
        for (const auto& a : amps_) n2 += std::norm(a);
        return std::sqrt(n2);
    }

    std::vector<double> probabilities() const {
        std::vector<double> p(amps_.size());
        for (std::size_t i = 0; i < amps_.size(); ++i) p[i] = std::norm(amps_[i]);
        return p;
    }

private:
    std::size_t n_qubits_ = 0;
    std::vector<Complex> amps_;
};

enum class GateKind { H, X, CX, RY, RX, U3 };

// Row-major 2x2 unitary.
using Matrix2 = std::array<Complex, 4>;

struct Gate {
    GateKind kind = GateKind::H;
    std::size_t target = 0;
    std::optional<std::size_t> control;
    std::array<double, 3> params{};  // theta, phi, lambda (RY/RX use theta only)

    static Gate h(std::size_t q) { return {GateKind::H, q, std::nullopt, {}}; }
    static Gate x(std::size_t q) { return {GateKind::X, q, std::nullopt, {}}; }
    static Gate cx(std::size_t control, std::size_t target) { return {GateKind::CX, target, control, {}}; }
    static Gate ry(std::size_t q, double theta) { return {GateKind::RY, q, std::nullopt, {theta, 0.0, 0.0}}; }
    static Gate rx(std::size_t q, double theta) { return {GateKind::RX, q, std::nullopt, {theta, 0.0, 0.0}}; }
    static Gate u3(std::size_t q, double theta, double phi, double lambda) {
        return {GateKind::U3, q, std::nullopt, {theta, phi, lambda}};
    }

    /// Single-qubit matrix; for CX this is the X block applied when the control is set.
    ///
    /// RY(t) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]
    /// RX(t) = exp(-i t X / 2)
    /// U3(t, p, l) = [[cos t/2, -e^{il} sin t/2], [e^{ip} sin t/2, e^{i(p+l)} cos t/2]]
    Matrix2 matrix() const {
        const double t = params[0];
        const double c = std::cos(t / 2), s = std::sin(t / 2);
        switch (kind) {
            case GateKind::H: {
                const double r = 1.0 / std::numbers::sqrt2;
                return {Complex{r}, Complex{r}, Complex{r}, Complex{-r}};
            }
            case GateKind::X:
            case GateKind::CX: return {Complex{0}, Complex{1}, Complex{1}, Complex{0}};
            case GateKind::RY: return {Complex{c}, Complex{-s}, Complex{s}, Complex{c}};
            case GateKind::RX: return {Complex{c}, Complex{0, -s}, Complex{0, -s}, Complex{c}};
            case GateKind::U3: {
                const double phi = params[1], lam = params[2];
                return {Complex{c}, -std::polar(s, lam), std::polar(s, phi), std::polar(c, phi + lam)};
            }
        }
        throw std::logic_error("gate: unknown kind");
    }

    Gate adjoint() const {
        Gate g = *this;
        switch (kind) {
            case GateKind::RY:
            case GateKind::RX: g.params[0] = -params[0]; break;
            case GateKind::U3: g.params = {-params[0], -params[2], -params[1]}; break;
            default: break;
        }
        return g;
    }
};

class Circuit {
public:
    Circuit() = default;
    explicit Circuit(std::size_t n_qubits) : n_qubits_(n_qubits) {}

    Circuit& add(const Gate& g) {
        if (g.target >= n_qubits_) throw std::out_of_range("circuit: target qubit out of range");
        if (g.kind == GateKind::CX) {
            if (!g.control || *g.control >= n_qubits_) throw std::out_of_range("circuit: control qubit out of range");
            if (*g.control == g.target) throw std::invalid_argument("circuit: control equals target");
        }
        gates_.push_back(g);
        return *this;
    }

    std::size_t n_qubits() const noexcept { return n_qubits_; }
    const std::vector<Gate>& gates() const noexcept { return gates_; }

    Circuit adjoint() const {
        Circuit c(n_qubits_);
        for (auto it = gates_.rbegin(); it != gates_.rend(); ++it) c.gates_.push_back(it->adjoint());
        return c;
    }

    /// Same gates relabelled onto qubits [offset, offset + n) of a wider register.
    Circuit placed(std::size_t total_qubits, std::size_t offset) const {
        if (offset + n_qubits_ > total_qubits) throw std::out_of_range("circuit: placement exceeds register");
        Circuit c(total_qubits);
        for (auto g : gates_) {
            g.target += offset;
            if (g.control) *g.control += offset;
            c.gates_.push_back(g);
        }
        return c;
    }

    std::size_t count(GateKind kind) const {
        return static_cast<std::size_t>(
            std::count_if(gates_.begin(), gates_.end(), [kind](const Gate& g) { return g.kind == kind; }));
    }

private:
    std::size_t n_qubits_ = 0;
    std::vector<Gate> gates_;
};

namespace detail {

inline void apply_single(std::span<Complex> a, std::size_t target, const Matrix2& m) {
    const std::size_t bit = std::size_t{1} << target;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (i & bit) continue;
        const Complex x0 = a[i], x1 = a[i | bit];
        a[i] = m[0] * x0 + m[1] * x1;
        a[i | bit] = m[2] * x0 + m[3] * x1;
    }
}

inline void apply_cx(std::span<Complex> a, std::size_t control, std::size_t target) {
    const std::size_t cbit = std::size_t{1} << control, tbit = std::size_t{1} << target;
    for (std::size_t i = 0; i < a.size(); ++i)
        if ((i & cbit) && !(i & tbit)) std::swap(a[i], a[i | tbit]);
}

}  // namespace detail

/// Applies `g` in place to a raw amplitude vector over `n_qubits` qubits.
inline void apply_gate_inplace(std::span<Complex> amps, std::size_t n_qubits, const Gate& g) {
    if (g.target >= n_qubits) throw std::out_of_range("apply_gate: target qubit out of range");
    if (g.kind == GateKind::CX) {
        if (!g.control || *g.control >= n_qubits) throw std::out_of_range("apply_gate: control qubit out of range");
        if (*g.control == g.target) throw std::invalid_argument("apply_gate: control equals target");
        detail::apply_cx(amps, *g.control, g.target);
    } else if (g.kind == GateKind::X) {
        const std::size_t bit = std::size_t{1} << g.target;
        for (std::size_t i = 0; i < amps.size(); ++i)
            if (!(i & bit)) std::swap(amps[i], amps[i | bit]);
    } else {
        detail::apply_single(amps, g.target, g.matrix());
    }
}

inline Statevector apply_gate(Statevector sv, const Gate& g) {
    apply_gate_inplace(sv.mutable_amplitudes(), sv.n_qubits(), g);
    return sv;
}

inline Statevector run(const Circuit& c, Statevector initial) {
    if (initial.n_qubits() != c.n_qubits()) throw std::invalid_argument("run: register size mismatch");
    for (const auto& g : c.gates()) apply_gate_inplace(initial.mutable_amplitudes(), initial.n_qubits(), g);
    return initial;
}

inline Statevector run(const Circuit& c) { return run(c, Statevector::zero_state(c.n_qubits())); }

/// <psi| P |psi>, read straight off the amplitudes.
inline double exact_pauli_expectation(const Statevector& sv, const PauliString& p) {
    if (p.size() != sv.n_qubits()) throw std::invalid_argument("pauli expectation: string length mismatch");
    const auto a = sv.amplitudes();
    const auto flip = p.flip_mask();
    const auto phase = p.phase_mask();
    static const Complex ipow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    const Complex global = ipow[(3 * p.y_count()) % 4];
    Complex acc{};
    for (std::size_t r = 0; r < a.size(); ++r) {
        const Complex term = std::conj(a[r]) * a[r ^ flip];
        acc += (std::popcount(r & phase) % 2) ? -term : term;
    }
    return (global * acc).real();
}

/// Layer mapping the eigenbasis of `p` onto the computational basis:
/// H on X factors, RX(pi/2) on Y factors.
inline Circuit basis_rotation(const PauliString& p) {
    Circuit c(p.size());
    for (std::size_t q = 0; q < p.size(); ++q) {
        if (p[q] == Pauli::X) c.add(Gate::h(q));
        if (p[q] == Pauli::Y) c.add(Gate::rx(q, std::numbers::pi / 2));
    }
    return c;
}

namespace detail {

inline std::vector<double> cumulative(const std::vector<double>& p) {
    std::vector<double> cdf(p.size());
    double run = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        run += p[i];
        cdf[i] = run;
    }
    return cdf;
}

inline std::size_t draw(const std::vector<double>& cdf, Rng& rng) {
    const double u = uniform01(rng) * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return it == cdf.end() ? cdf.size() - 1 : static_cast<std::size_t>(it - cdf.begin());
}

}  // namespace detail

/// Shot estimate of <psi|P|psi>: rotate into the eigenbasis, sample basis
/// states, score each by the product of -1 over measured ones on non-I factors.
inline double sampled_pauli_expectation(const Statevector& sv, const PauliString& p, std::size_t shots,
                                        std::uint64_t seed) {
    if (shots == 0) throw std::invalid_argument("sampled expectation: shots must be >= 1");
    if (p.size() != sv.n_qubits()) throw std::invalid_argument("pauli expectation: string length mismatch");
    const std::uint64_t support = p.flip_mask() | p.phase_mask();
    if (support == 0) return 1.0;

    const auto rotated = run(basis_rotation(p), sv);
    const auto cdf = detail::cumulative(rotated.probabilities());
    Rng rng(seed);
    long long total = 0;
    for (std::size_t s = 0; s < shots; ++s) {
        const auto idx = detail::draw(cdf, rng);
        total += (std::popcount(idx & support) % 2) ? -1 : 1;
    }
    return static_cast<double>(total) / static_cast<double>(shots);
}

namespace detail {

inline std::size_t gather_bits(std::size_t index, std::span<const std::size_t> qubits) {
    std::size_t out = 0;
    for (std::size_t j = 0; j < qubits.size(); ++j) out |= ((index >> qubits[j]) & 1U) << j;
    return out;
}

inline void check_qubit_list(std::span<const std::size_t> qubits, std::size_t n_qubits) {
    for (std::size_t j = 0; j < qubits.size(); ++j) {
        if (qubits[j] >= n_qubits) throw std::out_of_range("measure: qubit index out of range");
        for (std::size_t k = 0; k < j; ++k)
            if (qubits[k] == qubits[j]) throw std::invalid_argument("measure: duplicate qubit index");
    }
}

inline std::string outcome_key(std::size_t packed, std::size_t width) {
    std::string key(width, '0');
    for (std::size_t j = 0; j < width; ++j)
        if ((packed >> j) & 1U) key[j] = '1';
    return key;
}

}  // namespace detail

/// Exact marginal over `qubits`; entry k has bit j equal to the outcome of qubits[j].
inline std::vector<double> marginal_probabilities(const Statevector& sv, std::span<const std::size_t> qubits) {
    detail::check_qubit_list(qubits, sv.n_qubits());
    std::vector<double> out(std::size_t{1} << qubits.size(), 0.0);
    const auto a = sv.amplitudes();
    for (std::size_t i = 0; i < a.size(); ++i) out[detail::gather_bits(i, qubits)] += std::norm(a[i]);
    return out;
}

/// Histogram of `shots` samples of the listed qubits. Character j of each key
/// is the outcome of qubits[j].
inline std::map<std::string, std::size_t> measure_counts(const Statevector& sv, std::span<const std::size_t> qubits,
                                                         std::size_t shots, std::uint64_t seed) {
    if (shots == 0) throw std::invalid_argument("measure: shots must be >= 1");
    const auto marginal = marginal_probabilities(sv, qubits);
    const auto cdf = detail::cumulative(marginal);
    Rng rng(seed);
    std::vector<std::size_t> counts(marginal.size(), 0);
    for (std::size_t s = 0; s < shots; ++s) ++counts[detail::draw(cdf, rng)];
    std::map<std::string, std::size_t> out;
    for (std::size_t k = 0; k < counts.size(); ++k)
        if (counts[k]) out[detail::outcome_key(k, qubits.size())] = counts[k];
    return out;
}

/// w_i w_j <psi_i|psi_j>: inner product of amplitude blocks i and j, where
/// block k spans indices [k * 2^n, (k + 1) * 2^n).
inline Complex block_overlap(const Statevector& sv, std::size_t n_node_qubits, std::size_t i, std::size_t j) {
    if (n_node_qubits > sv.n_qubits()) throw std::invalid_argument("block_overlap: node register larger than state");
    const std::size_t blocks = std::size_t{1} << (sv.n_qubits() - n_node_qubits);
    if (i >= blocks || j >= blocks) throw std::out_of_range("block_overlap: block index out of range");
    const std::size_t len = std::size_t{1} << n_node_qubits;
    const auto a = sv.amplitudes();
    Complex acc{};
    for (std::size_t v = 0; v < len; ++v) acc += std::conj(a[i * len + v]) * a[j * len + v];
    return acc;
}

inline void write_amplitudes_csv(std::ostream& os, const Statevector& sv) {
    os << "index,re,im\n";
    for (std::size_t i = 0; i < sv.dimension(); ++i)
        os << i << ',' << format_double(sv[i].real()) << ',' << format_double(sv[i].imag()) << '\n';
}

}  // namespace qlemap
