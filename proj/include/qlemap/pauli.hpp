#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qlemap/graph.hpp"
#include "qlemap/matrix.hpp"
#include "qlemap/random.hpp"

namespace qlemap {

using Complex = std::complex<double>;

// Coefficients below this are treated as exact zeros. Laplacians are integer
// valued, so every true coefficient is a dyadic rational well above it.
inline constexpr double kPruneTolerance = 1e-12;

enum class Pauli : std::uint8_t { I = 0, X = 1, Y = 2, Z = 3 };

inline char to_char(Pauli p) { return "IXYZ"[static_cast<int>(p)]; }

inline Pauli pauli_from_char(char c) {
    switch (c) {
        case 'I': return Pauli::I;
        case 'X': return Pauli::X;
        case 'Y': return Pauli::Y;
        case 'Z': return Pauli::Z;
        default: throw std::invalid_argument(std::string("pauli: unknown factor '") + c + "'");
    }
}

/// Tensor product of single-qubit Paulis, one factor per qubit.
///
/// factor(q) acts on qubit q, where qubit 0 is the least-significant bit of
/// a basis index. The text form is written in Kronecker order, most
/// significant qubit first, so "ZIX" is Z on qubit 2 and X on qubit 0.
class PauliString {
public:
    PauliString() = default;
    explicit PauliString(std::size_t n_qubits) : factors_(n_qubits, Pauli::I) {}
    explicit PauliString(std::vector<Pauli> factors) : factors_(std::move(factors)) {}

    static PauliString from_text(std::string_view text) {
        std::vector<Pauli> f(text.size());
        for (std::size_t i = 0; i < text.size(); ++i) f[text.size() - 1 - i] = pauli_from_char(text[i]);
        return PauliString(std::move(f));
    }

    // Decode a base-4 code, digit q = factor on qubit q.
    static PauliString from_code(std::uint64_t code, std::size_t n_qubits) {
        std::vector<Pauli> f(n_qubits);
        for (std::size_t q = 0; q < n_qubits; ++q) {
            f[q] = static_cast<Pauli>(code & 3U);
            code >>= 2;
        }
        return PauliString(std::move(f));
    }

    std::string to_text() const {
        std::string s(factors_.size(), 'I');
        for (std::size_t q = 0; q < factors_.size(); ++q) s[factors_.size() - 1 - q] = to_char(factors_[q]);
        return s;
    }

    std::uint64_t code() const {
        std::uint64_t c = 0;
        for (std::size_t q = factors_.size(); q-- > 0;) c = (c << 2) | static_cast<std::uint64_t>(factors_[q]);
        return c;
    }

    std::size_t size() const noexcept { return factors_.size(); }
    Pauli operator[](std::size_t q) const { return factors_[q]; }
    const std::vector<Pauli>& factors() const noexcept { return factors_; }

    std::size_t y_count() const {
        return static_cast<std::size_t>(std::count(factors_.begin(), factors_.end(), Pauli::Y));
    }

    // Bits flipped by the string (X or Y factors).
    std::uint64_t flip_mask() const {
        std::uint64_t m = 0;
        for (std::size_t q = 0; q < factors_.size(); ++q)
            if (factors_[q] == Pauli::X || factors_[q] == Pauli::Y) m |= (1ULL << q);
        return m;
    }

    // Bits contributing a sign (Z or Y factors).
    std::uint64_t phase_mask() const {
        std::uint64_t m = 0;
        for (std::size_t q = 0; q < factors_.size(); ++q)
            if (factors_[q] == Pauli::Z || factors_[q] == Pauli::Y) m |= (1ULL << q);
        return m;
    }

    /// Returns the same string padded with identities up to `n_qubits`
    /// (new factors land on the high qubits).
    PauliString extended(std::size_t n_qubits) const {
        if (n_qubits < factors_.size()) throw std::invalid_argument("pauli: cannot shrink a string");
        auto f = factors_;
        f.resize(n_qubits, Pauli::I);
        return PauliString(std::move(f));
    }

    friend auto operator<=>(const PauliString&, const PauliString&) = default;

private:
    std::vector<Pauli> factors_;
};

/// The single nonzero entry of row `row` of the string's matrix sits in
/// column row ^ flip_mask and equals (-i)^{#Y} * (-1)^{popcount(row & phase_mask)}.
inline Complex pauli_row_phase(const PauliString& p, std::uint64_t row) {
    // Y[b][1-b] = -i * (-1)^b, so each Y contributes a factor -i and a sign.
    static const Complex ipow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    const std::size_t ny = p.y_count();
    const int bits = std::popcount(row & p.phase_mask());
    Complex v = ipow[(3 * ny) % 4];
    if (bits % 2) v = -v;
    return v;
}

struct PauliTerm {
    double coefficient = 0.0;
    PauliString string;
};

struct PauliDecomposition {
    std::size_t n_qubits = 0;
    std::vector<PauliTerm> terms;
    double source_norm = 0.0;  // sum of |h_l| before any thresholding
};

struct ThresholdReport {
    double threshold = 0.0;
    std::size_t kept = 0;
    std::size_t dropped = 0;
    double alpha = 1.0;
};

/// All 4^n complex coefficients of M in the Pauli basis, indexed by
/// PauliString::code(). Built by the block recursion
///   M = I x (A+D)/2 + Z x (A-D)/2 + X x (B+C)/2 + Y x i(B-C)/2
/// peeling the most significant qubit first. Nothing is pruned, so the
/// imaginary parts and odd-Y entries are available for inspection.
inline std::vector<Complex> pauli_coefficients(const Matrix& m) {
    if (!m.is_square() || !is_power_of_two(m.rows()))
        throw std::invalid_argument("decompose: matrix size must be a power of 2");
    const std::size_t n = log2_floor(m.rows());
    const Complex imag_unit(0.0, 1.0);

    // blocks[code] holds the sub-matrix still to be split for the factors
    // fixed so far; codes grow from the top qubit down.
    std::size_t size = m.rows();
    std::vector<std::vector<Complex>> blocks(1, std::vector<Complex>(m.data().begin(), m.data().end()));
    std::vector<std::uint64_t> codes(1, 0);

    for (std::size_t level = 0; level < n; ++level) {
        const std::size_t half = size / 2;
        const std::size_t qubit = n - 1 - level;
        std::vector<std::vector<Complex>> next;
        std::vector<std::uint64_t> next_codes;
        next.reserve(blocks.size() * 4);
        next_codes.reserve(blocks.size() * 4);
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const auto& blk = blocks[b];
            std::vector<Complex> mi(half * half), mx(half * half), my(half * half), mz(half * half);
            for (std::size_t r = 0; r < half; ++r)
                for (std::size_t c = 0; c < half; ++c) {
                    const Complex a = blk[r * size + c];
                    const Complex bb = blk[r * size + c + half];
                    const Complex cc = blk[(r + half) * size + c];
                    const Complex d = blk[(r + half) * size + c + half];
                    const std::size_t k = r * half + c;
                    mi[k] = 0.5 * (a + d);
                    mz[k] = 0.5 * (a - d);
                    mx[k] = 0.5 * (bb + cc);
                    my[k] = 0.5 * imag_unit * (bb - cc);
                }
            const std::uint64_t shift = 2 * qubit;
            next.push_back(std::move(mi));
            next_codes.push_back(codes[b] | (static_cast<std::uint64_t>(Pauli::I) << shift));
            next.push_back(std::move(mx));
            next_codes.push_back(codes[b] | (static_cast<std::uint64_t>(Pauli::X) << shift));
            next.push_back(std::move(my));
            next_codes.push_back(codes[b] | (static_cast<std::uint64_t>(Pauli::Y) << shift));
            next.push_back(std::move(mz));
            next_codes.push_back(codes[b] | (static_cast<std::uint64_t>(Pauli::Z) << shift));
        }
        blocks = std::move(next);
        codes = std::move(next_codes);
        size = half;
    }

    std::vector<Complex> out(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) out[codes[b]] = blocks[b][0];
    return out;
}

/// Exact Pauli decomposition of a real symmetric 2^n x 2^n matrix. Terms are
/// ordered by code; numerical zeros (|h| < 1e-12) are pruned.
inline PauliDecomposition decompose(const Matrix& L) {
    const auto coeffs = pauli_coefficients(L);
    PauliDecomposition dec;
    dec.n_qubits = log2_floor(L.rows());
    for (std::uint64_t code = 0; code < coeffs.size(); ++code) {
        const double h = coeffs[code].real();
        if (std::abs(h) < kPruneTolerance) continue;
        dec.terms.push_back({h, PauliString::from_code(code, dec.n_qubits)});
        dec.source_norm += std::abs(h);
    }
    return dec;
}

/// Sum of h_l * matrix(H_l). Throws if any entry picks up an imaginary part.
inline Matrix reconstruct(const PauliDecomposition& dec) {
    const std::size_t dim = std::size_t{1} << dec.n_qubits;
    std::vector<Complex> acc(dim * dim);
    for (const auto& t : dec.terms) {
        if (t.string.size() != dec.n_qubits) throw std::invalid_argument("reconstruct: string length mismatch");
        const auto flip = t.string.flip_mask();
        for (std::uint64_t r = 0; r < dim; ++r) acc[r * dim + (r ^ flip)] += t.coefficient * pauli_row_phase(t.string, r);
    }
    Matrix out(dim, dim);
    for (std::size_t i = 0; i < acc.size(); ++i) {
        if (std::abs(acc[i].imag()) >= kPruneTolerance)
            throw std::runtime_error("reconstruct: decomposition does not describe a real matrix");
        out(i / dim, i % dim) = acc[i].real();
    }
    return out;
}

/// Keeps the terms with |h_l| >= t. alpha is measured against source_norm.
inline std::pair<PauliDecomposition, ThresholdReport> apply_threshold(const PauliDecomposition& dec, double t) {
    if (!(t >= 0.0)) throw std::invalid_argument("apply_threshold: threshold must be >= 0");
    PauliDecomposition out;
    out.n_qubits = dec.n_qubits;
    out.source_norm = dec.source_norm;
    double kept_mass = 0.0;
    for (const auto& term : dec.terms) {
        if (std::abs(term.coefficient) >= t) {
            out.terms.push_back(term);
            kept_mass += std::abs(term.coefficient);
        }
    }
    ThresholdReport rep;
    rep.threshold = t;
    rep.kept = out.terms.size();
    rep.dropped = dec.terms.size() - out.terms.size();
    rep.alpha = dec.source_norm > 0.0 ? kept_mass / dec.source_norm : 1.0;
    return {std::move(out), rep};
}

inline std::size_t term_count(const PauliDecomposition& dec) { return dec.terms.size(); }

/// Points (k/N, cumulative |h| share of the k largest terms) for k = 1..N.
inline std::vector<std::pair<double, double>> coefficient_curve(const PauliDecomposition& dec) {
    if (dec.terms.empty()) throw std::invalid_argument("coefficient_curve: empty decomposition");
    std::vector<double> mags;
    mags.reserve(dec.terms.size());
    for (const auto& t : dec.terms) mags.push_back(std::abs(t.coefficient));
    std::sort(mags.begin(), mags.end(), std::greater<>());
    double total = 0.0;
    for (double m : mags) total += m;

    std::vector<std::pair<double, double>> curve;
    curve.reserve(mags.size());
    double run = 0.0;
    const auto n = static_cast<double>(mags.size());
    for (std::size_t k = 0; k < mags.size(); ++k) {
        run += mags[k];
        curve.emplace_back(static_cast<double>(k + 1) / n, run / total);
    }
    curve.back().second = 1.0;
    return curve;
}

// Piecewise-linear read of a coefficient curve, anchored at (0, 0).
inline double curve_value_at(const std::vector<std::pair<double, double>>& curve, double fraction) {
    double x0 = 0.0, y0 = 0.0;
    for (const auto& [x1, y1] : curve) {
        if (fraction <= x1) return x1 == x0 ? y1 : y0 + (y1 - y0) * (fraction - x0) / (x1 - x0);
        x0 = x1;
        y0 = y1;
    }
    return 1.0;
}

struct TermCountStats {
    double mean_terms = 0.0;
    double mean_edges = 0.0;
    double ratio = 0.0;  // mean_terms / mean_edges, 0 when there are no edges
};

/// Average decomposition size over `n_graphs` random graphs; graph i uses
/// derive_seed(seed, i).
inline TermCountStats mean_term_count(std::size_t n_nodes, double density, std::size_t n_graphs, std::uint64_t seed) {
    TermCountStats s;
    if (n_graphs == 0) return s;
    for (std::size_t i = 0; i < n_graphs; ++i) {
        const auto g = random_graph(n_nodes, density, derive_seed(seed, i));
        s.mean_terms += static_cast<double>(term_count(decompose(laplacian(g))));
        s.mean_edges += static_cast<double>(g.num_edges());
    }
    s.mean_terms /= static_cast<double>(n_graphs);
    s.mean_edges /= static_cast<double>(n_graphs);
    s.ratio = s.mean_edges > 0.0 ? s.mean_terms / s.mean_edges : 0.0;
    return s;
}

// ---------------------------------------------------------------------------
// CSV: header "pauli,coefficient", one row per term, 17 significant digits.

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline void write_decomposition_csv(std::ostream& os, const PauliDecomposition& dec) {
    os << "pauli,coefficient\n";
    for (const auto& t : dec.terms) os << t.string.to_text() << ',' << format_double(t.coefficient) << '\n';
}

/// Reads a decomposition CSV. An empty file body needs `n_qubits_hint` to
/// know the register size. source_norm is recomputed from the rows read.
inline PauliDecomposition read_decomposition_csv(std::istream& is, std::size_t n_qubits_hint = 0) {
    std::string line;
    if (!std::getline(is, line) || line != "pauli,coefficient")
        throw std::runtime_error("decomposition csv: missing header");
    PauliDecomposition dec;
    dec.n_qubits = n_qubits_hint;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("decomposition csv: malformed row '" + line + "'");
        auto str = PauliString::from_text(std::string_view(line).substr(0, comma));
        if (first) {
            dec.n_qubits = str.size();
            first = false;
        } else if (str.size() != dec.n_qubits) {
            throw std::runtime_error("decomposition csv: inconsistent string lengths");
        }
        const double h = std::strtod(line.c_str() + comma + 1, nullptr);
        dec.terms.push_back({h, std::move(str)});
        dec.source_norm += std::abs(h);
    }
    return dec;
}

}  // namespace qlemap
