#include <gtest/gtest.h>

#include <numbers>

#include "oracles.hpp"
#include "qlemap/embedding.hpp"

using namespace qlemap;

namespace {

EmbeddingProblem problem_for(const Graph& g, std::size_t p = 2, double lambda = 100.0) {
    EmbeddingProblem prob;
    prob.decomposition = decompose(laplacian(g));
    prob.n = log2_floor(g.num_nodes());
    prob.p = p;
    prob.lambda = lambda;
    return prob;
}

ParamVector random_theta(std::size_t count, Rng& rng) {
    ParamVector t(count);
    for (auto& x : t) x = uniform(rng, 0.0, 2 * std::numbers::pi);
    return t;
}

// Sum over blocks of block^dagger L block, straight from the graph Laplacian.
double dense_block_form(const Matrix& l, const Statevector& sv) {
    const std::size_t len = l.rows();
    double acc = 0.0;
    for (std::size_t b = 0; b < sv.dimension() / len; ++b)
        acc += oracle::real_quadratic_form(l, sv.amplitudes().subspan(b * len, len));
    return acc;
}

// Real state from d weighted columns.
Statevector state_from_blocks(const std::vector<std::vector<double>>& cols, const std::vector<double>& w) {
    std::vector<Complex> a;
    for (std::size_t b = 0; b < cols.size(); ++b)
        for (double x : cols[b]) a.emplace_back(w[b] * x);
    return Statevector::normalized(std::move(a));
}

std::vector<std::vector<double>> random_orthonormal(std::size_t len, std::size_t count, Rng& rng) {
    std::vector<std::vector<double>> out;
    while (out.size() < count) {
        std::vector<double> v(len);
        for (auto& x : v) x = standard_normal(rng);
        for (const auto& u : out) {
            const double c = dot(u, v);
            for (std::size_t i = 0; i < len; ++i) v[i] -= c * u[i];
        }
        const double nv = norm2(v);
        for (auto& x : v) x /= nv;
        out.push_back(std::move(v));
    }
    return out;
}

const Graph kTwoCliques(8, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}, {4, 5}, {4, 6}, {4, 7}, {5, 6}, {5, 7}, {6, 7}});

}  // namespace

TEST(Problem, Validation) {
    auto prob = problem_for(kTwoCliques);
    prob.p = 3;
    EXPECT_THROW(prob.validate(), std::invalid_argument);
    prob.p = 2;
    prob.n = 4;
    EXPECT_THROW(prob.validate(), std::invalid_argument);
    prob.n = 3;
    prob.lambda = -1.0;
    EXPECT_THROW(prob.validate(), std::invalid_argument);
    prob.lambda = 1.0;
    prob.mode = EvalMode::Shots;
    prob.shots = 0;
    EXPECT_THROW(prob.validate(), std::invalid_argument);
}

TEST(LaplacianExpectation, ZeroAnglesReadDegreeOfNodeZero) {
    const Graph g = sbm_generate(8, 0.7, 0.2, 2, 3);
    const auto prob = problem_for(g);
    const ParamVector zero(prob.ansatz().num_parameters(), 0.0);
    EXPECT_NEAR(laplacian_expectation(zero, prob), static_cast<double>(g.degrees()[0]), 1e-12);
    EXPECT_NEAR(laplacian_expectation(zero, prob, ExpectationPath::PerTerm), static_cast<double>(g.degrees()[0]), 1e-12);
}

TEST(LaplacianExpectation, EdgelessIsZero) {
    const auto prob = problem_for(Graph(8));
    Rng rng(1);
    for (int t = 0; t < 10; ++t) EXPECT_EQ(laplacian_expectation(random_theta(prob.ansatz().num_parameters(), rng), prob), 0.0);
}

TEST(LaplacianExpectation, BothPathsMatchDenseOracle) {
    const Graph g = random_graph(8, 0.4, 5);
    const Matrix l = laplacian(g);
    Rng rng(2);
    for (std::size_t p : {1u, 2u}) {
        const auto prob = problem_for(g, p);
        const EmbeddingCost fast(prob), slow(prob, ExpectationPath::PerTerm);
        for (int t = 0; t < 20; ++t) {
            const auto theta = random_theta(prob.ansatz().num_parameters(), rng);
            const auto sv = fast.state(theta);
            const double oracle_value = dense_block_form(l, sv);
            EXPECT_NEAR(fast.expectation(sv), oracle_value, 1e-10);
            EXPECT_NEAR(slow.expectation(sv), oracle_value, 1e-10);
        }
    }
}

TEST(LaplacianExpectation, ParallelEqualsSequentialExactly) {
    const auto prob = problem_for(sbm_generate(16, 0.6, 0.1, 2, 1));
    const EmbeddingCost seq(prob, ExpectationPath::PerTerm, 1), par(prob, ExpectationPath::PerTerm, 4);
    Rng rng(3);
    for (int t = 0; t < 5; ++t) {
        const auto theta = random_theta(prob.ansatz().num_parameters(), rng);
        EXPECT_EQ(seq(theta), par(theta));
    }
}

TEST(LaplacianExpectation, TermOrderAndGlobalPhaseInvariance) {
    auto prob = problem_for(sbm_generate(16, 0.6, 0.1, 2, 2));
    auto shuffled = prob;
    Rng rng(4);
    shuffle(shuffled.decomposition.terms, rng);
    const EmbeddingCost a(prob, ExpectationPath::PerTerm), b(shuffled, ExpectationPath::PerTerm);
    for (int t = 0; t < 5; ++t) {
        const auto theta = random_theta(prob.ansatz().num_parameters(), rng);
        const auto sv = a.state(theta);
        EXPECT_NEAR(a.expectation(sv), b.expectation(sv), 1e-12);
        std::vector<Complex> rotated(sv.amplitudes().begin(), sv.amplitudes().end());
        for (auto& x : rotated) x *= std::polar(1.0, 1.3);
        const auto phased = Statevector::from_amplitudes(rotated);
        EXPECT_NEAR(a.expectation(phased), a.expectation(sv), 1e-12);
        EXPECT_NEAR(a.penalty(phased), a.penalty(sv), 1e-12);
    }
}

TEST(Penalty, SinglePopulatedBlockIsZero) {
    Rng rng(5);
    const auto cols = random_orthonormal(8, 1, rng);
    std::vector<std::vector<double>> blocks{std::vector<double>(8, 0.0), cols[0], std::vector<double>(8, 0.0),
                                            std::vector<double>(8, 0.0)};
    const auto sv = state_from_blocks(blocks, {0, 1, 0, 0});
    const EmbeddingCost cost(problem_for(kTwoCliques));
    EXPECT_EQ(cost.penalty(sv), 0.0);
}

TEST(Penalty, TwoBlocksViaAncillaX) {
    Rng rng(6);
    for (int t = 0; t < 20; ++t) {
        std::vector<Complex> a(16);
        for (auto& x : a) x = standard_normal(rng);
        const auto sv = Statevector::normalized(a);
        const double xa = exact_pauli_expectation(sv, PauliString::from_text("XIII"));
        EXPECT_NEAR(xa, 2 * block_overlap(sv, 3, 0, 1).real(), 1e-12);
        const EmbeddingCost cost(problem_for(kTwoCliques, 1));
        EXPECT_NEAR(cost.penalty(sv), 2 * (xa / 2) * (xa / 2), 1e-12);
    }
}

TEST(Penalty, FourBlockRecoveryMatchesBlockSlices) {
    Rng rng(7);
    const std::size_t n = 5;
    const auto obs = penalty_observables(n, 2);
    const std::pair<std::size_t, std::size_t> pairs[] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    for (int t = 0; t < 50; ++t) {
        std::vector<Complex> a(128);
        for (auto& x : a) x = standard_normal(rng);
        const auto sv = Statevector::normalized(a);
        std::vector<double> ev;
        for (const auto& o : obs) ev.push_back(exact_pauli_expectation(sv, o));
        const auto rec = overlaps_from_expectations(2, ev);
        for (std::size_t k = 0; k < 6; ++k)
            EXPECT_NEAR(rec[k], block_overlap(sv, n, pairs[k].first, pairs[k].second).real(), 1e-10);
    }
}

TEST(Penalty, ZeroExactlyWhenBlocksOrthogonal) {
    Rng rng(8);
    const EmbeddingCost cost(problem_for(kTwoCliques));
    const auto cols = random_orthonormal(8, 4, rng);
    EXPECT_LT(cost.penalty(state_from_blocks(cols, {0.7, 0.5, 0.4, 0.3})), 1e-25);
    auto skew = cols;
    for (std::size_t i = 0; i < 8; ++i) skew[3][i] = 0.9 * cols[3][i] + 0.1 * cols[0][i];
    EXPECT_GT(cost.penalty(state_from_blocks(skew, {0.7, 0.5, 0.4, 0.3})), 1e-6);
}

TEST(Cost, LambdaZeroIsExpectation) {
    const auto prob = problem_for(sbm_generate(8, 0.7, 0.2, 2, 4), 2, 0.0);
    Rng rng(9);
    const auto theta = random_theta(prob.ansatz().num_parameters(), rng);
    EXPECT_EQ(embedding_cost(theta, prob), laplacian_expectation(theta, prob));
}

TEST(Cost, UniformSuperpositionIsAllPenalty) {
    const auto prob = problem_for(sbm_generate(8, 0.7, 0.2, 2, 4));
    ParamVector theta(prob.ansatz().num_parameters(), 0.0);
    for (std::size_t q = 0; q < 5; ++q) theta[q] = std::numbers::pi / 2;
    const EmbeddingCost cost(prob);
    const auto parts = cost.breakdown(theta);
    EXPECT_NEAR(parts.expectation, 0.0, 1e-12);
    // sum_{i != j} (w_i w_j)^2 with w = 1/2: 12 / 16
    EXPECT_NEAR(parts.total, 100.0 * 0.75, 1e-10);
}

TEST(Cost, WeightedRayleighLowerBound) {
    // Orthonormal blocks with weights w sorted descending: the expectation is
    // at least sum_i w_i^2 lambda_i, with equality on eigenvectors.
    const Graph g = sbm_generate(8, 0.6, 0.2, 2, 6);
    const Matrix l = laplacian(g);
    const auto eig = sym_eigen(l);
    const EmbeddingCost cost(problem_for(g));
    Rng rng(10);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> w(4);
        for (auto& x : w) x = uniform01(rng) + 0.05;
        std::sort(w.rbegin(), w.rend());
        const double s = norm2(w);
        for (auto& x : w) x /= s;
        const auto sv = state_from_blocks(random_orthonormal(8, 4, rng), w);
        double bound = 0.0;
        for (std::size_t i = 0; i < 4; ++i) bound += w[i] * w[i] * eig.eigenvalues[i];
        EXPECT_GE(cost.expectation(sv), bound - 1e-10);
        if (t % 10 == 0) {
            // uniform weights: d * expectation >= sum of the d smallest eigenvalues
            const auto uni = state_from_blocks(random_orthonormal(8, 4, rng), {0.5, 0.5, 0.5, 0.5});
            EXPECT_GE(4 * cost.expectation(uni), smallest_eigenvalue_sum(l, 4) - 1e-10);
        }
    }
    std::vector<std::vector<double>> eigvecs;
    for (std::size_t i = 0; i < 4; ++i) eigvecs.push_back(eig.eigenvectors.column(i));
    const std::vector<double> w{0.6, 0.5, 0.5, std::sqrt(1 - 0.36 - 0.5)};
    double bound = 0.0;
    for (std::size_t i = 0; i < 4; ++i) bound += w[i] * w[i] * eig.eigenvalues[i];
    EXPECT_NEAR(cost.expectation(state_from_blocks(eigvecs, w)), bound, 1e-10);
}

TEST(Cost, ShotModeIsAFunctionOfTheta) {
    auto prob = problem_for(sbm_generate(8, 0.7, 0.2, 2, 4));
    prob.mode = EvalMode::Shots;
    prob.shots = 20000;
    prob.shot_seed = 42;
    const EmbeddingCost shots(prob);
    auto exact_prob = prob;
    exact_prob.mode = EvalMode::Exact;
    const EmbeddingCost exact(exact_prob);
    Rng rng(11);
    for (int t = 0; t < 5; ++t) {
        const auto theta = random_theta(prob.ansatz().num_parameters(), rng);
        const auto a = shots.breakdown(theta), b = shots.breakdown(theta);
        EXPECT_EQ(a.total, b.total);
        const auto e = exact.breakdown(theta);
        EXPECT_NEAR(a.expectation, e.expectation, 0.25);
        EXPECT_NEAR(a.penalty, e.penalty, 0.05);
    }
}

TEST(Extract, ZeroAnglesAndNormalization) {
    const auto prob = problem_for(kTwoCliques);
    const auto r = extract_embedding(ParamVector(prob.ansatz().num_parameters(), 0.0), prob);
    EXPECT_EQ(r.weights, (std::vector<double>{1.0, 0.0, 0.0, 0.0}));
    for (std::size_t v = 0; v < 8; ++v) EXPECT_EQ(r.Y(v, 0), v == 0 ? 1.0 : 0.0);
    Rng rng(12);
    for (int t = 0; t < 20; ++t) {
        const auto rr = extract_embedding(random_theta(prob.ansatz().num_parameters(), rng), prob);
        double s = 0.0;
        for (double w : rr.weights) s += w * w;
        EXPECT_NEAR(s, 1.0, 1e-10);
    }
}

TEST(Train, TwoCliquesReachZeroCostAndBestOfRestarts) {
    const auto prob = problem_for(kTwoCliques, 1);
    OptimizeConfig cfg;
    const auto r = train_embedding(prob, 5, cfg, 3);
    ASSERT_EQ(r.restart_costs.size(), 5u);
    EXPECT_EQ(r.final_cost, *std::min_element(r.restart_costs.begin(), r.restart_costs.end()));
    EXPECT_LT(r.expectation_term, 0.2);
    EXPECT_LT(r.penalty_term / 2, 0.05);
    EXPECT_NEAR(r.final_cost, r.expectation_term + prob.lambda * r.penalty_term, 1e-12);
    for (std::size_t i = 1; i < r.cost_trace.size(); ++i) EXPECT_LE(r.cost_trace[i].second, r.cost_trace[i - 1].second);

    const auto again = train_embedding(prob, 5, cfg, 3);
    EXPECT_EQ(again.theta_opt, r.theta_opt);
    EXPECT_EQ(again.final_cost, r.final_cost);
    EXPECT_THROW(train_embedding(prob, 0, cfg, 3), std::invalid_argument);
}

TEST(Train, RandomAnglesInRange) {
    const auto a = random_angles(100, 7);
    for (double x : a) {
        EXPECT_GE(x, 0.0);
        EXPECT_LT(x, 2 * std::numbers::pi);
    }
    EXPECT_EQ(a, random_angles(100, 7));
}

TEST(SelectLambda, Schedule) {
    std::vector<double> asked;
    auto trial = [&](double acc_at_100, double cost_at_100) {
        return [&asked, acc_at_100, cost_at_100](double lambda) {
            asked.push_back(lambda);
            return LambdaTrial{lambda, lambda == 100.0 ? acc_at_100 : 0.7, cost_at_100};
        };
    };
    auto s = select_lambda(trial(0.9, 1.0), 0.5);
    EXPECT_EQ(asked, (std::vector<double>{100.0}));
    EXPECT_EQ(s.lambda, 100.0);

    asked.clear();
    s = select_lambda(trial(0.5, 0.1), 0.5);
    EXPECT_EQ(asked, (std::vector<double>{100.0, 200.0}));
    EXPECT_EQ(s.lambda, 200.0);

    asked.clear();
    s = select_lambda(trial(0.5, 2.0), 0.5);
    EXPECT_EQ(asked, (std::vector<double>{100.0, 10.0}));
    EXPECT_EQ(s.lambda, 10.0);

    asked.clear();
    s = select_lambda(trial(0.7, 2.0), 0.5);
    EXPECT_EQ(s.lambda, 100.0);  // tie keeps the earlier trial
    EXPECT_EQ(s.trials.size(), 2u);
}
