#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <doctest.h>

#include "helpers.hpp"

using namespace mtm;

namespace {

// Independent re-evaluation of the transition row in long double, straight
// from the softmax definition with category K as the baseline.
std::vector<long double> oracle_row(int K, const std::vector<double>& delta,
                                    const XiParams& xi, int j) {
    std::vector<long double> u(static_cast<size_t>(K), 0.0L);
    for (int k = 1; k <= K - 1; ++k) {
        long double v = delta[static_cast<size_t>(k - 1)];
        if (j <= K - 1) v += xi(k, j);
        u[static_cast<size_t>(k - 1)] = expl(v);
    }
    u[static_cast<size_t>(K - 1)] = 1.0L;
    long double denom = 0.0L;
    for (long double v : u) denom += v;
    for (long double& v : u) v /= denom;
    return u;
}

// Marginal-consistency residual computed entirely with the oracle row.
double oracle_residual(int K, const std::vector<double>& delta, const XiParams& xi,
                       const std::vector<double>& pi_prev,
                       const std::vector<double>& pi_curr) {
    long double worst = 0.0L;
    for (int k = 1; k <= K - 1; ++k) {
        long double f = -static_cast<long double>(pi_curr[static_cast<size_t>(k - 1)]);
        for (int j = 1; j <= K; ++j)
            f += static_cast<long double>(pi_prev[static_cast<size_t>(j - 1)]) *
                 oracle_row(K, delta, xi, j)[static_cast<size_t>(k - 1)];
        worst = std::max(worst, fabsl(f));
    }
    return static_cast<double>(worst);
}

// Independent solver: continuation in the dependence strength with a plain
// Newton step on a finite-difference Jacobian, built only on oracle_row.
std::vector<double> oracle_solve(int K, const XiParams& xi,
                                 const std::vector<double>& pi_prev,
                                 const std::vector<double>& pi_curr) {
    const int m = K - 1;
    std::vector<double> delta(static_cast<size_t>(m));
    for (int k = 0; k < m; ++k)
        delta[static_cast<size_t>(k)] = std::log(pi_curr[static_cast<size_t>(k)] /
                                                 pi_curr[static_cast<size_t>(K - 1)]);
    auto resid = [&](const std::vector<double>& d, const XiParams& x) {
        Eigen::VectorXd f(m);
        for (int k = 1; k <= m; ++k) {
            long double v = -static_cast<long double>(pi_curr[static_cast<size_t>(k - 1)]);
            for (int j = 1; j <= K; ++j)
                v += static_cast<long double>(pi_prev[static_cast<size_t>(j - 1)]) *
                     oracle_row(K, d, x, j)[static_cast<size_t>(k - 1)];
            f(k - 1) = static_cast<double>(v);
        }
        return f;
    };
    for (int step = 1; step <= 10; ++step) {
        XiParams xs = xi;
        for (size_t i = 0; i < xs.xi.size(); ++i) xs.xi[i] = xi.xi[i] * (step / 10.0);
        for (int it = 0; it < 80; ++it) {
            Eigen::VectorXd f = resid(delta, xs);
            if (f.lpNorm<Eigen::Infinity>() < 1e-13) break;
            Eigen::MatrixXd J(m, m);
            const double h = 1e-7;
            for (int c = 0; c < m; ++c) {
                std::vector<double> dp = delta, dm = delta;
                dp[static_cast<size_t>(c)] += h;
                dm[static_cast<size_t>(c)] -= h;
                J.col(c) = (resid(dp, xs) - resid(dm, xs)) / (2.0 * h);
            }
            Eigen::VectorXd stepv = J.fullPivLu().solve(f);
            for (int c = 0; c < m; ++c) delta[static_cast<size_t>(c)] -= stepv(c);
        }
    }
    return delta;
}

}  // namespace

TEST_CASE("zero delta and zero xi give the uniform transition row") {
    XiParams xi = XiParams::zeros(5);
    std::vector<double> delta(4, 0.0);
    for (int j = 1; j <= 5; ++j) {
        auto row = transition_row(delta, xi, j);
        for (double p : row) CHECK(p == doctest::Approx(0.2).epsilon(1e-14));
    }
}

TEST_CASE("K = 2 with delta = log 2 gives (2/3, 1/3)") {
    XiParams xi = XiParams::zeros(2);
    auto row = transition_row({std::log(2.0)}, xi, 2);
    CHECK(row[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(row[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("transition rows match the direct softmax formula and sum to one") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    XiParams xi = ref_xi();
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> delta(4);
        for (double& d : delta) d = u(rng);
        for (int j = 1; j <= 5; ++j) {
            auto row = transition_row(delta, xi, j);
            auto oracle = oracle_row(5, delta, xi, j);
            double sum = 0.0;
            for (int k = 0; k < 5; ++k) {
                sum += row[static_cast<size_t>(k)];
                CHECK(row[static_cast<size_t>(k)] ==
                      doctest::Approx(static_cast<double>(oracle[static_cast<size_t>(k)]))
                          .epsilon(1e-13));
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("transition_row input validation") {
    XiParams xi = XiParams::zeros(3);
    CHECK_THROWS_AS(transition_row({0.0, 0.0}, xi, 0), data_error);
    CHECK_THROWS_AS(transition_row({0.0, 0.0}, xi, 4), data_error);
    CHECK_THROWS_AS(transition_row({0.0}, xi, 1), data_error);
}

TEST_CASE("xi = 0 with constant marginals solves in closed form") {
    std::vector<double> pi = {0.1, 0.3, 0.2, 0.25, 0.15};
    XiParams xi = XiParams::zeros(5);
    auto delta = solve_delta(pi, pi, xi);
    for (int k = 0; k < 4; ++k)
        CHECK(delta[static_cast<size_t>(k)] ==
              doctest::Approx(std::log(pi[static_cast<size_t>(k)] / pi[4])).epsilon(1e-10));
    // equal probabilities give delta = 0
    std::vector<double> eq(5, 0.2);
    auto d0 = solve_delta(eq, eq, xi);
    for (double d : d0) CHECK(std::fabs(d) < 1e-10);
}

TEST_CASE("solved delta satisfies marginal consistency against the oracle") {
    XiParams xi = ref_xi();
    std::vector<std::vector<double>> cases = {
        {0.2, 0.2, 0.2, 0.2, 0.2},
        {0.1, 0.3, 0.2, 0.25, 0.15},
        {0.05, 0.1, 0.4, 0.3, 0.15},
    };
    for (const auto& prev : cases)
        for (const auto& curr : cases) {
            auto delta = solve_delta(prev, curr, xi);
            CHECK(oracle_residual(5, delta, xi, prev, curr) <= 1e-10);
            // cross-check the value itself with the independent solver
            auto ref = oracle_solve(5, xi, prev, curr);
            for (int k = 0; k < 4; ++k)
                CHECK(delta[static_cast<size_t>(k)] ==
                      doctest::Approx(ref[static_cast<size_t>(k)]).epsilon(1e-7));
        }
}

TEST_CASE("warm-started solves along a smooth marginal path take few iterations") {
    ModelConfig cfg = ref_config(365);
    ThetaParams th = ref_theta(cfg);
    std::vector<double> X = build_design(cfg);
    MarginalField f;
    REQUIRE(fill_marginals(cfg, th.flatten(), X, f));
    XiParams xi = ref_xi();
    DeltaSolveSettings ds;
    double delta[kMaxCategories], trans[kMaxCategories * kMaxCategories];
    delta_init_from_marginals(5, f.pi_at(2), delta);
    REQUIRE(solve_delta_raw(5, f.pi_at(1), f.pi_at(2), xi.xi.data(), ds, delta, trans) >= 0);
    for (int t = 3; t <= cfg.n; ++t) {
        int iters = solve_delta_raw(5, f.pi_at(t - 1), f.pi_at(t), xi.xi.data(), ds, delta, trans);
        REQUIRE(iters >= 0);
        CHECK(iters <= 5);
    }
}

TEST_CASE("Newton Jacobian of the delta system matches finite differences") {
    XiParams xi = ref_xi();
    std::vector<double> prev = {0.15, 0.25, 0.2, 0.25, 0.15};
    std::vector<double> curr = {0.2, 0.2, 0.25, 0.2, 0.15};
    std::vector<double> delta = solve_delta(prev, curr, xi);
    double trans[kMaxCategories * kMaxCategories];
    build_transition(5, delta.data(), xi.xi.data(), trans);
    double A[kMaxCategories * kMaxCategories];
    delta_jacobian(5, trans, prev.data(), A);

    const double h = 1e-6;
    for (int c = 0; c < 4; ++c) {
        std::vector<double> dp = delta, dm = delta;
        dp[static_cast<size_t>(c)] += h;
        dm[static_cast<size_t>(c)] -= h;
        double tp[kMaxCategories * kMaxCategories], tm[kMaxCategories * kMaxCategories];
        build_transition(5, dp.data(), xi.xi.data(), tp);
        build_transition(5, dm.data(), xi.xi.data(), tm);
        double fp[kMaxCategories], fm[kMaxCategories];
        delta_residual(5, tp, prev.data(), curr.data(), fp);
        delta_residual(5, tm, prev.data(), curr.data(), fm);
        for (int k = 0; k < 4; ++k) {
            double fd = (fp[k] - fm[k]) / (2.0 * h);
            CHECK(A[k * 4 + c] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("delta derivatives with respect to the mean parameters match FD") {
    // pi(s) = softmax(a + b s) with exact derivative
    // dpi_k = pi_k (b_k - sum_j b_j pi_j)
    const int K = 4;
    std::vector<double> a_prev = {0.2, -0.1, 0.3, 0.0}, b_prev = {0.5, -0.2, 0.1, 0.0};
    std::vector<double> a_curr = {-0.1, 0.2, 0.1, 0.0}, b_curr = {-0.3, 0.4, 0.2, 0.0};
    XiParams xi = XiParams::zeros(K);
    xi(1, 1) = 1.2; xi(1, 2) = 0.4; xi(2, 2) = 0.8; xi(3, 1) = -0.5; xi(3, 3) = 0.6;

    auto softmax = [&](const std::vector<double>& av, const std::vector<double>& bv, double s) {
        std::vector<double> p(static_cast<size_t>(K));
        double denom = 0.0;
        for (int k = 0; k < K; ++k) {
            p[static_cast<size_t>(k)] =
                std::exp(av[static_cast<size_t>(k)] + bv[static_cast<size_t>(k)] * s);
            denom += p[static_cast<size_t>(k)];
        }
        for (double& v : p) v /= denom;
        return p;
    };
    auto dsoftmax = [&](const std::vector<double>& p, const std::vector<double>& bv) {
        double mean = 0.0;
        for (int k = 0; k < K; ++k) mean += bv[static_cast<size_t>(k)] * p[static_cast<size_t>(k)];
        std::vector<double> d(static_cast<size_t>(K));
        for (int k = 0; k < K; ++k)
            d[static_cast<size_t>(k)] = p[static_cast<size_t>(k)] *
                                        (bv[static_cast<size_t>(k)] - mean);
        return d;
    };

    const double s0 = 0.3, h = 1e-5;
    auto prev = softmax(a_prev, b_prev, s0);
    auto curr = softmax(a_curr, b_curr, s0);
    auto delta = solve_delta(prev, curr, xi);
    double trans[kMaxCategories * kMaxCategories];
    build_transition(K, delta.data(), xi.xi.data(), trans);

    auto analytic = solve_delta_dtheta(K, trans, prev.data(), dsoftmax(prev, b_prev),
                                       dsoftmax(curr, b_curr));
    auto dplus = solve_delta(softmax(a_prev, b_prev, s0 + h), softmax(a_curr, b_curr, s0 + h),
                             xi, {}, &delta);
    auto dminus = solve_delta(softmax(a_prev, b_prev, s0 - h), softmax(a_curr, b_curr, s0 - h),
                              xi, {}, &delta);
    for (int k = 0; k < K - 1; ++k) {
        double fd = (dplus[static_cast<size_t>(k)] - dminus[static_cast<size_t>(k)]) / (2.0 * h);
        CHECK(analytic[static_cast<size_t>(k)] == doctest::Approx(fd).epsilon(1e-6));
    }

    // zero marginal sensitivity means zero delta sensitivity
    std::vector<double> z(static_cast<size_t>(K), 0.0);
    auto zero = solve_delta_dtheta(K, trans, prev.data(), z, z);
    for (double v : zero) CHECK(v == 0.0);
}

TEST_CASE("delta derivatives with respect to xi entries match FD") {
    const int K = 4;
    std::vector<double> prev = {0.3, 0.2, 0.25, 0.25};
    std::vector<double> curr = {0.2, 0.3, 0.3, 0.2};
    XiParams xi = XiParams::zeros(K);
    xi(1, 1) = 0.9; xi(2, 1) = 0.5; xi(2, 3) = -0.4; xi(3, 2) = 0.7;

    auto delta = solve_delta(prev, curr, xi);
    double trans[kMaxCategories * kMaxCategories];
    build_transition(K, delta.data(), xi.xi.data(), trans);

    const double h = 1e-6;
    for (int a = 1; a <= K - 1; ++a)
        for (int b = 1; b <= K - 1; ++b) {
            auto analytic = solve_delta_dxi(K, trans, prev.data(), a, b);
            XiParams xp = xi, xm = xi;
            xp(a, b) += h;
            xm(a, b) -= h;
            auto dp = solve_delta(prev, curr, xp, {}, &delta);
            auto dm = solve_delta(prev, curr, xm, {}, &delta);
            for (int k = 0; k < K - 1; ++k) {
                double fd = (dp[static_cast<size_t>(k)] - dm[static_cast<size_t>(k)]) / (2.0 * h);
                CHECK(analytic[static_cast<size_t>(k)] ==
                      doctest::Approx(fd).epsilon(2e-6));
            }
        }
}
