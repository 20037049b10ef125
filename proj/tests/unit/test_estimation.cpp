#include <cmath>
#include <cstring>
#include <vector>

#include <doctest.h>

#include "helpers.hpp"

using namespace mtm;

TEST_CASE("init_theta recovers empirical cumulative logits on iid data") {
    ModelConfig cfg;
    cfg.K = 5;
    cfg.n = 3650;
    cfg.T = 365;
    cfg.harmonics = 0;
    ThetaParams truth = ThetaParams::zeros(cfg);
    truth.alpha = {-1.3863, -0.4055, 0.4055, 1.3863};
    OrdinalSeries y = simulate_one(cfg, truth, XiParams::zeros(5), 21);

    ThetaParams th0 = init_theta(y, cfg);
    const double expected[4] = {-1.386, -0.405, 0.405, 1.386};
    for (int k = 0; k < 4; ++k)
        CHECK(std::fabs(th0.alpha[static_cast<size_t>(k)] - expected[k]) <= 0.1);

    // closed-form oracle: logit of the empirical cumulative frequencies
    std::vector<int> counts = y.category_counts();
    double cum = 0.0;
    for (int k = 0; k < 4; ++k) {
        cum += counts[static_cast<size_t>(k)];
        double oracle = logit(cum / cfg.n);
        CHECK(std::fabs(th0.alpha[static_cast<size_t>(k)] - oracle) <= 0.02);
    }
}

TEST_CASE("init_xi reproduces the smoothed transition-frequency formula") {
    ModelConfig cfg;
    cfg.K = 3;
    cfg.n = 500;
    cfg.T = 10;
    cfg.harmonics = 0;
    ThetaParams truth = ThetaParams::zeros(cfg);
    truth.alpha = {logit(1.0 / 3.0), logit(2.0 / 3.0)};
    XiParams txi = XiParams::zeros(3);
    txi(1, 1) = 1.0;
    txi(2, 2) = 0.8;
    OrdinalSeries y = simulate_one(cfg, truth, txi, 77);

    ThetaParams th0 = init_theta(y, cfg);
    XiParams xi0 = init_xi(y, cfg, th0);

    // independent re-computation: 0.5-smoothed transition frequencies minus
    // the log-ratio of time-averaged fitted marginals
    double counts[3][3];
    for (auto& row : counts) std::memset(row, 0, sizeof(row));
    for (int t = 2; t <= cfg.n; ++t) counts[y[t - 1] - 1][y[t] - 1] += 1.0;
    std::vector<double> X = build_design(cfg);
    MarginalField f;
    REQUIRE(fill_marginals(cfg, th0.flatten(), X, f));
    double pibar[3] = {0.0, 0.0, 0.0};
    for (int t = 1; t <= cfg.n; ++t)
        for (int k = 0; k < 3; ++k) pibar[k] += f.pi_at(t)[k] / cfg.n;
    for (int j = 1; j <= 2; ++j) {
        double rowsum = 1.5;
        for (int k = 0; k < 3; ++k) rowsum += counts[j - 1][k];
        for (int k = 1; k <= 2; ++k) {
            double pjk = (counts[j - 1][k - 1] + 0.5) / rowsum;
            double pjK = (counts[j - 1][2] + 0.5) / rowsum;
            double expect = std::log(pjk / pjK) - std::log(pibar[k - 1] / pibar[2]);
            CHECK(xi0(k, j) == doctest::Approx(expect).epsilon(1e-12));
        }
    }

    // arithmetic spot check of the formula: p-hat row (0.5, 0.25, 0.25) with
    // flat average marginals yields column entries (log 2, 0)
    CHECK(std::log(0.5 / 0.25) - 0.0 == doctest::Approx(std::log(2.0)));
}

TEST_CASE("init_xi entries are near zero for independent equal-probability data") {
    ModelConfig cfg;
    cfg.K = 5;
    cfg.n = 3650;
    cfg.T = 365;
    cfg.harmonics = 0;
    ThetaParams truth = ThetaParams::zeros(cfg);
    truth.alpha = {-1.3863, -0.4055, 0.4055, 1.3863};
    OrdinalSeries y = simulate_one(cfg, truth, XiParams::zeros(5), 31);
    ThetaParams th0 = init_theta(y, cfg);
    XiParams xi0 = init_xi(y, cfg, th0);
    for (double v : xi0.xi) CHECK(std::fabs(v) <= 0.2);
}

TEST_CASE("fit refuses a degenerate series naming the missing category") {
    ModelConfig cfg;
    cfg.K = 3;
    cfg.n = 50;
    cfg.harmonics = 0;
    OrdinalSeries y;
    y.K = 3;
    for (int t = 0; t < 50; ++t) y.values.push_back(1 + (t % 2));  // category 3 absent
    try {
        fit(y, cfg);
        FAIL("expected data_error");
    } catch (const data_error& e) {
        CHECK(std::string(e.what()).find("category 3") != std::string::npos);
    }
}

TEST_CASE("fitting independent data drives xi toward zero") {
    ModelConfig cfg = ref_config(3650);
    ThetaParams truth = ref_theta(cfg);
    OrdinalSeries y = simulate_one(cfg, truth, XiParams::zeros(5), 41);

    FitResult res = fit(y, cfg, {}, false);
    CHECK(res.converged);
    for (double v : res.xi.xi) CHECK(std::fabs(v) <= 0.3);

    // loglik close to the independence-fit oracle
    ThetaParams th0 = init_theta(y, cfg);
    Workspace ws;
    EvalResult er;
    REQUIRE(evaluate_independence(y, cfg, th0.flatten(), ws, false, false, er));
    CHECK(res.loglik >= er.loglik - 1e-6);
    CHECK(res.loglik - er.loglik <= 25.0);  // 16 extra xi parameters
}

TEST_CASE("joint convergence within three outer iterations at the reference truth") {
    ModelConfig cfg = ref_config(3650);
    OrdinalSeries y = simulate_one(cfg, ref_theta(cfg), ref_xi(), 51);
    FitResult res = fit(y, cfg, {}, false);
    CHECK(res.converged);
    CHECK(res.outer_iters <= 3);
}

TEST_CASE("fit is deterministic and never decreases the starting loglik") {
    ModelConfig cfg = ref_config(1095);
    OrdinalSeries y = simulate_one(cfg, ref_theta(cfg), ref_xi(), 61);
    FitResult a = fit(y, cfg, {}, false);
    FitResult b = fit(y, cfg, {}, false);
    CHECK(a.loglik == b.loglik);
    CHECK(a.theta.flatten() == b.theta.flatten());
    CHECK(a.xi.xi == b.xi.xi);

    ThetaParams th0 = init_theta(y, cfg);
    XiParams xi0 = init_xi(y, cfg, th0);
    Workspace ws;
    EvalResult er;
    EvalOptions opt;
    REQUIRE(evaluate(y, cfg, th0.flatten(), xi0, ws, opt, er));
    CHECK(a.loglik >= er.loglik);
}

TEST_CASE("refitting from the fitted point is a fixed point") {
    ModelConfig cfg = ref_config(1095);
    OrdinalSeries y = simulate_one(cfg, ref_theta(cfg), ref_xi(), 71);
    FitResult a = fit(y, cfg, {}, false);
    FitResult again = fit_from(y, cfg, a.theta, a.xi, {}, false);
    CHECK(again.converged);
    CHECK(again.outer_iters <= 1);
    CHECK(again.loglik == doctest::Approx(a.loglik).epsilon(1e-10));
}

TEST_CASE("the changepoint alternative nests the null") {
    ModelConfig cfg = ref_config(730);
    OrdinalSeries y = simulate_one(cfg, ref_theta(cfg), ref_xi(), 81);
    FitResult null_fit = fit(y, cfg, {}, false);
    for (int tau : {200, 365, 500}) {
        ModelConfig alt = cfg.with_changepoint(tau);
        std::vector<double> th = null_fit.theta.flatten();
        th.insert(th.end(), 4, 0.0);
        FitResult alt_fit =
            fit_from(y, alt, ThetaParams::unflatten(alt, th), null_fit.xi, {}, false);
        CHECK(alt_fit.loglik >= null_fit.loglik - 1e-6);
    }
}

TEST_CASE("fit settings are validated") {
    FitSettings s;
    s.epsilon = 0.0;
    CHECK_THROWS_AS(s.validate(), data_error);
    s = FitSettings{};
    s.max_outer = 0;
    CHECK_THROWS_AS(s.validate(), data_error);
}

TEST_CASE("Wald inference is attached and covers the truth scale") {
    ModelConfig cfg = ref_config(1825);
    OrdinalSeries y = simulate_one(cfg, ref_theta(cfg), ref_xi(), 91);
    FitResult res = fit(y, cfg, {}, true);
    REQUIRE(res.inference.has_value());
    const WaldInference& w = *res.inference;
    REQUIRE(static_cast<int>(w.estimate.size()) == cfg.theta_dim() + cfg.xi_dim());
    for (size_t i = 0; i < w.estimate.size(); ++i) {
        CHECK(w.se[i] > 0.0);
        CHECK(w.ci_lower[i] < w.estimate[i]);
        CHECK(w.ci_upper[i] > w.estimate[i]);
    }
}
