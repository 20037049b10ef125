#ifndef MTM_MEAN_MODEL_HPP
#define MTM_MEAN_MODEL_HPP

#include <cmath>
#include <vector>

#include "mtm/types.hpp"

namespace mtm {

/// Overflow-safe logistic function.
inline double expit(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Covariate vector x_t for 1-based time t: intercept, cos/sin pairs,
/// scaled trend t/n, post-change indicator 1[t > tau].
inline void covariate_row(const ModelConfig& cfg, int t, double* out) {
    int c = 0;
    out[c++] = 1.0;
    for (int h = 1; h <= cfg.harmonics; ++h) {
        double w = 2.0 * M_PI * h * t / cfg.T;
        out[c++] = std::cos(w);
        out[c++] = std::sin(w);
    }
    if (cfg.trend) out[c++] = static_cast<double>(t) / cfg.n;
    if (cfg.changepoint) out[c++] = (t > *cfg.changepoint) ? 1.0 : 0.0;
}

/// Row-major n x m design matrix for the mean model.
inline std::vector<double> build_design(const ModelConfig& cfg) {
    int m = cfg.covariate_count();
    std::vector<double> X(static_cast<size_t>(cfg.n) * m);
    for (int t = 1; t <= cfg.n; ++t)
        covariate_row(cfg, t, &X[static_cast<size_t>(t - 1) * m]);
    return X;
}

/// eta_{t,k} for k = 1..K-1 at one time point.
inline std::vector<double> linear_predictor(const ModelConfig& cfg,
                                            const ThetaParams& theta, int t) {
    theta.check_dims(cfg);
    if (t < 1 || t > cfg.n) throw data_error("linear_predictor: t out of range");
    int m = cfg.covariate_count();
    int km1 = cfg.K - 1;
    std::vector<double> x(static_cast<size_t>(m));
    covariate_row(cfg, t, x.data());
    std::vector<double> flat = theta.flatten();
    std::vector<double> eta(static_cast<size_t>(km1), 0.0);
    for (int c = 0; c < m; ++c)
        for (int k = 0; k < km1; ++k)
            eta[static_cast<size_t>(k)] += x[static_cast<size_t>(c)] *
                                           flat[static_cast<size_t>(c * km1 + k)];
    return eta;
}

/// gamma_k = expit(eta_k), elementwise.
inline std::vector<double> cumulative_probs(const std::vector<double>& eta) {
    std::vector<double> g(eta.size());
    for (size_t k = 0; k < eta.size(); ++k) g[k] = expit(eta[k]);
    return g;
}

/// pi_1 = gamma_1, pi_k = gamma_k - gamma_{k-1}, pi_K = 1 - gamma_{K-1}.
/// Throws infeasible_error when gamma is not strictly increasing in (0,1);
/// ties are treated as infeasible.
inline std::vector<double> categorical_probs(const std::vector<double>& gamma) {
    size_t km1 = gamma.size();
    std::vector<double> pi(km1 + 1);
    double prev = 0.0;
    for (size_t k = 0; k < km1; ++k) {
        if (!(gamma[k] > prev && gamma[k] < 1.0))
            throw infeasible_error("categorical_probs: cumulative probabilities "
                                   "not strictly increasing in (0,1)");
        pi[k] = gamma[k] - prev;
        prev = gamma[k];
    }
    pi[km1] = 1.0 - prev;
    return pi;
}

/// Marginal quantities for all time points, stored flat:
///   gamma, gprime: n x (K-1);  pi: n x K.
/// gprime_{t,k} = gamma(1-gamma) is the logistic derivative factor used by
/// every gradient formula.
struct MarginalField {
    int n = 0, K = 0;
    std::vector<double> gamma;
    std::vector<double> gprime;
    std::vector<double> pi;

    void resize(int n_, int K_) {
        n = n_;
        K = K_;
        gamma.resize(static_cast<size_t>(n) * (K - 1));
        gprime.resize(static_cast<size_t>(n) * (K - 1));
        pi.resize(static_cast<size_t>(n) * K);
    }
    const double* gamma_at(int t) const { return &gamma[static_cast<size_t>(t - 1) * (K - 1)]; }
    const double* gprime_at(int t) const { return &gprime[static_cast<size_t>(t - 1) * (K - 1)]; }
    const double* pi_at(int t) const { return &pi[static_cast<size_t>(t - 1) * K]; }
};

/// Fills the marginal field from the flattened theta (covariate-major,
/// length m*(K-1)). Returns false on the first infeasible time point.
/// min_prob guards the later log evaluations: categories squeezed below it
/// count as infeasible rather than being clamped.
inline bool fill_marginals(const ModelConfig& cfg, const std::vector<double>& theta_flat,
                           const std::vector<double>& X, MarginalField& f,
                           double min_prob = 1e-12) {
    const int m = cfg.covariate_count();
    const int km1 = cfg.K - 1;
    f.resize(cfg.n, cfg.K);
    for (int t = 1; t <= cfg.n; ++t) {
        const double* x = &X[static_cast<size_t>(t - 1) * m];
        double* g = &f.gamma[static_cast<size_t>(t - 1) * km1];
        double* gp = &f.gprime[static_cast<size_t>(t - 1) * km1];
        double* pi = &f.pi[static_cast<size_t>(t - 1) * cfg.K];
        double prev = 0.0;
        for (int k = 0; k < km1; ++k) {
            double eta = 0.0;
            for (int c = 0; c < m; ++c) eta += x[c] * theta_flat[static_cast<size_t>(c) * km1 + k];
            double gk = expit(eta);
            if (!(gk > prev && gk < 1.0)) return false;
            g[k] = gk;
            gp[k] = gk * (1.0 - gk);
            pi[k] = gk - prev;
            if (pi[k] < min_prob) return false;
            prev = gk;
        }
        pi[km1] = 1.0 - prev;
        if (pi[km1] < min_prob) return false;
    }
    return true;
}

}  // namespace mtm

#endif  // MTM_MEAN_MODEL_HPP
