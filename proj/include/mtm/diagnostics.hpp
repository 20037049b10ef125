#ifndef MTM_DIAGNOSTICS_HPP
#define MTM_DIAGNOSTICS_HPP

#include <string>
#include <vector>

#include "mtm/estimation.hpp"

namespace mtm {

struct PitHistogram {
    int H = 50;
    std::vector<double> bins;  // heights, sum to 1
};

namespace detail {

/// Nonrandomized PIT contribution: the piecewise-linear conditional CDF
/// evaluated at u, where plo/phi are the predicted CDF values just below and
/// at the observed category.
inline double pit_cdf(double u, double plo, double phi) {
    if (u <= plo) return 0.0;
    if (u >= phi) return 1.0;
    return (u - plo) / (phi - plo);
}

}  // namespace detail

/// Mean nonrandomized PIT histogram with H bins. The predictive CDF at time
/// t conditions on y_{t-1} through the fitted transition distribution; t = 1
/// uses the fitted marginal distribution. Under a well-specified model the
/// heights are near 1/H.
inline PitHistogram pit_histogram(const OrdinalSeries& series, const ModelConfig& cfg,
                                  const ThetaParams& theta, const XiParams& xi, int H = 50) {
    cfg.validate();
    series.validate();
    theta.check_dims(cfg);
    xi.check_dims(cfg.K);
    if (series.n() != cfg.n) throw data_error("pit_histogram: series length mismatch");
    if (H < 1) throw data_error("pit_histogram: H must be >= 1");
    const int K = cfg.K, n = cfg.n;

    std::vector<double> X = build_design(cfg);
    MarginalField f;
    if (!fill_marginals(cfg, theta.flatten(), X, f))
        throw infeasible_error("pit_histogram: infeasible fitted parameters");

    // plo/phi per t from the one-step-ahead predictive distribution
    std::vector<double> plo(static_cast<size_t>(n)), phi(static_cast<size_t>(n));
    {
        const double* pi1 = f.pi_at(1);
        double acc = 0.0;
        for (int k = 1; k <= series[1]; ++k) acc += pi1[k - 1];
        phi[0] = acc;
        plo[0] = acc - pi1[series[1] - 1];
    }
    double delta[kMaxCategories], trans[kMaxCategories * kMaxCategories];
    DeltaSolveSettings ds;
    for (int t = 2; t <= n; ++t) {
        if (t == 2)
            delta_init_from_marginals(K, f.pi_at(2), delta);
        if (solve_delta_raw(K, f.pi_at(t - 1), f.pi_at(t), xi.xi.data(), ds, delta, trans) < 0)
            throw infeasible_error("pit_histogram: delta solve failed at t = " +
                                   std::to_string(t));
        const double* row = trans + static_cast<size_t>(series[t - 1] - 1) * K;
        double acc = 0.0;
        for (int k = 1; k <= series[t]; ++k) acc += row[k - 1];
        phi[static_cast<size_t>(t - 1)] = acc;
        plo[static_cast<size_t>(t - 1)] = acc - row[series[t] - 1];
    }

    PitHistogram hist;
    hist.H = H;
    hist.bins.assign(static_cast<size_t>(H), 0.0);
    double prev_mean = 0.0;
    for (int h = 1; h <= H; ++h) {
        const double u = static_cast<double>(h) / H;
        double mean = 0.0;
        for (int t = 0; t < n; ++t)
            mean += detail::pit_cdf(u, plo[static_cast<size_t>(t)],
                                    phi[static_cast<size_t>(t)]);
        mean /= n;
        hist.bins[static_cast<size_t>(h - 1)] = mean - prev_mean;
        prev_mean = mean;
    }
    return hist;
}

inline PitHistogram pit_histogram(const OrdinalSeries& series, const ModelConfig& cfg,
                                  const FitResult& fit, int H = 50) {
    return pit_histogram(series, cfg, fit.theta, fit.xi, H);
}

struct FittedSeries {
    std::vector<double> yhat;  // expected category per t, in [1, K]
    std::vector<double> pi;    // n x K fitted marginal probabilities, row-major
    int K = 0;
};

/// Fitted values Yhat_t = sum_k k * pihat_{t,k} plus the full marginal
/// probability table.
inline FittedSeries fitted_series(const ModelConfig& cfg, const ThetaParams& theta) {
    cfg.validate();
    theta.check_dims(cfg);
    std::vector<double> X = build_design(cfg);
    MarginalField f;
    if (!fill_marginals(cfg, theta.flatten(), X, f))
        throw infeasible_error("fitted_series: infeasible fitted parameters");
    FittedSeries out;
    out.K = cfg.K;
    out.pi = f.pi;
    out.yhat.resize(static_cast<size_t>(cfg.n));
    for (int t = 1; t <= cfg.n; ++t) {
        const double* pi = f.pi_at(t);
        double mean = 0.0;
        for (int k = 0; k < cfg.K; ++k) mean += (k + 1) * pi[k];
        out.yhat[static_cast<size_t>(t - 1)] = mean;
    }
    return out;
}

inline FittedSeries fitted_series(const ModelConfig& cfg, const FitResult& fit) {
    return fitted_series(cfg, fit.theta);
}

}  // namespace mtm

#endif  // MTM_DIAGNOSTICS_HPP
