#ifndef MTM_CHANGEPOINT_HPP
#define MTM_CHANGEPOINT_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mtm/estimation.hpp"
#include "mtm/parallel.hpp"

namespace mtm {

// ---------------------------------------------------------------------------
// Critical values
// ---------------------------------------------------------------------------

struct CriticalValue {
    double value = 0.0;
    std::string provenance;
};

enum class CriticalSource { automatic_, table_, asymptotic_ };

namespace detail {

/// Simulated 90/95/99 percentiles of the maximally selected statistic under
/// the null, for the K = 5, single-harmonic seasonal mean model (without and
/// with a linear trend), at series lengths n = N*T for N in {3,5,10,20,30}.
struct PercentileTable {
    static constexpr int kRatios[5] = {3, 5, 10, 20, 30};
    // [level: 90,95,99][N index]
    static constexpr double kSeasonal[3][5] = {
        {15.743, 15.903, 15.838, 15.825, 15.840},
        {17.918, 17.911, 17.808, 17.764, 17.757},
        {22.273, 22.065, 22.078, 22.003, 22.086}};
    static constexpr double kSeasonalTrend[3][5] = {
        {17.903, 17.767, 17.792, 17.755, 17.666},
        {19.836, 19.599, 19.798, 19.794, 19.453},
        {24.283, 23.821, 24.316, 23.504, 23.870}};
};

inline int level_index(double level) {
    if (std::fabs(level - 0.90) < 1e-9) return 0;
    if (std::fabs(level - 0.95) < 1e-9) return 1;
    if (std::fabs(level - 0.99) < 1e-9) return 2;
    return -1;
}

}  // namespace detail

/// Critical value for the maximally selected likelihood-ratio statistic.
/// automatic_: prefer the embedded simulated table (nearest n/T cell) when
/// the config matches its simulation design (K = 5, one harmonic), else the
/// asymptotic values for trend-free models. Trended models without table
/// coverage are an error because the trend-free asymptotic values are
/// anti-conservative for them.
inline CriticalValue critical_value(const ModelConfig& cfg, double level,
                                    CriticalSource source = CriticalSource::automatic_) {
    const int li = detail::level_index(level);
    if (li < 0)
        throw data_error("critical_value: no table or asymptotic value for level " +
                         std::to_string(level) + "; supported levels are 0.90/0.95/0.99");

    // the simulated percentiles are invariant to the parameter vector given
    // K and the truncation fractions, so the table is keyed on K and trend
    const bool table_applies = (cfg.K == 5 && std::fabs(cfg.trunc_lo - 0.05) < 1e-12 &&
                                std::fabs(cfg.trunc_hi - 0.95) < 1e-12);
    const bool want_table = source == CriticalSource::table_ ||
                            (source == CriticalSource::automatic_ && table_applies);
    if (want_table) {
        if (!table_applies)
            throw data_error("critical_value: simulated table covers K = 5, one-harmonic "
                             "models only; simulate a table for this configuration");
        double ratio = static_cast<double>(cfg.n) / cfg.T;
        int best = 0;
        for (int i = 1; i < 5; ++i)
            if (std::fabs(ratio - detail::PercentileTable::kRatios[i]) <
                std::fabs(ratio - detail::PercentileTable::kRatios[best]))
                best = i;
        CriticalValue cv;
        cv.value = cfg.trend ? detail::PercentileTable::kSeasonalTrend[li][best]
                             : detail::PercentileTable::kSeasonal[li][best];
        cv.provenance = "simulated-table " + std::string(cfg.trend ? "trend" : "seasonal") +
                        " N=" + std::to_string(detail::PercentileTable::kRatios[best]) +
                        " level=" + std::to_string(li == 0 ? 90 : li == 1 ? 95 : 99) + "%";
        return cv;
    }
    if (cfg.trend)
        throw data_error("critical_value: no simulated table for this trended model and "
                         "the trend-free asymptotic percentiles would be deflated; "
                         "simulate a table instead");
    static const double kAsym[3] = {16.005, 17.892, 22.026};
    if (cfg.K != 5)
        throw data_error("critical_value: asymptotic percentiles are tabulated for "
                         "K = 5 only; simulate a table for K = " + std::to_string(cfg.K));
    CriticalValue cv;
    cv.value = kAsym[li];
    cv.provenance = "asymptotic sup-Brownian-bridge level=" +
                    std::to_string(li == 0 ? 90 : li == 1 ? 95 : 99) + "%";
    return cv;
}

// ---------------------------------------------------------------------------
// Likelihood-ratio profile
// ---------------------------------------------------------------------------

struct ChangepointReport {
    std::vector<int> taus;           // admissible, ascending
    std::vector<double> lambda;      // aligned with taus; NaN where excluded
    std::vector<int> failed_taus;    // taus whose alternative fit failed
    double lambda_max = 0.0;
    int tau_hat = 0;
    CriticalValue critical;
    bool reject = false;
    FitResult null_fit;
    FitResult alt_fit;  // refit at tau_hat, with inference
};

namespace detail {

/// Null parameters extended with a zero shift block: valid starting point
/// for any alternative config (the shift coefficients flatten last).
inline std::vector<double> extend_with_shift(const ModelConfig& null_cfg,
                                             const ThetaParams& null_theta) {
    std::vector<double> flat = null_theta.flatten();
    flat.resize(flat.size() + static_cast<size_t>(null_cfg.K - 1), 0.0);
    return flat;
}

}  // namespace detail

/// Lambda(tau) = -2 (loglik_null - loglik_alt(tau)), the alternative fit
/// warm-started from the null fit with a zero shift.
inline double lambda_at(const OrdinalSeries& series, const ModelConfig& config, int tau,
                        const FitResult& null_fit, const FitSettings& settings = {}) {
    ModelConfig null_cfg = config.without_changepoint();
    auto [lo, hi] = null_cfg.admissible_range();
    if (tau < lo || tau > hi)
        throw data_error("lambda_at: tau outside the admissible range");
    ModelConfig alt_cfg = null_cfg.with_changepoint(tau);
    ThetaParams th0 = ThetaParams::unflatten(
        alt_cfg, detail::extend_with_shift(null_cfg, null_fit.theta));
    FitResult alt = fit_from(series, alt_cfg, th0, null_fit.xi, settings, false);
    return -2.0 * (null_fit.loglik - alt.loglik);
}

/// Exhaustive scan of the admissible set. The scan is split into fixed-size
/// chunks; inside a chunk each alternative fit warm-starts from the previous
/// tau's estimates, and every chunk restarts from the null fit, so the
/// profile is bitwise independent of the worker count. A tau whose warm-
/// started fit dips below the null loglik is refit cold from the null
/// parameters (the alternative nests the null, so Lambda >= 0 must hold).
inline ChangepointReport lambda_max_exhaustive(const OrdinalSeries& series,
                                               const ModelConfig& config,
                                               double level = 0.95,
                                               const FitSettings& settings = {},
                                               int workers = 0,
                                               CriticalSource source = CriticalSource::automatic_,
                                               const CriticalValue* custom_critical = nullptr) {
    ModelConfig null_cfg = config.without_changepoint();
    null_cfg.validate();
    auto [lo, hi] = null_cfg.admissible_range();
    if (lo > hi) throw data_error("lambda_max_exhaustive: empty admissible set");

    ChangepointReport rep;
    rep.null_fit = fit(series, null_cfg, settings, false);
    rep.critical = custom_critical ? *custom_critical : critical_value(null_cfg, level, source);

    const int count = hi - lo + 1;
    rep.taus.resize(static_cast<size_t>(count));
    rep.lambda.assign(static_cast<size_t>(count), std::nan(""));
    for (int i = 0; i < count; ++i) rep.taus[static_cast<size_t>(i)] = lo + i;

    const std::vector<double> null_ext =
        detail::extend_with_shift(null_cfg, rep.null_fit.theta);
    const double ll0 = rep.null_fit.loglik;

    constexpr int kChunk = 32;
    const int chunks = (count + kChunk - 1) / kChunk;
    parallel_for(chunks, workers, [&](int c) {
        std::vector<double> th = null_ext;
        XiParams xi = rep.null_fit.xi;
        Workspace ws;
        const int begin = c * kChunk;
        const int end = std::min(count, begin + kChunk);
        for (int i = begin; i < end; ++i) {
            const int tau = lo + i;
            ModelConfig alt_cfg = null_cfg.with_changepoint(tau);
            bool warm_failed = false;
            FitResult alt;
            try {
                ThetaParams t0 = ThetaParams::unflatten(alt_cfg, th);
                alt = fit_from(series, alt_cfg, t0, xi, settings, false, &ws);
            } catch (const std::runtime_error&) {
                warm_failed = true;
            }
            // a warm start can walk into an infeasible corner or dip below
            // the null loglik (the alternative nests the null, so
            // Lambda >= 0 must hold): retry cold from the null parameters
            if (warm_failed || -2.0 * (ll0 - alt.loglik) < 0.0) {
                try {
                    ws = Workspace{};  // drop the stale delta field too
                    ThetaParams tn = ThetaParams::unflatten(alt_cfg, null_ext);
                    FitResult retry =
                        fit_from(series, alt_cfg, tn, rep.null_fit.xi, settings, false, &ws);
                    if (warm_failed || retry.loglik > alt.loglik) alt = std::move(retry);
                    warm_failed = false;
                } catch (const std::runtime_error&) {
                    // keep the warm result if it exists, else exclude this tau
                    ws = Workspace{};
                }
            }
            if (warm_failed) {
                // excluded from the max; restart the warm chain from the null
                th = null_ext;
                xi = rep.null_fit.xi;
                continue;
            }
            rep.lambda[static_cast<size_t>(i)] = -2.0 * (ll0 - alt.loglik);
            th = alt.theta.flatten();
            xi = alt.xi;
        }
    });

    rep.lambda_max = -std::numeric_limits<double>::infinity();
    rep.tau_hat = -1;
    for (int i = 0; i < count; ++i) {
        double lam = rep.lambda[static_cast<size_t>(i)];
        if (std::isnan(lam)) {
            rep.failed_taus.push_back(lo + i);
            continue;
        }
        if (lam > rep.lambda_max) {
            rep.lambda_max = lam;
            rep.tau_hat = lo + i;
        }
    }
    if (rep.tau_hat < 0)
        throw convergence_error("lambda_max_exhaustive: every alternative fit failed");

    rep.reject = rep.lambda_max > rep.critical.value;
    {
        ModelConfig alt_cfg = null_cfg.with_changepoint(rep.tau_hat);
        ThetaParams t0 = ThetaParams::unflatten(alt_cfg, null_ext);
        rep.alt_fit = fit_from(series, alt_cfg, t0, rep.null_fit.xi, settings, true);
    }
    return rep;
}

}  // namespace mtm

#endif  // MTM_CHANGEPOINT_HPP
