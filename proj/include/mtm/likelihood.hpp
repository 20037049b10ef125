#ifndef MTM_LIKELIHOOD_HPP
#define MTM_LIKELIHOOD_HPP

#include <cmath>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtm/dependence.hpp"
#include "mtm/mean_model.hpp"
#include "mtm/types.hpp"

namespace mtm {

enum class GradBlock { none, theta, xi, full };

/// Reusable buffers for repeated likelihood evaluations within one fit.
/// Holds the design matrix for the current config and the delta field of
/// the most recent feasible evaluation, which warm-starts the inner Newton
/// solves of subsequent evaluations.
struct Workspace {
    std::vector<double> X;
    MarginalField field;
    std::vector<double> delta;  // n x (K-1)
    bool has_delta = false;

    void prepare(const ModelConfig& cfg) {
        const bool structural = cfg.n != cached_n_ || cfg.K != cached_K_ ||
                                cfg.T != cached_T_ || cfg.harmonics != cached_h_ ||
                                cfg.trend != cached_trend_ ||
                                cfg.changepoint.has_value() != cached_cp_.has_value();
        if (structural || cfg.changepoint != cached_cp_) {
            X = build_design(cfg);
            if (structural) {
                // moving the changepoint only alters one design column; the
                // stored delta field remains a good warm start in that case
                delta.assign(static_cast<size_t>(cfg.n) * (cfg.K - 1), 0.0);
                has_delta = false;
            }
            cached_n_ = cfg.n;
            cached_K_ = cfg.K;
            cached_T_ = cfg.T;
            cached_h_ = cfg.harmonics;
            cached_trend_ = cfg.trend;
            cached_cp_ = cfg.changepoint;
        }
    }

private:
    int cached_n_ = -1, cached_K_ = -1, cached_T_ = -1, cached_h_ = -1;
    bool cached_trend_ = false;
    std::optional<int> cached_cp_;
};

struct EvalOptions {
    GradBlock block = GradBlock::none;
    bool info = false;    // accumulate the outer-product information of the block
    bool scores = false;  // keep the n x d per-observation score matrix
    DeltaSolveSettings delta;
};

struct EvalResult {
    bool feasible = false;
    double loglik = 0.0;
    std::vector<double> grad;    // block dimension d
    std::vector<double> info;    // d x d, row-major
    std::vector<double> scores;  // n x d, row-major
};

inline int block_dim(const ModelConfig& cfg, GradBlock b) {
    switch (b) {
        case GradBlock::theta: return cfg.theta_dim();
        case GradBlock::xi: return cfg.xi_dim();
        case GradBlock::full: return cfg.theta_dim() + cfg.xi_dim();
        default: return 0;
    }
}

namespace detail {

inline void accumulate_outer(const double* s, int d, double* I) {
    for (int p = 0; p < d; ++p) {
        double sp = s[p];
        if (sp == 0.0) continue;
        double* row = I + static_cast<size_t>(p) * d;
        for (int q = p; q < d; ++q) row[q] += sp * s[q];
    }
}

inline void mirror_lower(double* I, int d) {
    for (int p = 1; p < d; ++p)
        for (int q = 0; q < p; ++q)
            I[static_cast<size_t>(p) * d + q] = I[static_cast<size_t>(q) * d + p];
}

}  // namespace detail

/// Evaluates the MTM log-likelihood of Eq-style decomposition
/// log L = log L1(theta) + log L2(theta, xi), optionally with the analytic
/// score of the requested parameter block, its outer-product information,
/// and per-observation scores. Returns false at infeasible parameter
/// points (non-monotone cumulative probabilities or a failed delta solve).
inline bool evaluate(const OrdinalSeries& series, const ModelConfig& cfg,
                     const std::vector<double>& theta_flat, const XiParams& xi,
                     Workspace& ws, const EvalOptions& opt, EvalResult& out) {
    const int K = cfg.K, km1 = K - 1, m = cfg.covariate_count(), n = cfg.n;
    if (K > kMaxCategories) throw data_error("evaluate: K exceeds supported maximum");
    ws.prepare(cfg);

    const int d = block_dim(cfg, opt.block);
    const bool want_grad = opt.block != GradBlock::none;
    const bool want_theta = opt.block == GradBlock::theta || opt.block == GradBlock::full;
    const bool want_xi = opt.block == GradBlock::xi || opt.block == GradBlock::full;
    const int theta_off = 0;
    const int xi_off = want_theta ? cfg.theta_dim() : 0;

    out.feasible = false;
    out.loglik = 0.0;
    if (want_grad) {
        out.grad.assign(static_cast<size_t>(d), 0.0);
        if (opt.info) out.info.assign(static_cast<size_t>(d) * d, 0.0);
        if (opt.scores) out.scores.assign(static_cast<size_t>(n) * d, 0.0);
    }

    if (!fill_marginals(cfg, theta_flat, ws.X, ws.field)) return false;
    const MarginalField& f = ws.field;

    double ll = 0.0;
    double s[8 * kMaxCategories + kMaxCategories * kMaxCategories];
    double z[kMaxCategories], r[kMaxCategories], Q[kMaxCategories];
    double a[kMaxCategories], b[kMaxCategories];
    double trans[kMaxCategories * kMaxCategories];
    double A[kMaxCategories * kMaxCategories];
    SmallLu lu;

    // t = 1: marginal term.
    {
        const int y = series[1];
        ll += std::log(std::max(f.pi_at(1)[y - 1], 1e-300));
        if (want_grad) {
            std::memset(s, 0, sizeof(double) * static_cast<size_t>(d));
            if (want_theta) {
                const double* gp = f.gprime_at(1);
                const double invp = 1.0 / f.pi_at(1)[y - 1];
                const double* x = &ws.X[0];
                for (int k = 0; k < km1; ++k) {
                    double coef = 0.0;
                    if (k == y - 1) coef += 1.0;  // k' = y
                    if (k == y - 2) coef -= 1.0;  // k' = y - 1
                    if (coef == 0.0) continue;
                    coef *= gp[k] * invp;
                    for (int c = 0; c < m; ++c) s[theta_off + c * km1 + k] = x[c] * coef;
                }
            }
            for (int p = 0; p < d; ++p) out.grad[static_cast<size_t>(p)] += s[p];
            if (opt.info) detail::accumulate_outer(s, d, out.info.data());
            if (opt.scores) std::memcpy(&out.scores[0], s, sizeof(double) * static_cast<size_t>(d));
        }
    }

    for (int t = 2; t <= n; ++t) {
        const double* pi_prev = f.pi_at(t - 1);
        const double* pi_cur = f.pi_at(t);
        double* delta_t = &ws.delta[static_cast<size_t>(t - 1) * km1];
        if (!ws.has_delta || !opt.delta.warm_start) {
            if (t == 2)
                delta_init_from_marginals(K, pi_cur, delta_t);
            else
                std::memcpy(delta_t, &ws.delta[static_cast<size_t>(t - 2) * km1],
                            sizeof(double) * static_cast<size_t>(km1));
        }
        if (solve_delta_raw(K, pi_prev, pi_cur, xi.xi.data(), opt.delta, delta_t, trans) < 0)
            return false;

        const int j = series[t - 1];
        const int yt = series[t];
        ll += std::log(std::max(trans[static_cast<size_t>(j - 1) * K + (yt - 1)], 1e-300));

        if (want_grad) {
            delta_jacobian(K, trans, pi_prev, A);
            if (!lu.factor(A, km1)) return false;
            const double* pj = trans + static_cast<size_t>(j - 1) * K;
            for (int k = 0; k < km1; ++k) r[k] = (k == yt - 1 ? 1.0 : 0.0) - pj[k];
            lu.solve_transpose(r, z);

            for (int jj = 0; jj < K; ++jj) {
                const double* p = trans + static_cast<size_t>(jj) * K;
                double q = 0.0;
                for (int k = 0; k < km1; ++k) q += z[k] * p[k];
                Q[jj] = q;
            }
            const double* gp_cur = f.gprime_at(t);
            const double* gp_prev = f.gprime_at(t - 1);
            for (int k = 0; k < km1; ++k) {
                double zn = (k + 1 < km1) ? z[k + 1] : 0.0;
                a[k] = gp_cur[k] * (z[k] - zn);
                b[k] = gp_prev[k] * (Q[k] - Q[k + 1]);
            }

            std::memset(s, 0, sizeof(double) * static_cast<size_t>(d));
            if (want_theta) {
                const double* xc = &ws.X[static_cast<size_t>(t - 1) * m];
                const double* xp = &ws.X[static_cast<size_t>(t - 2) * m];
                for (int c = 0; c < m; ++c) {
                    double* sp = s + theta_off + c * km1;
                    for (int k = 0; k < km1; ++k) sp[k] = xc[c] * a[k] - xp[c] * b[k];
                }
            }
            if (want_xi) {
                for (int bb = 1; bb <= km1; ++bb) {
                    const double* pb = trans + static_cast<size_t>(bb - 1) * K;
                    const double w = -pi_prev[bb - 1];
                    const double qb = Q[bb - 1];
                    const bool direct = (bb == j);
                    for (int aa = 1; aa <= km1; ++aa) {
                        double v = w * pb[aa - 1] * (z[aa - 1] - qb);
                        if (direct) v += r[aa - 1];
                        s[xi_off + (aa - 1) * km1 + (bb - 1)] = v;
                    }
                }
            }
            for (int p = 0; p < d; ++p) out.grad[static_cast<size_t>(p)] += s[p];
            if (opt.info) detail::accumulate_outer(s, d, out.info.data());
            if (opt.scores)
                std::memcpy(&out.scores[static_cast<size_t>(t - 1) * d], s,
                            sizeof(double) * static_cast<size_t>(d));
        }
    }

    ws.has_delta = true;
    if (want_grad && opt.info) detail::mirror_lower(out.info.data(), d);
    out.loglik = ll;
    out.feasible = true;
    return true;
}

/// Independence (xi = 0) log-likelihood sum_t log pi_{t,y_t} with optional
/// theta score and information; used to fit the marginal mean model alone.
inline bool evaluate_independence(const OrdinalSeries& series, const ModelConfig& cfg,
                                  const std::vector<double>& theta_flat, Workspace& ws,
                                  bool want_grad, bool want_info, EvalResult& out) {
    const int km1 = cfg.K - 1, m = cfg.covariate_count(), n = cfg.n;
    ws.prepare(cfg);
    const int d = cfg.theta_dim();
    out.feasible = false;
    out.loglik = 0.0;
    if (want_grad) {
        out.grad.assign(static_cast<size_t>(d), 0.0);
        if (want_info) out.info.assign(static_cast<size_t>(d) * d, 0.0);
    }
    if (!fill_marginals(cfg, theta_flat, ws.X, ws.field)) return false;
    double s[8 * kMaxCategories];
    double ll = 0.0;
    for (int t = 1; t <= n; ++t) {
        const int y = series[t];
        const double pi_y = ws.field.pi_at(t)[y - 1];
        ll += std::log(std::max(pi_y, 1e-300));
        if (!want_grad) continue;
        std::memset(s, 0, sizeof(double) * static_cast<size_t>(d));
        const double* gp = ws.field.gprime_at(t);
        const double* x = &ws.X[static_cast<size_t>(t - 1) * m];
        const double invp = 1.0 / pi_y;
        for (int k = 0; k < km1; ++k) {
            double coef = 0.0;
            if (k == y - 1) coef += 1.0;
            if (k == y - 2) coef -= 1.0;
            if (coef == 0.0) continue;
            coef *= gp[k] * invp;
            for (int c = 0; c < m; ++c) s[c * km1 + k] = x[c] * coef;
        }
        for (int p = 0; p < d; ++p) out.grad[static_cast<size_t>(p)] += s[p];
        if (want_info) detail::accumulate_outer(s, d, out.info.data());
    }
    if (want_grad && want_info) detail::mirror_lower(out.info.data(), d);
    out.loglik = ll;
    out.feasible = true;
    return true;
}

// ---------------------------------------------------------------------------
// Public result types
// ---------------------------------------------------------------------------

struct LikelihoodResult {
    double loglik = 0.0;
    std::vector<double> grad_theta;
    std::vector<double> grad_xi;
    std::vector<double> per_t_scores;  // n x (theta_dim + xi_dim) when requested
};

inline LikelihoodResult loglik(const OrdinalSeries& series, const ModelConfig& cfg,
                               const ThetaParams& theta, const XiParams& xi) {
    theta.check_dims(cfg);
    xi.check_dims(cfg.K);
    Workspace ws;
    EvalResult er;
    if (!evaluate(series, cfg, theta.flatten(), xi, ws, EvalOptions{}, er))
        throw infeasible_error("loglik: infeasible parameter point");
    LikelihoodResult res;
    res.loglik = er.loglik;
    return res;
}

inline LikelihoodResult grad(const OrdinalSeries& series, const ModelConfig& cfg,
                             const ThetaParams& theta, const XiParams& xi,
                             bool with_scores = false) {
    theta.check_dims(cfg);
    xi.check_dims(cfg.K);
    Workspace ws;
    EvalOptions opt;
    opt.block = GradBlock::full;
    opt.scores = with_scores;
    EvalResult er;
    if (!evaluate(series, cfg, theta.flatten(), xi, ws, opt, er))
        throw infeasible_error("grad: infeasible parameter point");
    LikelihoodResult res;
    res.loglik = er.loglik;
    const int P = cfg.theta_dim();
    res.grad_theta.assign(er.grad.begin(), er.grad.begin() + P);
    res.grad_xi.assign(er.grad.begin() + P, er.grad.end());
    if (with_scores) res.per_t_scores = std::move(er.scores);
    return res;
}

/// Outer-product-of-gradients estimate of the information matrix at the
/// supplied parameter point, dimension (theta_dim + xi_dim)^2.
inline std::vector<double> hessian_opg(const OrdinalSeries& series, const ModelConfig& cfg,
                                       const ThetaParams& theta, const XiParams& xi) {
    theta.check_dims(cfg);
    xi.check_dims(cfg.K);
    Workspace ws;
    EvalOptions opt;
    opt.block = GradBlock::full;
    opt.info = true;
    EvalResult er;
    if (!evaluate(series, cfg, theta.flatten(), xi, ws, opt, er))
        throw infeasible_error("hessian_opg: infeasible parameter point");
    return er.info;
}

struct WaldInference {
    std::vector<double> estimate;
    std::vector<double> se;
    std::vector<double> ci_lower;
    std::vector<double> ci_upper;
    std::vector<double> z;
    double level = 0.95;
};

/// Inverse standard normal CDF (Acklam's rational approximation, ~1e-9
/// absolute accuracy over (0,1)).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw data_error("normal_quantile: p must be in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;
    double q, x;
    if (p < plow) {
        q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
    } else if (p <= phigh) {
        q = p - 0.5;
        double t = q * q;
        x = (((((a[0] * t + a[1]) * t + a[2]) * t + a[3]) * t + a[4]) * t + a[5]) * q /
            (((((b[0] * t + b[1]) * t + b[2]) * t + b[3]) * t + b[4]) * t + 1.0);
    } else {
        q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
    }
    return x;
}

/// Wald standard errors and confidence intervals from the outer-product
/// information matrix: se = sqrt(diag(I^{-1})).
inline WaldInference wald(const std::vector<double>& estimates,
                          const std::vector<double>& I, double level = 0.95) {
    const int d = static_cast<int>(estimates.size());
    if (I.size() != static_cast<size_t>(d) * d)
        throw data_error("wald: information matrix dimension mismatch");
    if (!(level > 0.0 && level < 1.0)) throw data_error("wald: level must be in (0,1)");
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        Im(I.data(), d, d);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Im);
    if (!lu.isInvertible()) {
        Eigen::MatrixXd kernel = lu.kernel();
        std::string dir = "[";
        for (int i = 0; i < d; ++i)
            dir += (i ? ", " : "") + std::to_string(kernel(i, 0));
        dir += "]";
        throw data_error("wald: singular information matrix, null-space direction " + dir);
    }
    Eigen::MatrixXd cov = lu.inverse();
    const double zq = normal_quantile(0.5 + level / 2.0);
    WaldInference w;
    w.level = level;
    w.estimate = estimates;
    w.se.resize(static_cast<size_t>(d));
    w.ci_lower.resize(static_cast<size_t>(d));
    w.ci_upper.resize(static_cast<size_t>(d));
    w.z.resize(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) {
        double v = cov(i, i);
        if (!(v > 0.0))
            throw data_error("wald: nonpositive variance for parameter " + std::to_string(i));
        double se = std::sqrt(v);
        w.se[static_cast<size_t>(i)] = se;
        w.ci_lower[static_cast<size_t>(i)] = estimates[static_cast<size_t>(i)] - zq * se;
        w.ci_upper[static_cast<size_t>(i)] = estimates[static_cast<size_t>(i)] + zq * se;
        w.z[static_cast<size_t>(i)] = estimates[static_cast<size_t>(i)] / se;
    }
    return w;
}

}  // namespace mtm

#endif  // MTM_LIKELIHOOD_HPP
