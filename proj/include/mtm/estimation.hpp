#ifndef MTM_ESTIMATION_HPP
#define MTM_ESTIMATION_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtm/likelihood.hpp"

namespace mtm {

struct FitSettings {
    double epsilon = 1e-5;        // joint convergence tolerance
    double inner_epsilon = 1e-5;  // per-block parameter-change tolerance
    int max_outer = 20;
    int max_inner = 50;
    int step_halvings = 30;
    DeltaSolveSettings delta;

    void validate() const {
        if (!(epsilon > 0.0 && inner_epsilon > 0.0))
            throw data_error("FitSettings: tolerances must be > 0");
        if (max_outer < 1 || max_inner < 1 || step_halvings < 0)
            throw data_error("FitSettings: iteration limits must be positive");
    }
};

struct FitResult {
    ThetaParams theta;
    XiParams xi;
    double loglik = 0.0;
    bool converged = false;
    int outer_iters = 0;
    std::optional<WaldInference> inference;
};

namespace detail {

/// Ascent direction d = (I + lambda Id)^{-1} g with the ridge grown until the
/// direction points uphill; falls back to a scaled gradient step.
inline Eigen::VectorXd qn_direction(const std::vector<double>& info,
                                    const std::vector<double>& grad) {
    const int d = static_cast<int>(grad.size());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        I(info.data(), d, d);
    Eigen::Map<const Eigen::VectorXd> g(grad.data(), d);
    const double scale = std::max(1.0, I.trace() / d);
    double lam = 0.0;
    for (int attempt = 0; attempt < 18; ++attempt) {
        Eigen::MatrixXd M = I;
        if (lam > 0.0) M.diagonal().array() += lam;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
        if (ldlt.info() == Eigen::Success) {
            Eigen::VectorXd dir = ldlt.solve(g);
            if (dir.allFinite() && g.dot(dir) > 0.0) return dir;
        }
        lam = (lam == 0.0) ? 1e-10 * scale : lam * 10.0;
    }
    return g / scale;
}

/// One quasi-Newton block pass: iterates damped OPG steps on `x` until the
/// step shrinks below inner_epsilon or the budget runs out. `eval(x, er)`
/// must fill loglik, grad and info for the block and return feasibility.
/// Returns the Euclidean parameter change of the whole pass.
template <class Eval>
double qn_block(Eval&& eval, std::vector<double>& x, double& ll_out,
                const FitSettings& s, const char* label) {
    const int d = static_cast<int>(x.size());
    EvalResult er;
    if (!eval(x, er))
        throw infeasible_error(std::string(label) + ": infeasible starting point");
    double ll = er.loglik;
    std::vector<double> x0 = x;
    std::vector<double> cand(static_cast<size_t>(d));
    EvalResult er2;
    for (int it = 0; it < s.max_inner; ++it) {
        double gnorm = 0.0;
        for (double g : er.grad) gnorm = std::max(gnorm, std::fabs(g));
        if (gnorm <= 1e-10) break;
        Eigen::VectorXd dir = qn_direction(er.info, er.grad);
        // stop once the step's predicted loglik gain g'd/2 is below numerical
        // noise: further line searches would only burn evaluations failing to
        // distinguish candidates from the current point
        double gd = 0.0;
        for (int i = 0; i < d; ++i) gd += er.grad[static_cast<size_t>(i)] * dir(i);
        if (gd <= 2e-9 * std::max(1.0, std::fabs(ll))) break;
        double step = 1.0;
        bool accepted = false;
        for (int h = 0; h <= s.step_halvings; ++h) {
            if (step * dir.norm() < 1e-12) break;
            for (int i = 0; i < d; ++i)
                cand[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] + step * dir(i);
            if (eval(cand, er2) && er2.loglik >= ll) {
                x = cand;
                ll = er2.loglik;
                std::swap(er, er2);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        if (step * dir.norm() <= s.inner_epsilon) break;
    }
    ll_out = ll;
    double change = 0.0;
    for (int i = 0; i < d; ++i) {
        double dx = x[static_cast<size_t>(i)] - x0[static_cast<size_t>(i)];
        change += dx * dx;
    }
    return std::sqrt(change);
}

}  // namespace detail

/// Initial theta from the independence model: alpha seeded at the empirical
/// cumulative logits (0.5-smoothed), remaining coefficients at zero, then
/// refined by quasi-Newton on sum_t log pi_{t,y_t}.
inline ThetaParams init_theta(const OrdinalSeries& series, const ModelConfig& cfg,
                              const FitSettings& settings = {}) {
    cfg.validate();
    series.validate();
    settings.validate();
    const int K = cfg.K, n = cfg.n;
    if (series.n() != n) throw data_error("init_theta: series length does not match config");

    std::vector<int> counts = series.category_counts();
    ThetaParams th = ThetaParams::zeros(cfg);
    double cum = 0.0;
    const double denom = n + 0.5 * K;
    for (int k = 0; k < K - 1; ++k) {
        cum += counts[static_cast<size_t>(k)] + 0.5;
        th.alpha[static_cast<size_t>(k)] = logit(cum / denom);
    }

    Workspace ws;
    std::vector<double> x = th.flatten();
    auto eval = [&](const std::vector<double>& v, EvalResult& er) {
        return evaluate_independence(series, cfg, v, ws, true, true, er);
    };
    FitSettings s = settings;
    s.max_inner = std::max(settings.max_inner, 200);
    double ll = 0.0;
    detail::qn_block(eval, x, ll, s, "init_theta");

    EvalResult er;
    if (!evaluate_independence(series, cfg, x, ws, true, false, er))
        throw convergence_error("init_theta: independence fit left feasible region");
    double gnorm = 0.0;
    for (double g : er.grad) gnorm = std::max(gnorm, std::fabs(g));
    if (gnorm > 1e-3 * n)
        throw convergence_error("init_theta: independence fit did not converge");
    return ThetaParams::unflatten(cfg, x);
}

/// Initial xi from smoothed empirical transition frequencies:
/// xi0_{kj} = log(phat_{jk} / phat_{jK}) - deltabar_k, with deltabar_k the
/// log-ratio of time-averaged fitted category probabilities under theta0.
inline XiParams init_xi(const OrdinalSeries& series, const ModelConfig& cfg,
                        const ThetaParams& theta0) {
    cfg.validate();
    series.validate();
    theta0.check_dims(cfg);
    const int K = cfg.K, n = cfg.n;
    if (series.n() != n) throw data_error("init_xi: series length does not match config");

    // transition counts with Haldane-Anscombe 0.5 smoothing
    std::vector<double> counts(static_cast<size_t>(K) * K, 0.5);
    for (int t = 2; t <= n; ++t)
        counts[static_cast<size_t>(series[t - 1] - 1) * K + (series[t] - 1)] += 1.0;

    Workspace ws;
    ws.prepare(cfg);
    MarginalField f;
    if (!fill_marginals(cfg, theta0.flatten(), ws.X, f))
        throw infeasible_error("init_xi: theta0 is infeasible");
    std::vector<double> pibar(static_cast<size_t>(K), 0.0);
    for (int t = 1; t <= n; ++t) {
        const double* pi = f.pi_at(t);
        for (int k = 0; k < K; ++k) pibar[static_cast<size_t>(k)] += pi[k];
    }
    for (int k = 0; k < K; ++k) pibar[static_cast<size_t>(k)] /= n;

    XiParams xi = XiParams::zeros(K);
    for (int j = 1; j <= K - 1; ++j) {
        double rowsum = 0.0;
        for (int k = 0; k < K; ++k) rowsum += counts[static_cast<size_t>(j - 1) * K + k];
        for (int k = 1; k <= K - 1; ++k) {
            double pjk = counts[static_cast<size_t>(j - 1) * K + (k - 1)] / rowsum;
            double pjK = counts[static_cast<size_t>(j - 1) * K + (K - 1)] / rowsum;
            double dbar = std::log(pibar[static_cast<size_t>(k - 1)] /
                                   pibar[static_cast<size_t>(K - 1)]);
            xi(k, j) = std::log(pjk / pjK) - dbar;
        }
    }
    return xi;
}

/// Alternating maximization from explicit starting values: Step 1 updates
/// theta with xi fixed, Step 2 updates xi with theta fixed, each block damped
/// quasi-Newton with OPG information; joint convergence is declared when the
/// parameter change of a block pass drops to epsilon (checked after Step 1,
/// so Step 2 can be skipped).
inline FitResult fit_from(const OrdinalSeries& series, const ModelConfig& cfg,
                          const ThetaParams& theta0, const XiParams& xi0,
                          const FitSettings& settings = {}, bool with_inference = true,
                          Workspace* shared_ws = nullptr) {
    cfg.validate();
    series.validate();
    settings.validate();
    theta0.check_dims(cfg);
    xi0.check_dims(cfg.K);
    if (series.n() != cfg.n) throw data_error("fit: series length does not match config");

    Workspace local_ws;
    Workspace& ws = shared_ws ? *shared_ws : local_ws;
    std::vector<double> th = theta0.flatten();
    XiParams xi = xi0;

    auto eval_theta = [&](const std::vector<double>& v, EvalResult& er) {
        EvalOptions opt;
        opt.block = GradBlock::theta;
        opt.info = true;
        opt.delta = settings.delta;
        return evaluate(series, cfg, v, xi, ws, opt, er);
    };
    auto eval_xi = [&](const std::vector<double>& v, EvalResult& er) {
        XiParams x2 = xi;
        x2.xi = v;
        EvalOptions opt;
        opt.block = GradBlock::xi;
        opt.info = true;
        opt.delta = settings.delta;
        return evaluate(series, cfg, th, x2, ws, opt, er);
    };

    FitResult res;
    double ll = 0.0;
    for (int outer = 1; outer <= settings.max_outer; ++outer) {
        res.outer_iters = outer;
        double ch = detail::qn_block(eval_theta, th, ll, settings, "fit[theta]");
        if (ch <= settings.epsilon) {
            res.converged = true;
            break;
        }
        ch = detail::qn_block(eval_xi, xi.xi, ll, settings, "fit[xi]");
        if (ch <= settings.epsilon) {
            res.converged = true;
            break;
        }
    }

    res.theta = ThetaParams::unflatten(cfg, th);
    res.xi = xi;
    res.loglik = ll;
    if (with_inference) {
        EvalOptions opt;
        opt.block = GradBlock::full;
        opt.info = true;
        opt.delta = settings.delta;
        EvalResult er;
        if (!evaluate(series, cfg, th, xi, ws, opt, er))
            throw infeasible_error("fit: final iterate infeasible");
        res.loglik = er.loglik;
        std::vector<double> est = th;
        est.insert(est.end(), xi.xi.begin(), xi.xi.end());
        res.inference = wald(est, er.info);
    }
    return res;
}

/// Full maximum-likelihood fit: degeneracy check, data-driven initialization,
/// then the alternating procedure of fit_from.
inline FitResult fit(const OrdinalSeries& series, const ModelConfig& cfg,
                     const FitSettings& settings = {}, bool with_inference = true) {
    cfg.validate();
    series.validate();
    if (series.n() != cfg.n) throw data_error("fit: series length does not match config");
    std::vector<int> counts = series.category_counts();
    for (int k = 0; k < cfg.K; ++k)
        if (counts[static_cast<size_t>(k)] == 0)
            throw data_error("fit: degenerate series, category " + std::to_string(k + 1) +
                             " never occurs");
    ThetaParams th0 = init_theta(series, cfg, settings);
    XiParams xi0 = init_xi(series, cfg, th0);
    return fit_from(series, cfg, th0, xi0, settings, with_inference);
}

}  // namespace mtm

#endif  // MTM_ESTIMATION_HPP
