#ifndef MTM_TYPES_HPP
#define MTM_TYPES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtm {

/// Parameter point produces invalid probabilities (non-monotone cumulative
/// probabilities, or an inner solve that does not converge). Estimation
/// treats this as a rejected step, not a hard failure.
class infeasible_error : public std::runtime_error {
public:
    explicit infeasible_error(const std::string& what) : std::runtime_error(what) {}
};

/// An iterative procedure exhausted its iteration budget.
class convergence_error : public std::runtime_error {
public:
    explicit convergence_error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid input data (bad categories, degenerate series, malformed files).
class data_error : public std::runtime_error {
public:
    explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

/// Structure of the marginal mean model: number of categories, series
/// length, seasonal period, Fourier pairs, optional scaled trend and
/// optional changepoint. The changepoint convention is that tau is the
/// last pre-change index: the shift applies for t > tau.
struct ModelConfig {
    int K = 5;
    int n = 0;
    int T = 365;
    int harmonics = 1;
    bool trend = false;
    std::optional<int> changepoint;
    double trunc_lo = 0.05;
    double trunc_hi = 0.95;

    /// Covariates per cumulative category: intercept, cos/sin pairs,
    /// scaled trend, post-change indicator.
    int covariate_count() const {
        return 1 + 2 * harmonics + (trend ? 1 : 0) + (changepoint ? 1 : 0);
    }
    int theta_dim() const { return covariate_count() * (K - 1); }
    int xi_dim() const { return (K - 1) * (K - 1); }

    void validate() const {
        if (K < 2) throw data_error("ModelConfig: K must be >= 2");
        if (n < 1) throw data_error("ModelConfig: n must be >= 1");
        if (T < 1) throw data_error("ModelConfig: T must be >= 1");
        if (harmonics < 0) throw data_error("ModelConfig: harmonics must be >= 0");
        if (!(trunc_lo > 0.0 && trunc_lo < trunc_hi && trunc_hi < 1.0))
            throw data_error("ModelConfig: need 0 < trunc_lo < trunc_hi < 1");
        if (changepoint && (*changepoint < 1 || *changepoint > n - 1))
            throw data_error("ModelConfig: changepoint must lie in {1..n-1}");
    }

    ModelConfig with_changepoint(int tau) const {
        ModelConfig c = *this;
        c.changepoint = tau;
        return c;
    }
    ModelConfig without_changepoint() const {
        ModelConfig c = *this;
        c.changepoint.reset();
        return c;
    }

    /// Admissible changepoint range [first, last] under the truncation
    /// fractions, clipped to {1..n-1}.
    std::pair<int, int> admissible_range() const {
        int lo = static_cast<int>(std::max(1.0, std::ceil(trunc_lo * n)));
        int hi = static_cast<int>(std::min<double>(n - 1, std::floor(trunc_hi * n)));
        return {lo, hi};
    }
};

/// Observed categorical series, values in 1..K, 1-based time index.
struct OrdinalSeries {
    std::vector<int> values;
    int K = 0;
    int T = 1;

    int n() const { return static_cast<int>(values.size()); }
    int operator[](int t) const { return values[static_cast<size_t>(t - 1)]; }

    void validate() const {
        if (values.empty()) throw data_error("OrdinalSeries: empty series");
        for (size_t i = 0; i < values.size(); ++i)
            if (values[i] < 1 || values[i] > K)
                throw data_error("OrdinalSeries: value out of 1..K at row " +
                                 std::to_string(i + 1));
    }

    std::vector<int> category_counts() const {
        std::vector<int> c(static_cast<size_t>(K), 0);
        for (int v : values) ++c[static_cast<size_t>(v - 1)];
        return c;
    }
};

/// Marginal mean model coefficients per cumulative category k = 1..K-1.
/// B and D hold one vector of length K-1 per Fourier pair.
struct ThetaParams {
    std::vector<double> alpha;
    std::vector<std::vector<double>> B;
    std::vector<std::vector<double>> D;
    std::vector<double> beta;   // empty when no trend
    std::vector<double> delta;  // empty when no changepoint

    static ThetaParams zeros(const ModelConfig& cfg) {
        ThetaParams th;
        size_t km1 = static_cast<size_t>(cfg.K - 1);
        th.alpha.assign(km1, 0.0);
        th.B.assign(static_cast<size_t>(cfg.harmonics), std::vector<double>(km1, 0.0));
        th.D.assign(static_cast<size_t>(cfg.harmonics), std::vector<double>(km1, 0.0));
        if (cfg.trend) th.beta.assign(km1, 0.0);
        if (cfg.changepoint) th.delta.assign(km1, 0.0);
        return th;
    }

    /// Flatten in covariate-major order: alpha, B_1, D_1, ..., beta, delta.
    std::vector<double> flatten() const {
        std::vector<double> out;
        out.insert(out.end(), alpha.begin(), alpha.end());
        for (size_t h = 0; h < B.size(); ++h) {
            out.insert(out.end(), B[h].begin(), B[h].end());
            out.insert(out.end(), D[h].begin(), D[h].end());
        }
        out.insert(out.end(), beta.begin(), beta.end());
        out.insert(out.end(), delta.begin(), delta.end());
        return out;
    }

    static ThetaParams unflatten(const ModelConfig& cfg, const std::vector<double>& v) {
        if (static_cast<int>(v.size()) != cfg.theta_dim())
            throw data_error("ThetaParams: flat vector has wrong dimension");
        ThetaParams th = zeros(cfg);
        size_t km1 = static_cast<size_t>(cfg.K - 1);
        size_t p = 0;
        for (size_t k = 0; k < km1; ++k) th.alpha[k] = v[p++];
        for (int h = 0; h < cfg.harmonics; ++h) {
            for (size_t k = 0; k < km1; ++k) th.B[static_cast<size_t>(h)][k] = v[p++];
            for (size_t k = 0; k < km1; ++k) th.D[static_cast<size_t>(h)][k] = v[p++];
        }
        if (cfg.trend)
            for (size_t k = 0; k < km1; ++k) th.beta[k] = v[p++];
        if (cfg.changepoint)
            for (size_t k = 0; k < km1; ++k) th.delta[k] = v[p++];
        return th;
    }

    void check_dims(const ModelConfig& cfg) const {
        size_t km1 = static_cast<size_t>(cfg.K - 1);
        bool ok = alpha.size() == km1 &&
                  B.size() == static_cast<size_t>(cfg.harmonics) &&
                  D.size() == static_cast<size_t>(cfg.harmonics) &&
                  beta.size() == (cfg.trend ? km1 : 0) &&
                  delta.size() == (cfg.changepoint ? km1 : 0);
        for (const auto& b : B) ok = ok && b.size() == km1;
        for (const auto& d : D) ok = ok && d.size() == km1;
        if (!ok) throw data_error("ThetaParams: dimension mismatch with config");
    }
};

/// Markov dependence coefficients xi_{kj}: k is the target category logit,
/// j indicates the previous category. Row-major (K-1)x(K-1).
struct XiParams {
    int K = 0;
    std::vector<double> xi;  // (K-1)^2

    static XiParams zeros(int K) {
        XiParams x;
        x.K = K;
        x.xi.assign(static_cast<size_t>((K - 1) * (K - 1)), 0.0);
        return x;
    }
    double operator()(int k, int j) const {
        return xi[static_cast<size_t>((k - 1) * (K - 1) + (j - 1))];
    }
    double& operator()(int k, int j) {
        return xi[static_cast<size_t>((k - 1) * (K - 1) + (j - 1))];
    }
    void check_dims(int expected_K) const {
        if (K != expected_K ||
            xi.size() != static_cast<size_t>((K - 1) * (K - 1)))
            throw data_error("XiParams: dimension mismatch with config");
    }
};

}  // namespace mtm

#endif  // MTM_TYPES_HPP
