#ifndef MTM_DEPENDENCE_HPP
#define MTM_DEPENDENCE_HPP

#include <cmath>
#include <cstring>
#include <vector>

#include "mtm/types.hpp"

namespace mtm {

/// Hard cap on K for the stack-allocated kernels below.
constexpr int kMaxCategories = 16;

struct DeltaSolveSettings {
    int max_iters = 60;
    double tol = 1e-10;
    bool warm_start = true;
    int step_halvings = 30;
};

/// Dense LU with partial pivoting for the (K-1)x(K-1) systems of the
/// dependence model. Keeps an explicit row permutation so both A x = b and
/// A' x = b solves are available from one factorization.
class SmallLu {
public:
    bool factor(const double* A, int m) {
        m_ = m;
        std::memcpy(a_, A, sizeof(double) * static_cast<size_t>(m) * m);
        for (int i = 0; i < m; ++i) perm_[i] = i;
        for (int c = 0; c < m; ++c) {
            int p = c;
            double best = std::fabs(a_[c * m + c]);
            for (int r = c + 1; r < m; ++r) {
                double v = std::fabs(a_[r * m + c]);
                if (v > best) { best = v; p = r; }
            }
            if (!(best > 1e-300)) return false;
            if (p != c) {
                for (int j = 0; j < m; ++j) std::swap(a_[p * m + j], a_[c * m + j]);
                std::swap(perm_[p], perm_[c]);
            }
            double inv = 1.0 / a_[c * m + c];
            for (int r = c + 1; r < m; ++r) {
                double f = a_[r * m + c] * inv;
                a_[r * m + c] = f;
                for (int j = c + 1; j < m; ++j) a_[r * m + j] -= f * a_[c * m + j];
            }
        }
        return true;
    }

    void solve(const double* b, double* x) const {
        int m = m_;
        double y[kMaxCategories];
        for (int i = 0; i < m; ++i) {
            double s = b[perm_[i]];
            for (int j = 0; j < i; ++j) s -= a_[i * m + j] * y[j];
            y[i] = s;
        }
        for (int i = m - 1; i >= 0; --i) {
            double s = y[i];
            for (int j = i + 1; j < m; ++j) s -= a_[i * m + j] * x[j];
            x[i] = s / a_[i * m + i];
        }
    }

    /// Solves A' x = b using the same factorization.
    void solve_transpose(const double* b, double* x) const {
        int m = m_;
        double w[kMaxCategories];
        // U' w = b (forward), then L' v = w (backward), then undo pivoting.
        for (int i = 0; i < m; ++i) {
            double s = b[i];
            for (int j = 0; j < i; ++j) s -= a_[j * m + i] * w[j];
            w[i] = s / a_[i * m + i];
        }
        for (int i = m - 1; i >= 0; --i) {
            double s = w[i];
            for (int j = i + 1; j < m; ++j) s -= a_[j * m + i] * w[j];
            w[i] = s;
        }
        for (int i = 0; i < m; ++i) x[perm_[i]] = w[i];
    }

private:
    int m_ = 0;
    double a_[kMaxCategories * kMaxCategories];
    int perm_[kMaxCategories];
};

/// One row of the transition matrix: p_{t,j.} given delta_t and the
/// previous category j (j = K contributes no xi term). Log-sum-exp guarded.
/// trans_row must hold K entries.
inline void transition_row_raw(int K, const double* delta, const double* xi_rowmajor,
                               int j, double* trans_row) {
    const int km1 = K - 1;
    double v[kMaxCategories];
    double vmax = 0.0;  // the baseline category contributes exp(0)
    for (int k = 0; k < km1; ++k) {
        double u = delta[k];
        if (j <= km1) u += xi_rowmajor[k * km1 + (j - 1)];
        v[k] = u;
        if (u > vmax) vmax = u;
    }
    double denom = std::exp(-vmax);
    for (int k = 0; k < km1; ++k) {
        v[k] = std::exp(v[k] - vmax);
        denom += v[k];
    }
    double inv = 1.0 / denom;
    for (int k = 0; k < km1; ++k) trans_row[k] = v[k] * inv;
    trans_row[km1] = std::exp(-vmax) * inv;
}

/// Full K x K transition matrix, rows j = 1..K.
inline void build_transition(int K, const double* delta, const double* xi_rowmajor,
                             double* trans) {
    for (int j = 1; j <= K; ++j)
        transition_row_raw(K, delta, xi_rowmajor, j, trans + static_cast<size_t>(j - 1) * K);
}

/// Newton Jacobian of the marginal-consistency system:
/// A[k][k'] = sum_j p_{t,jk} (1[k=k'] - p_{t,jk'}) pi_{t-1,j}.
inline void delta_jacobian(int K, const double* trans, const double* pi_prev, double* A) {
    const int km1 = K - 1;
    std::memset(A, 0, sizeof(double) * static_cast<size_t>(km1) * km1);
    for (int j = 0; j < K; ++j) {
        const double* p = trans + static_cast<size_t>(j) * K;
        double w = pi_prev[j];
        for (int k = 0; k < km1; ++k) {
            double wp = w * p[k];
            double* row = A + static_cast<size_t>(k) * km1;
            for (int k2 = 0; k2 < km1; ++k2) row[k2] -= wp * p[k2];
            row[k] += wp;
        }
    }
}

/// Residual f_k = sum_j p_{t,jk} pi_{t-1,j} - pi_{t,k}; returns max |f_k|.
inline double delta_residual(int K, const double* trans, const double* pi_prev,
                             const double* pi_curr, double* f) {
    const int km1 = K - 1;
    for (int k = 0; k < km1; ++k) f[k] = -pi_curr[k];
    for (int j = 0; j < K; ++j) {
        const double* p = trans + static_cast<size_t>(j) * K;
        double w = pi_prev[j];
        for (int k = 0; k < km1; ++k) f[k] += w * p[k];
    }
    double fmax = 0.0;
    for (int k = 0; k < km1; ++k) fmax = std::max(fmax, std::fabs(f[k]));
    return fmax;
}

/// Safeguarded Newton solve for delta_t. delta is in/out (initial guess in,
/// solution out); trans receives the converged K x K transition matrix.
/// Returns the iteration count, or -1 on non-convergence.
inline int solve_delta_raw(int K, const double* pi_prev, const double* pi_curr,
                           const double* xi_rowmajor, const DeltaSolveSettings& s,
                           double* delta, double* trans) {
    const int km1 = K - 1;
    double f[kMaxCategories], A[kMaxCategories * kMaxCategories];
    double step[kMaxCategories], cand[kMaxCategories];
    SmallLu lu;

    build_transition(K, delta, xi_rowmajor, trans);
    double fmax = delta_residual(K, trans, pi_prev, pi_curr, f);
    for (int it = 0; it < s.max_iters; ++it) {
        if (fmax <= s.tol) return it;
        delta_jacobian(K, trans, pi_prev, A);
        if (!lu.factor(A, km1)) return -1;
        lu.solve(f, step);
        double scale = 1.0;
        bool accepted = false;
        for (int h = 0; h <= s.step_halvings; ++h) {
            for (int k = 0; k < km1; ++k) cand[k] = delta[k] - scale * step[k];
            build_transition(K, cand, xi_rowmajor, trans);
            double fnew = delta_residual(K, trans, pi_prev, pi_curr, f);
            if (fnew < fmax || fnew <= s.tol) {
                std::memcpy(delta, cand, sizeof(double) * static_cast<size_t>(km1));
                fmax = fnew;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if (!accepted) {
            build_transition(K, delta, xi_rowmajor, trans);
            return -1;
        }
    }
    if (fmax <= s.tol) return s.max_iters;
    // leave trans consistent with the returned delta
    build_transition(K, delta, xi_rowmajor, trans);
    return -1;
}

/// Closed-form delta under independence-style initialization:
/// delta_k = log(pi_k / pi_K).
inline void delta_init_from_marginals(int K, const double* pi, double* delta) {
    for (int k = 0; k < K - 1; ++k) delta[k] = std::log(pi[k] / pi[K - 1]);
}

// ---------------------------------------------------------------------------
// Vector-friendly wrappers
// ---------------------------------------------------------------------------

inline std::vector<double> transition_row(const std::vector<double>& delta_t,
                                          const XiParams& xi, int prev_category) {
    const int K = xi.K;
    if (K > kMaxCategories) throw data_error("transition_row: K exceeds supported maximum");
    if (prev_category < 1 || prev_category > K)
        throw data_error("transition_row: previous category out of range");
    if (static_cast<int>(delta_t.size()) != K - 1)
        throw data_error("transition_row: delta has wrong dimension");
    std::vector<double> row(static_cast<size_t>(K));
    transition_row_raw(K, delta_t.data(), xi.xi.data(), prev_category, row.data());
    return row;
}

/// Solves for delta_t reconciling consecutive marginals with the Markov
/// structure. pi vectors have length K and must be strictly positive.
inline std::vector<double> solve_delta(const std::vector<double>& pi_prev,
                                       const std::vector<double>& pi_curr,
                                       const XiParams& xi,
                                       const DeltaSolveSettings& settings = {},
                                       const std::vector<double>* init = nullptr) {
    const int K = xi.K;
    if (static_cast<int>(pi_prev.size()) != K || static_cast<int>(pi_curr.size()) != K)
        throw data_error("solve_delta: marginal vectors must have length K");
    std::vector<double> delta(static_cast<size_t>(K - 1));
    if (init && static_cast<int>(init->size()) == K - 1)
        delta = *init;
    else
        delta_init_from_marginals(K, pi_curr.data(), delta.data());
    std::vector<double> trans(static_cast<size_t>(K) * K);
    int its = solve_delta_raw(K, pi_prev.data(), pi_curr.data(), xi.xi.data(),
                              settings, delta.data(), trans.data());
    if (its < 0)
        throw infeasible_error("solve_delta: Newton iteration did not converge");
    return delta;
}

/// Derivatives of delta_t with respect to one mean parameter, given the
/// per-time derivative vectors of pi_t and pi_{t-1} (each length K).
/// Solves A d = dpi_curr_k - sum_j p_jk dpi_prev_j with A the Newton Jacobian.
inline std::vector<double> solve_delta_dtheta(int K, const double* trans,
                                              const double* pi_prev,
                                              const std::vector<double>& dpi_prev,
                                              const std::vector<double>& dpi_curr) {
    const int km1 = K - 1;
    double A[kMaxCategories * kMaxCategories];
    delta_jacobian(K, trans, pi_prev, A);
    SmallLu lu;
    if (!lu.factor(A, km1))
        throw infeasible_error("solve_delta_dtheta: singular Jacobian");
    double rhs[kMaxCategories];
    for (int k = 0; k < km1; ++k) {
        double s = dpi_curr[static_cast<size_t>(k)];
        for (int j = 0; j < K; ++j)
            s -= trans[static_cast<size_t>(j) * K + k] * dpi_prev[static_cast<size_t>(j)];
        rhs[k] = s;
    }
    std::vector<double> d(static_cast<size_t>(km1));
    lu.solve(rhs, d.data());
    return d;
}

/// Derivatives of delta_t with respect to xi_{ab} (1-based a, b), given the
/// converged transition matrix. RHS is -sum_j (dp_{t,jk}/dxi_ab) pi_{t-1,j};
/// only row j = b contributes.
inline std::vector<double> solve_delta_dxi(int K, const double* trans,
                                           const double* pi_prev, int a, int b) {
    const int km1 = K - 1;
    double A[kMaxCategories * kMaxCategories];
    delta_jacobian(K, trans, pi_prev, A);
    SmallLu lu;
    if (!lu.factor(A, km1))
        throw infeasible_error("solve_delta_dxi: singular Jacobian");
    const double* pb = trans + static_cast<size_t>(b - 1) * K;
    double rhs[kMaxCategories];
    for (int k = 0; k < km1; ++k) {
        double dp = pb[k] * ((k == a - 1 ? 1.0 : 0.0) - pb[a - 1]);
        rhs[k] = -dp * pi_prev[b - 1];
    }
    std::vector<double> d(static_cast<size_t>(km1));
    lu.solve(rhs, d.data());
    return d;
}

}  // namespace mtm

#endif  // MTM_DEPENDENCE_HPP
