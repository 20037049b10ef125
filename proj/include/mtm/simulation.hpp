#ifndef MTM_SIMULATION_HPP
#define MTM_SIMULATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mtm/ga.hpp"

namespace mtm {

namespace detail {

/// SplitMix64 output function; used to derive well-separated per-replicate
/// seeds so that parallel and serial runs draw identical streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministic stream seed for replicate r of a study seeded with `seed`.
inline std::uint64_t replicate_seed(std::uint64_t seed, int replicate) {
    return detail::splitmix64(seed + 0x9E3779B97F4A7C15ULL *
                                         static_cast<std::uint64_t>(replicate + 1));
}

/// Shift patterns of the six simulation scenarios for K = 5 (shift vector
/// over the K-1 cumulative logits): SC1 all, SC2 (d,d,0,d), SC3 (0,d,0,d),
/// SC4 (0,0,d,d), SC5 (0,0,0,d), SC6 alternating (d,-d,d,-d).
inline std::vector<double> scenario_shift(const std::string& tag, double delta, int K = 5) {
    if (K != 5)
        throw data_error("scenario_shift: scenario tags are defined for K = 5");
    const double d = delta;
    if (tag == "SC1") return {d, d, d, d};
    if (tag == "SC2") return {d, d, 0.0, d};
    if (tag == "SC3") return {0.0, d, 0.0, d};
    if (tag == "SC4") return {0.0, 0.0, d, d};
    if (tag == "SC5") return {0.0, 0.0, 0.0, d};
    if (tag == "SC6") return {d, -d, d, -d};
    throw data_error("scenario_shift: unknown scenario tag '" + tag + "'");
}

struct SimSpec {
    ModelConfig config;
    ThetaParams theta;
    XiParams xi;
    int replicates = 1;
    std::uint64_t seed = 1;
    std::optional<std::string> scenario;  // SC1..SC6; overrides theta's shift
    double delta = 0.0;                   // scenario shift magnitude

    void validate() const {
        config.validate();
        theta.check_dims(config);
        xi.check_dims(config.K);
        if (replicates < 1) throw data_error("SimSpec: replicates must be >= 1");
        if (scenario) scenario_shift(*scenario, delta, config.K);
    }
};

namespace detail {

inline int draw_category(std::mt19937_64& rng, const double* pi, int K) {
    double u = uniform01(rng);
    double acc = 0.0;
    for (int k = 0; k < K - 1; ++k) {
        acc += pi[k];
        if (u < acc) return k + 1;
    }
    return K;
}

}  // namespace detail

/// Generates one series: y_1 from the marginal distribution at t = 1, then
/// y_t from the conditional (transition-row) distribution given y_{t-1},
/// with the delta system solved at every step. `stream_seed` selects the
/// replicate's RNG stream directly.
inline OrdinalSeries simulate_one(const ModelConfig& config, const ThetaParams& theta,
                                  const XiParams& xi, std::uint64_t stream_seed) {
    config.validate();
    theta.check_dims(config);
    xi.check_dims(config.K);
    const int K = config.K, n = config.n, km1 = K - 1;
    if (K > kMaxCategories) throw data_error("simulate: K exceeds supported maximum");

    std::vector<double> X = build_design(config);
    MarginalField f;
    if (!fill_marginals(config, theta.flatten(), X, f))
        throw infeasible_error("simulate: theta yields infeasible marginals");

    std::mt19937_64 rng(stream_seed);
    OrdinalSeries y;
    y.K = K;
    y.T = config.T;
    y.values.resize(static_cast<size_t>(n));

    y.values[0] = detail::draw_category(rng, f.pi_at(1), K);
    double delta[kMaxCategories], trans[kMaxCategories * kMaxCategories];
    DeltaSolveSettings ds;
    for (int t = 2; t <= n; ++t) {
        if (t == 2)
            delta_init_from_marginals(K, f.pi_at(2), delta);
        if (solve_delta_raw(K, f.pi_at(t - 1), f.pi_at(t), xi.xi.data(), ds, delta, trans) < 0)
            throw infeasible_error("simulate: delta solve failed at t = " + std::to_string(t));
        const int j = y.values[static_cast<size_t>(t - 2)];
        y.values[static_cast<size_t>(t - 1)] =
            detail::draw_category(rng, trans + static_cast<size_t>(j - 1) * K, K);
    }
    return y;
}

/// Replicate r (0-based) of the spec. When a scenario tag is present the
/// theta shift block is replaced by the tagged pattern at magnitude delta
/// (the config must carry a changepoint).
inline OrdinalSeries simulate(const SimSpec& spec, int replicate = 0) {
    spec.validate();
    ThetaParams th = spec.theta;
    if (spec.scenario) {
        if (!spec.config.changepoint)
            throw data_error("simulate: scenario shift requires a changepoint in config");
        th.delta = scenario_shift(*spec.scenario, spec.delta, spec.config.K);
    }
    return simulate_one(spec.config, th, spec.xi, replicate_seed(spec.seed, replicate));
}

// ---------------------------------------------------------------------------
// Monte Carlo experiments
// ---------------------------------------------------------------------------

/// Linear-interpolation sample quantile (type 7) of an unsorted copy.
inline double sample_quantile(std::vector<double> v, double p) {
    if (v.empty()) throw data_error("sample_quantile: empty sample");
    std::sort(v.begin(), v.end());
    const double h = p * (static_cast<double>(v.size()) - 1.0);
    const size_t i = static_cast<size_t>(h);
    if (i + 1 >= v.size()) return v.back();
    return v[i] + (h - static_cast<double>(i)) * (v[i + 1] - v[i]);
}

struct PercentileCell {
    std::string model;  // "seasonal" or "seasonal+trend"
    int ratio = 0;      // n / T
    double p90 = 0.0, p95 = 0.0, p99 = 0.0;
    int replicates = 0;
    int excluded = 0;
    std::vector<double> lambda_max;  // retained for downstream tolerance checks
};

struct PercentileSpec {
    ModelConfig config;  // n ignored; set per cell as ratio * T
    ThetaParams theta;   // null parameters (no shift block)
    XiParams xi;
    std::vector<int> ratios = {3, 5, 10, 20, 30};
    int replicates = 500;
    std::uint64_t seed = 1;
};

/// Null-hypothesis percentile table of the maximally selected statistic:
/// per n/T cell, simulates replicates, scans the admissible set, and reports
/// the empirical 90/95/99 percentiles. Failed replicates are excluded and
/// counted.
inline std::vector<PercentileCell> run_percentile_table(const PercentileSpec& spec,
                                                        const FitSettings& settings = {},
                                                        int workers = 0) {
    std::vector<PercentileCell> table;
    for (size_t ci = 0; ci < spec.ratios.size(); ++ci) {
        const int ratio = spec.ratios[ci];
        ModelConfig cfg = spec.config.without_changepoint();
        cfg.n = ratio * cfg.T;
        cfg.validate();
        spec.theta.check_dims(cfg);

        PercentileCell cell;
        cell.model = cfg.trend ? "seasonal+trend" : "seasonal";
        cell.ratio = ratio;
        cell.replicates = spec.replicates;
        std::vector<double> lams(static_cast<size_t>(spec.replicates),
                                 std::numeric_limits<double>::quiet_NaN());
        const std::uint64_t cell_seed = detail::splitmix64(spec.seed ^ (0xC3ULL + ci));
        parallel_for(spec.replicates, workers, [&](int r) {
            try {
                OrdinalSeries y = simulate_one(cfg, spec.theta, spec.xi,
                                               replicate_seed(cell_seed, r));
                ChangepointReport rep =
                    lambda_max_exhaustive(y, cfg, 0.95, settings, 1,
                                          CriticalSource::automatic_);
                lams[static_cast<size_t>(r)] = rep.lambda_max;
            } catch (const std::runtime_error&) {
                // excluded below
            }
        });
        for (double v : lams)
            if (std::isnan(v))
                ++cell.excluded;
            else
                cell.lambda_max.push_back(v);
        if (cell.lambda_max.empty())
            throw convergence_error("run_percentile_table: all replicates failed in cell N=" +
                                    std::to_string(ratio));
        cell.p90 = sample_quantile(cell.lambda_max, 0.90);
        cell.p95 = sample_quantile(cell.lambda_max, 0.95);
        cell.p99 = sample_quantile(cell.lambda_max, 0.99);
        table.push_back(std::move(cell));
    }
    return table;
}

enum class SearchMethod { exhaustive, genetic };

struct PowerSpec {
    ModelConfig config;  // null form; n, T, trend as desired
    ThetaParams theta;   // base parameters without shift block
    XiParams xi;
    std::string scenario = "SC1";
    double delta = 0.0;  // 0 => size (Type-I error) study
    int replicates = 500;
    std::uint64_t seed = 1;
    double level = 0.95;
    /// Fixed tau/n; when unset tau is drawn uniformly from the admissible set
    /// per replicate.
    std::optional<double> tau_fraction;
    /// Detection counts as success when |tau_hat - tau| <= success_window
    /// (in time steps); negative => rejection-only success rule.
    int success_window = 540;
    SearchMethod method = SearchMethod::exhaustive;
    GaSettings ga;
    CriticalSource critical_source = CriticalSource::automatic_;
};

struct PowerResult {
    std::string scenario;
    double delta = 0.0;
    int replicates = 0;
    int excluded = 0;
    int rejections = 0;
    int successes = 0;  // rejections that also satisfy the location window
    double power = 0.0;
};

/// Power / Type-I error of the maximally selected test for one scenario
/// cell. Under delta != 0 the series carries the scenario shift at a fixed
/// or randomly placed tau; success requires rejection and (when a window is
/// configured) a tau_hat within the window of the truth.
inline PowerResult run_power_study(const PowerSpec& spec, const FitSettings& settings = {},
                                   int workers = 0) {
    ModelConfig null_cfg = spec.config.without_changepoint();
    null_cfg.validate();
    auto [lo, hi] = null_cfg.admissible_range();
    const std::vector<double> shift = scenario_shift(spec.scenario, spec.delta, null_cfg.K);

    PowerResult res;
    res.scenario = spec.scenario;
    res.delta = spec.delta;
    res.replicates = spec.replicates;
    std::vector<int> outcome(static_cast<size_t>(spec.replicates), -1);  // -1 excluded
    parallel_for(spec.replicates, workers, [&](int r) {
        try {
            std::uint64_t rs = replicate_seed(spec.seed, r);
            std::mt19937_64 rng(rs);
            int tau;
            if (spec.tau_fraction)
                tau = std::clamp(static_cast<int>(std::lround(*spec.tau_fraction *
                                                              null_cfg.n)),
                                 lo, hi);
            else
                tau = detail::uniform_int(rng, lo, hi);
            OrdinalSeries y;
            if (spec.delta != 0.0) {
                ModelConfig gen_cfg = null_cfg.with_changepoint(tau);
                ThetaParams th = spec.theta;
                th.delta = shift;
                y = simulate_one(gen_cfg, th, spec.xi, detail::splitmix64(rs));
            } else {
                y = simulate_one(null_cfg, spec.theta, spec.xi, detail::splitmix64(rs));
            }
            ChangepointReport rep;
            if (spec.method == SearchMethod::exhaustive) {
                rep = lambda_max_exhaustive(y, null_cfg, spec.level, settings, 1,
                                            spec.critical_source);
            } else {
                GaSettings ga = spec.ga;
                ga.seed = detail::splitmix64(rs ^ 0xA5A5A5A5ULL);
                rep = ga_search(y, null_cfg, ga, spec.level, settings,
                                spec.critical_source);
            }
            bool success = rep.reject;
            if (success && spec.delta != 0.0 && spec.success_window >= 0)
                success = std::abs(rep.tau_hat - tau) <= spec.success_window;
            outcome[static_cast<size_t>(r)] = (rep.reject ? 2 : 0) + (success ? 1 : 0);
        } catch (const std::runtime_error&) {
            outcome[static_cast<size_t>(r)] = -1;
        }
    });
    for (int o : outcome) {
        if (o < 0) {
            ++res.excluded;
            continue;
        }
        if (o & 2) ++res.rejections;
        if (o & 1) ++res.successes;
    }
    const int effective = spec.replicates - res.excluded;
    if (effective == 0) throw convergence_error("run_power_study: all replicates failed");
    res.power = static_cast<double>(res.successes) / effective;
    return res;
}

}  // namespace mtm

#endif  // MTM_SIMULATION_HPP
