#ifndef MTM_GA_HPP
#define MTM_GA_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <vector>

#include "mtm/changepoint.hpp"

namespace mtm {

struct GaSettings {
    int population = 100;
    int islands = 5;
    double crossover_prob = 0.9;
    double mutation_prob = 0.1;
    int converge_migrations = 4;  // stop after this many migrations without improvement
    int max_migrations = 15;
    int gens_per_migration = 20;  // island generations between migration barriers
    std::uint64_t seed = 1;
    int fitness_workers = 10;

    void validate() const {
        if (population < 2 || islands < 1 || population % islands != 0)
            throw data_error("GaSettings: population must be a positive multiple of islands");
        if (!(crossover_prob >= 0.0 && crossover_prob <= 1.0 &&
              mutation_prob >= 0.0 && mutation_prob <= 1.0))
            throw data_error("GaSettings: probabilities must lie in [0,1]");
        if (converge_migrations < 1 || max_migrations < 1 || gens_per_migration < 1)
            throw data_error("GaSettings: migration/generation counts must be positive");
    }
};

struct GaTraceEntry {
    int migration = 0;
    int best_tau = 0;
    double best_fitness = 0.0;
    int evaluations = 0;
};

namespace detail {

inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [lo, hi] via unbiased rejection-free modular draw on a
/// 53-bit uniform; adequate for ranges far below 2^32.
inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1.0));
}

/// Linear-ranking draw: rank 0 (least fit) has weight 0, rank s-1 weight s-1.
inline int linear_rank_pick(std::mt19937_64& rng, const std::vector<int>& order) {
    const int s = static_cast<int>(order.size());
    const long total = static_cast<long>(s) * (s - 1) / 2;
    long u = static_cast<long>(uniform01(rng) * static_cast<double>(total));
    if (u >= total) u = total - 1;
    long acc = 0;
    for (int r = s - 1; r >= 1; --r) {
        acc += r;
        if (u < acc) return order[static_cast<size_t>(r)];
    }
    return order[static_cast<size_t>(s - 1)];
}

}  // namespace detail

/// Island-model genetic search for the changepoint maximizing the
/// likelihood-ratio profile. Individuals are admissible tau values; fitness
/// is the alternative-model log-likelihood, memoized so no tau is ever
/// fitted twice. Steady state: each island produces one child per
/// generation (rounded-average crossover, else a copy of the fitter parent;
/// uniform redraw mutation), discards duplicates within the island, and
/// replaces its least-fit member. At each migration barrier every island's
/// worst is replaced by a randomly chosen other island's best. Search stops
/// when the global best survives converge_migrations consecutive migrations
/// unchanged, or after max_migrations.
inline ChangepointReport ga_search(const OrdinalSeries& series, const ModelConfig& config,
                                   const GaSettings& ga = {}, double level = 0.95,
                                   const FitSettings& settings = {},
                                   CriticalSource source = CriticalSource::automatic_,
                                   std::vector<GaTraceEntry>* trace = nullptr,
                                   const CriticalValue* custom_critical = nullptr) {
    ga.validate();
    ModelConfig null_cfg = config.without_changepoint();
    null_cfg.validate();
    auto [lo, hi] = null_cfg.admissible_range();
    if (lo > hi) throw data_error("ga_search: empty admissible set");

    ChangepointReport rep;
    rep.null_fit = fit(series, null_cfg, settings, false);
    rep.critical = custom_critical ? *custom_critical : critical_value(null_cfg, level, source);

    const std::vector<double> null_ext =
        detail::extend_with_shift(null_cfg, rep.null_fit.theta);
    const double neg_inf = -std::numeric_limits<double>::infinity();

    std::map<int, double> cache;  // tau -> alternative loglik
    std::mutex cache_mutex;
    auto fit_tau = [&](int tau) -> double {
        ModelConfig alt_cfg = null_cfg.with_changepoint(tau);
        try {
            ThetaParams t0 = ThetaParams::unflatten(alt_cfg, null_ext);
            FitResult alt = fit_from(series, alt_cfg, t0, rep.null_fit.xi, settings, false);
            return alt.loglik;
        } catch (const std::runtime_error&) {
            return neg_inf;
        }
    };
    auto fitness = [&](int tau) -> double {
        {
            std::lock_guard<std::mutex> lk(cache_mutex);
            auto it = cache.find(tau);
            if (it != cache.end()) return it->second;
        }
        double ll = fit_tau(tau);
        std::lock_guard<std::mutex> lk(cache_mutex);
        return cache.emplace(tau, ll).first->second;
    };

    std::mt19937_64 rng(ga.seed);
    const int island_size = ga.population / ga.islands;
    std::vector<std::vector<int>> pop(static_cast<size_t>(ga.islands),
                                      std::vector<int>(static_cast<size_t>(island_size)));
    for (auto& island : pop)
        for (int& tau : island) tau = detail::uniform_int(rng, lo, hi);

    // evaluate the initial population in parallel; the unique-tau list is
    // deterministic, so worker count cannot change results
    {
        std::vector<int> pending;
        for (const auto& island : pop)
            for (int tau : island)
                if (!cache.count(tau)) {
                    cache.emplace(tau, 0.0);
                    pending.push_back(tau);
                }
        for (int tau : pending) cache.erase(tau);
        parallel_for(static_cast<int>(pending.size()), ga.fitness_workers,
                     [&](int i) { fitness(pending[static_cast<size_t>(i)]); });
    }

    auto island_order = [&](const std::vector<int>& island) {
        std::vector<int> order(island.size());
        for (size_t i = 0; i < island.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            double fa = fitness(island[static_cast<size_t>(a)]);
            double fb = fitness(island[static_cast<size_t>(b)]);
            if (fa != fb) return fa < fb;  // ascending fitness: rank 0 least fit
            return island[static_cast<size_t>(a)] > island[static_cast<size_t>(b)];
        });
        return order;
    };
    auto global_best = [&]() {
        int best_tau = -1;
        double best_ll = neg_inf;
        for (const auto& island : pop)
            for (int tau : island) {
                double ll = fitness(tau);
                if (ll > best_ll || (ll == best_ll && tau < best_tau)) {
                    best_ll = ll;
                    best_tau = tau;
                }
            }
        return std::pair<int, double>(best_tau, best_ll);
    };

    int stale = 0;
    int prev_best = -1;
    for (int mig = 1; mig <= ga.max_migrations; ++mig) {
        for (auto& island : pop) {
            for (int gen = 0; gen < ga.gens_per_migration; ++gen) {
                std::vector<int> order = island_order(island);
                int p1 = island[static_cast<size_t>(detail::linear_rank_pick(rng, order))];
                int p2 = island[static_cast<size_t>(detail::linear_rank_pick(rng, order))];
                double f1 = fitness(p1), f2 = fitness(p2);
                // father = fitter parent; equal fitness resolves to lower tau
                int father = (f1 > f2 || (f1 == f2 && p1 <= p2)) ? p1 : p2;
                int mother = (father == p1) ? p2 : p1;
                int child;
                if (detail::uniform01(rng) < ga.crossover_prob) {
                    double avg = 0.5 * (father + mother);
                    child = static_cast<int>(std::floor(avg + 0.5));  // half away from zero
                } else {
                    child = father;
                }
                if (detail::uniform01(rng) < ga.mutation_prob)
                    child = detail::uniform_int(rng, lo, hi);
                child = std::clamp(child, lo, hi);
                bool duplicate = false;
                for (int tau : island)
                    if (tau == child) { duplicate = true; break; }
                if (duplicate) continue;
                island[static_cast<size_t>(order[0])] = child;  // replace least fit
            }
        }
        // migration: each island's worst gets a random other island's best
        std::vector<int> bests(static_cast<size_t>(ga.islands));
        for (int j = 0; j < ga.islands; ++j)
            bests[static_cast<size_t>(j)] =
                pop[static_cast<size_t>(j)]
                   [static_cast<size_t>(island_order(pop[static_cast<size_t>(j)]).back())];
        for (int j = 0; j < ga.islands; ++j) {
            int donor = detail::uniform_int(rng, 0, ga.islands - 2);
            if (donor >= j) ++donor;
            auto& island = pop[static_cast<size_t>(j)];
            std::vector<int> order = island_order(island);
            island[static_cast<size_t>(order[0])] = bests[static_cast<size_t>(donor)];
        }
        auto [best_tau, best_ll] = global_best();
        if (trace)
            trace->push_back({mig, best_tau, best_ll, static_cast<int>(cache.size())});
        if (best_tau == prev_best)
            ++stale;
        else {
            stale = 0;
            prev_best = best_tau;
        }
        if (stale >= ga.converge_migrations) break;
    }

    auto [best_tau, best_ll] = global_best();
    if (!(best_ll > neg_inf))
        throw convergence_error("ga_search: every evaluated alternative fit failed");
    rep.tau_hat = best_tau;
    rep.lambda_max = -2.0 * (rep.null_fit.loglik - best_ll);
    rep.reject = rep.lambda_max > rep.critical.value;
    for (const auto& [tau, ll] : cache) {
        rep.taus.push_back(tau);
        if (ll > neg_inf)
            rep.lambda.push_back(-2.0 * (rep.null_fit.loglik - ll));
        else {
            rep.lambda.push_back(std::nan(""));
            rep.failed_taus.push_back(tau);
        }
    }
    {
        ModelConfig alt_cfg = null_cfg.with_changepoint(rep.tau_hat);
        ThetaParams t0 = ThetaParams::unflatten(alt_cfg, null_ext);
        rep.alt_fit = fit_from(series, alt_cfg, t0, rep.null_fit.xi, settings, true);
    }
    return rep;
}

}  // namespace mtm

#endif  // MTM_GA_HPP
