#ifndef MTM_IO_HPP
#define MTM_IO_HPP

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtm/changepoint.hpp"
#include "mtm/diagnostics.hpp"
#include "mtm/simulation.hpp"

namespace mtm {

// ---------------------------------------------------------------------------
// Timestamps
// ---------------------------------------------------------------------------

namespace detail {

/// Days since 1970-01-01 (Howard Hinnant's days_from_civil).
inline long days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2) / 5 +
                         static_cast<unsigned>(d) - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe);
}

struct Timestamp {
    bool is_date = false;
    long value = 0;        // serial day or integer index
    std::string raw;
    int month = 0, day = 0;
};

inline bool parse_timestamp(const std::string& s, Timestamp& ts) {
    ts.raw = s;
    if (s.size() == 10 && s[4] == '-' && s[7] == '-') {
        int y, m, d;
        char dash1, dash2;
        std::istringstream is(s);
        if ((is >> y >> dash1 >> m >> dash2 >> d) && dash1 == '-' && dash2 == '-' &&
            m >= 1 && m <= 12 && d >= 1 && d <= 31) {
            ts.is_date = true;
            ts.value = days_from_civil(y, m, d);
            ts.month = m;
            ts.day = d;
            return true;
        }
        return false;
    }
    try {
        size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) return false;
        ts.is_date = false;
        ts.value = v;
        return true;
    } catch (...) {
        return false;
    }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(field);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ingest
// ---------------------------------------------------------------------------

struct IngestOptions {
    /// Ordered category labels mapping to 1..K; empty => integer categories
    /// in 1..K are expected directly (K then required).
    std::vector<std::string> labels;
    int K = 0;  // required when labels is empty
    int T = 365;
    bool allow_gaps = false;
    /// "MM-DD" patterns removed before the gap check (e.g. "02-29").
    std::vector<std::string> exclude_dates;
};

struct IngestSummary {
    int n = 0;
    int K = 0;
    int T = 0;
    int excluded_rows = 0;
    std::vector<int> category_counts;
};

/// Reads a `timestamp,category` CSV (header required) into a validated
/// series. Timestamps are ISO dates or integer indices, strictly increasing
/// and gap-free by default; configured exclude-dates (leap days etc.) are
/// dropped before the gap check.
inline OrdinalSeries ingest(const std::string& path, const IngestOptions& opt,
                            IngestSummary* summary = nullptr) {
    const int K = opt.labels.empty() ? opt.K : static_cast<int>(opt.labels.size());
    if (K < 2) throw data_error("ingest: need K >= 2 (labels or --categories)");
    std::ifstream in(path);
    if (!in) throw data_error("ingest: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw data_error("ingest: no records in '" + path + "'");

    std::map<std::string, int> label_map;
    for (size_t i = 0; i < opt.labels.size(); ++i)
        label_map[opt.labels[i]] = static_cast<int>(i) + 1;

    OrdinalSeries series;
    series.K = K;
    series.T = opt.T;
    std::optional<detail::Timestamp> prev;
    int row = 1;  // header was row 1
    int excluded = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> fields = detail::split_csv_line(line);
        if (fields.size() < 2)
            throw data_error("ingest: row " + std::to_string(row) + " has fewer than 2 fields");
        detail::Timestamp ts;
        if (!detail::parse_timestamp(fields[0], ts))
            throw data_error("ingest: row " + std::to_string(row) + " has invalid timestamp '" +
                             fields[0] + "'");
        if (ts.is_date && !opt.exclude_dates.empty()) {
            char md[6];
            std::snprintf(md, sizeof(md), "%02d-%02d", ts.month, ts.day);
            bool skip = false;
            for (const std::string& x : opt.exclude_dates)
                if (x == md) { skip = true; break; }
            if (skip) {
                ++excluded;
                // the excluded day still consumes its calendar slot so that
                // the surrounding rows pass the gap check
                if (prev && prev->is_date && ts.value == prev->value + 1)
                    prev->value = ts.value;
                continue;
            }
        }
        if (prev) {
            if (ts.is_date != prev->is_date)
                throw data_error("ingest: row " + std::to_string(row) +
                                 " mixes date and integer timestamps");
            if (ts.value <= prev->value)
                throw data_error("ingest: row " + std::to_string(row) +
                                 (ts.value == prev->value ? " duplicates timestamp '"
                                                          : " has non-increasing timestamp '") +
                                 ts.raw + "'");
            if (!opt.allow_gaps && ts.value != prev->value + 1)
                throw data_error("ingest: gap before row " + std::to_string(row) + " ('" +
                                 ts.raw + "'); pass an explicit gap policy to allow gaps");
        }
        prev = ts;
        const std::string& cat = fields[1];
        if (cat.empty())
            throw data_error("ingest: row " + std::to_string(row) + " has a missing category");
        int value;
        if (!label_map.empty()) {
            auto it = label_map.find(cat);
            if (it == label_map.end())
                throw data_error("ingest: row " + std::to_string(row) + " has unknown label '" +
                                 cat + "'");
            value = it->second;
        } else {
            try {
                size_t pos = 0;
                value = std::stoi(cat, &pos);
                if (pos != cat.size()) throw std::invalid_argument(cat);
            } catch (...) {
                throw data_error("ingest: row " + std::to_string(row) +
                                 " has non-integer category '" + cat + "'");
            }
            if (value < 1 || value > K)
                throw data_error("ingest: row " + std::to_string(row) + " category " +
                                 std::to_string(value) + " outside 1.." + std::to_string(K));
        }
        series.values.push_back(value);
    }
    if (series.values.empty()) throw data_error("ingest: no records in '" + path + "'");
    series.validate();
    if (summary) {
        summary->n = series.n();
        summary->K = K;
        summary->T = opt.T;
        summary->excluded_rows = excluded;
        summary->category_counts = series.category_counts();
    }
    return series;
}

// ---------------------------------------------------------------------------
// CSV writers
// ---------------------------------------------------------------------------

namespace detail {

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    out.precision(12);
    return out;
}

}  // namespace detail

inline void write_profile_csv(const std::string& path, const ChangepointReport& rep) {
    auto out = detail::open_out(path);
    out << "tau,lambda\n";
    for (size_t i = 0; i < rep.taus.size(); ++i) {
        out << rep.taus[i] << ",";
        if (std::isnan(rep.lambda[i]))
            out << "NA";
        else
            out << rep.lambda[i];
        out << "\n";
    }
}

inline void write_percentiles_csv(const std::string& path,
                                  const std::vector<PercentileCell>& table) {
    auto out = detail::open_out(path);
    out << "model,N,p90,p95,p99,replicates,excluded\n";
    for (const auto& c : table)
        out << c.model << "," << c.ratio << "," << c.p90 << "," << c.p95 << "," << c.p99
            << "," << c.replicates << "," << c.excluded << "\n";
}

inline void write_pit_csv(const std::string& path, const PitHistogram& hist) {
    auto out = detail::open_out(path);
    out << "bin,height\n";
    for (size_t i = 0; i < hist.bins.size(); ++i)
        out << (i + 1) << "," << hist.bins[i] << "\n";
}

inline void write_fitted_csv(const std::string& path, const FittedSeries& fs) {
    auto out = detail::open_out(path);
    out << "t,yhat";
    for (int k = 1; k <= fs.K; ++k) out << ",pi" << k;
    out << "\n";
    const int n = static_cast<int>(fs.yhat.size());
    for (int t = 0; t < n; ++t) {
        out << (t + 1) << "," << fs.yhat[static_cast<size_t>(t)];
        for (int k = 0; k < fs.K; ++k)
            out << "," << fs.pi[static_cast<size_t>(t) * fs.K + k];
        out << "\n";
    }
}

inline void write_power_csv(const std::string& path, const std::vector<PowerResult>& rows) {
    auto out = detail::open_out(path);
    out << "scenario,delta,replicates,excluded,rejections,successes,power\n";
    for (const auto& r : rows)
        out << r.scenario << "," << r.delta << "," << r.replicates << "," << r.excluded
            << "," << r.rejections << "," << r.successes << "," << r.power << "\n";
}

inline void write_series_csv(const std::string& path, const OrdinalSeries& series) {
    auto out = detail::open_out(path);
    out << "timestamp,category\n";
    for (int t = 1; t <= series.n(); ++t) out << t << "," << series[t] << "\n";
}

inline void write_ga_trace_csv(const std::string& path,
                               const std::vector<GaTraceEntry>& trace) {
    auto out = detail::open_out(path);
    out << "migration,best_tau,best_fitness,evaluations\n";
    for (const auto& e : trace)
        out << e.migration << "," << e.best_tau << "," << e.best_fitness << ","
            << e.evaluations << "\n";
}

// ---------------------------------------------------------------------------
// JSON reports
// ---------------------------------------------------------------------------

constexpr int kReportSchemaVersion = 1;

inline nlohmann::json config_json(const ModelConfig& cfg) {
    nlohmann::json j{{"K", cfg.K},         {"n", cfg.n},
                     {"T", cfg.T},         {"harmonics", cfg.harmonics},
                     {"trend", cfg.trend}, {"trunc_lo", cfg.trunc_lo},
                     {"trunc_hi", cfg.trunc_hi}};
    if (cfg.changepoint) j["changepoint"] = *cfg.changepoint;
    return j;
}

/// Parameter names in flattening order: theta blocks then xi entries.
inline std::vector<std::string> parameter_names(const ModelConfig& cfg) {
    std::vector<std::string> names;
    const int km1 = cfg.K - 1;
    auto block = [&](const std::string& stem) {
        for (int k = 1; k <= km1; ++k) names.push_back(stem + "_" + std::to_string(k));
    };
    block("alpha");
    for (int h = 1; h <= cfg.harmonics; ++h) {
        block("B" + std::to_string(h));
        block("D" + std::to_string(h));
    }
    if (cfg.trend) block("beta");
    if (cfg.changepoint) block("Delta");
    for (int k = 1; k <= km1; ++k)
        for (int j = 1; j <= km1; ++j)
            names.push_back("xi_" + std::to_string(k) + "_" + std::to_string(j));
    return names;
}

/// Wald table in the estimates + CI layout, with a `significant` flag at the
/// configured level in place of typographic emphasis.
inline nlohmann::json wald_table_json(const ModelConfig& cfg, const WaldInference& w) {
    std::vector<std::string> names = parameter_names(cfg);
    if (names.size() != w.estimate.size())
        throw data_error("wald_table_json: name/estimate length mismatch");
    nlohmann::json rows = nlohmann::json::array();
    for (size_t i = 0; i < names.size(); ++i) {
        bool sig = w.ci_lower[i] > 0.0 || w.ci_upper[i] < 0.0;
        rows.push_back({{"parameter", names[i]},
                        {"estimate", w.estimate[i]},
                        {"se", w.se[i]},
                        {"ci_lower", w.ci_lower[i]},
                        {"ci_upper", w.ci_upper[i]},
                        {"significant", sig}});
    }
    return {{"level", w.level}, {"rows", rows}};
}

inline nlohmann::json fit_json(const ModelConfig& cfg, const FitResult& fit) {
    nlohmann::json j{{"config", config_json(cfg)},
                     {"loglik", fit.loglik},
                     {"converged", fit.converged},
                     {"outer_iters", fit.outer_iters}};
    if (fit.inference) j["wald"] = wald_table_json(cfg, *fit.inference);
    return j;
}

inline nlohmann::json test_report_json(const ModelConfig& cfg, const ChangepointReport& rep) {
    ModelConfig null_cfg = cfg.without_changepoint();
    ModelConfig alt_cfg = null_cfg.with_changepoint(rep.tau_hat);
    nlohmann::json j{{"schema_version", kReportSchemaVersion},
                     {"config", config_json(null_cfg)},
                     {"lambda_max", rep.lambda_max},
                     {"tau_hat", rep.tau_hat},
                     {"critical_value", rep.critical.value},
                     {"critical_provenance", rep.critical.provenance},
                     {"reject", rep.reject},
                     {"evaluated_taus", rep.taus.size()},
                     {"failed_taus", rep.failed_taus},
                     {"null_fit", fit_json(null_cfg, rep.null_fit)},
                     {"alt_fit", fit_json(alt_cfg, rep.alt_fit)}};
    return j;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
    auto out = detail::open_out(path);
    out << j.dump(2) << "\n";
}

}  // namespace mtm

#endif  // MTM_IO_HPP
