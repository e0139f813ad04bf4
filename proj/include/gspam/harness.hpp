#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gspam/model.hpp"
#include "gspam/recovery.hpp"

namespace gspam {

using nlohmann::json;

/// One experiment cell: a benchmark, its dimensions, noise handling, constants
/// and trial count, plus optional sweep axes.
struct RunConfig {
    std::string benchmark = "f1";
    int d = 500;
    int T = 1;
    int trials = 5;
    std::uint64_t seed = 1;
    std::uint64_t coeff_seed = 7;
    double enlargement = 0.1;

    std::string noise_mode = "none";  // none | bounded | gaussian | adversarial
    double sigma2 = 0.0;
    double epsilon = 0.0;
    std::optional<std::pair<int, int>> resamples;  // pinned (N1, N2)
    bool derive_resamples = false;
    double p1 = 0.01, p2 = 0.01;
    double eps_fraction = 0.5;

    double c_tilde = 5.6;
    bool c_tilde_from_benchmark = true;  // use the benchmark default unless set
    RecoveryConstants constants;
    std::string solver = "hard_threshold";

    // Problem-parameter overrides (defaults come from the benchmark).
    std::optional<double> lambda1, lambda2, d1, d2, b3;
    std::optional<int> k_upper, rho_upper;

    std::string out_dir = "out";

    // Sweep axes.
    std::vector<double> ctilde_values;
    std::vector<int> d_values;
    std::vector<int> t_values;
    struct NoiseCell {
        double sigma2 = 0.0;
        int n1 = 1, n2 = 1;
    };
    std::vector<NoiseCell> noise_values;
};

namespace detail {

template <class T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config field '") + key + "': " + e.what());
        }
    }
}

template <class T>
void require_sorted(const std::vector<T>& v, const char* what) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i - 1] < v[i])) throw ConfigError(std::string(what) + " must be sorted ascending");
}

}  // namespace detail

inline RunConfig parse_run_config(const json& j) {
    RunConfig c;
    detail::read_field(j, "benchmark", c.benchmark);
    detail::read_field(j, "d", c.d);
    detail::read_field(j, "T", c.T);
    detail::read_field(j, "trials", c.trials);
    detail::read_field(j, "seed", c.seed);
    detail::read_field(j, "coeff_seed", c.coeff_seed);
    detail::read_field(j, "enlargement", c.enlargement);
    detail::read_field(j, "eps_fraction", c.eps_fraction);
    detail::read_field(j, "solver", c.solver);
    detail::read_field(j, "out", c.out_dir);
    if (j.contains("ctilde")) {
        c.c_tilde = j.at("ctilde").get<double>();
        c.c_tilde_from_benchmark = false;
    }
    if (j.contains("noise")) {
        const json& n = j.at("noise");
        detail::read_field(n, "mode", c.noise_mode);
        detail::read_field(n, "sigma2", c.sigma2);
        detail::read_field(n, "epsilon", c.epsilon);
        detail::read_field(n, "derive_resamples", c.derive_resamples);
        detail::read_field(n, "p1", c.p1);
        detail::read_field(n, "p2", c.p2);
        if (n.contains("N1") != n.contains("N2"))
            throw ConfigError("config field 'noise': N1 and N2 must be given together");
        if (n.contains("N1")) c.resamples = {n.at("N1").get<int>(), n.at("N2").get<int>()};
    }
    if (j.contains("constants")) {
        const json& k = j.at("constants");
        detail::read_field(k, "c1", c.constants.c1);
        detail::read_field(k, "c2", c.constants.c2);
        detail::read_field(k, "c3", c.constants.c3);
        detail::read_field(k, "c_prime", c.constants.hash_c_prime);
    }
    if (j.contains("overrides")) {
        const json& o = j.at("overrides");
        auto opt = [&](const char* key, auto& slot) {
            if (o.contains(key)) slot = o.at(key).get<typename std::decay_t<decltype(slot)>::value_type>();
        };
        opt("lambda1", c.lambda1);
        opt("lambda2", c.lambda2);
        opt("D1", c.d1);
        opt("D2", c.d2);
        opt("B3", c.b3);
        opt("k_upper", c.k_upper);
        opt("rho_upper", c.rho_upper);
    }
    detail::read_field(j, "ctilde_values", c.ctilde_values);
    detail::read_field(j, "d_values", c.d_values);
    detail::read_field(j, "T_values", c.t_values);
    if (j.contains("noise_values")) {
        for (const json& n : j.at("noise_values")) {
            RunConfig::NoiseCell cell;
            cell.sigma2 = n.at("sigma2").get<double>();
            cell.n1 = n.value("N1", 1);
            cell.n2 = n.value("N2", 1);
            c.noise_values.push_back(cell);
        }
    }
    detail::require_sorted(c.ctilde_values, "ctilde_values");
    detail::require_sorted(c.d_values, "d_values");
    detail::require_sorted(c.t_values, "T_values");

    if (c.trials < 1) throw ConfigError("trials must be >= 1");
    if (c.noise_mode != "none" && c.noise_mode != "bounded" && c.noise_mode != "gaussian" &&
        c.noise_mode != "adversarial")
        throw ConfigError("unknown noise mode: " + c.noise_mode);
    if (c.solver != "hard_threshold" && c.solver != "l1")
        throw ConfigError("unknown solver: " + c.solver);
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return parse_run_config(j);
}

struct TrialResult {
    int trial = 0;
    std::uint64_t seed = 0;
    bool success = false;
    std::uint64_t queries = 0;
    double wall_ms = 0.0;  // reported separately; not part of the deterministic report
    std::string error;
    SupportEstimate estimate;
};

struct RunReport {
    RunConfig config;
    std::string benchmark;
    int d = 0, T = 0;
    int true_k = 0, true_rho = 0;
    double c_tilde = 0.0;
    std::vector<TrialResult> trials;
    double success_rate = 0.0;
    double mean_queries = 0.0;
};

namespace detail {

inline NoiseSpec noise_from_config(const RunConfig& c) {
    if (c.noise_mode == "none") return NoiseSpec::none();
    if (c.noise_mode == "bounded") return NoiseSpec::bounded(c.epsilon);
    if (c.noise_mode == "adversarial") return NoiseSpec::adversarial(c.epsilon);
    return NoiseSpec::gaussian(c.sigma2);
}

inline Benchmark benchmark_from_config(const RunConfig& c) {
    Benchmark bench = make_benchmark(c.benchmark, c.d, c.T, c.coeff_seed, c.enlargement);
    if (c.lambda1) bench.params.lambda1 = *c.lambda1;
    if (c.lambda2) bench.params.lambda2 = *c.lambda2;
    if (c.d1) bench.params.d1 = *c.d1;
    if (c.d2) bench.params.d2 = *c.d2;
    if (c.b3) bench.params.b3 = *c.b3;
    if (c.k_upper) bench.params.k_upper = *c.k_upper;
    if (c.rho_upper) bench.params.rho_upper = *c.rho_upper;
    bench.params.validate();
    return bench;
}

}  // namespace detail

/// Runs one experiment cell: `trials` independent recoveries of the configured
/// benchmark. Per-trial failures (infeasible parameters, solver trouble) are
/// recorded, not thrown; configuration errors throw before any query.
inline RunReport run_recover(const RunConfig& config) {
    Benchmark bench = detail::benchmark_from_config(config);
    RunReport report;
    report.config = config;
    report.benchmark = config.benchmark;
    report.d = config.d;
    report.T = config.T;
    report.true_k = bench.model.sparsity();
    report.true_rho = bench.model.rho_max();
    report.c_tilde = config.c_tilde_from_benchmark ? bench.suggested_c_tilde : config.c_tilde;

    int successes = 0;
    double query_sum = 0.0;
    for (int t = 0; t < config.trials; ++t) {
        TrialResult trial;
        trial.trial = t;
        trial.seed = rng::child_seed(config.seed, static_cast<std::uint64_t>(t));
        QueryOracle oracle(bench.model, detail::noise_from_config(config),
                           rng::child_seed(trial.seed, 1));
        RecoverySettings settings;
        settings.constants = config.constants;
        settings.constants.c_tilde = report.c_tilde;
        settings.solver =
            config.solver == "l1" ? RecoveryMode::l1_equality : RecoveryMode::hard_threshold;
        settings.eps_fraction = config.eps_fraction;
        settings.resamples = config.resamples;
        settings.p1 = config.p1;
        settings.p2 = config.p2;
        settings.seed = rng::child_seed(trial.seed, 2);

        auto t0 = std::chrono::steady_clock::now();
        try {
            trial.estimate = recover_supports(oracle, bench.params, settings);
            trial.success =
                trial.estimate.s1 == bench.model.s1 && trial.estimate.s2 == bench.model.s2;
        } catch (const Error& e) {
            trial.success = false;
            trial.error = e.what();
        }
        trial.queries = oracle.query_count();
        trial.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        successes += trial.success;
        query_sum += static_cast<double>(trial.queries);
        report.trials.push_back(std::move(trial));
    }
    report.success_rate = static_cast<double>(successes) / config.trials;
    report.mean_queries = query_sum / config.trials;
    return report;
}

// ---------------------------------------------------------------------------
// Report serialization (deterministic; timings go to a separate sidecar)
// ---------------------------------------------------------------------------

inline json params_to_json(const RecoveryParams& p) {
    return json{{"pair_grid_res", p.pair_grid_res},
                {"diag_grid_res", p.diag_grid_res},
                {"n_grad_meas", p.n_grad_meas},
                {"n_hess_meas", p.n_hess_meas},
                {"n_uni_meas", p.n_uni_meas},
                {"grad_step", p.grad_step},
                {"hess_step", p.hess_step},
                {"uni_step", p.uni_step},
                {"pair_threshold", p.pair_threshold},
                {"uni_threshold", p.uni_threshold},
                {"noise_bound_pairs", p.noise_bound_pairs},
                {"noise_bound_uni", p.noise_bound_uni},
                {"N1", p.pair_resamples},
                {"N2", p.uni_resamples},
                {"hash_size", p.hash_size}};
}

inline json report_to_json(const RunReport& r) {
    json trials = json::array();
    for (const auto& t : r.trials) {
        json s2 = json::array();
        for (const auto& [l, lp] : t.estimate.s2) s2.push_back(json::array({l, lp}));
        trials.push_back(json{{"trial", t.trial},
                              {"seed", t.seed},
                              {"success", t.success},
                              {"queries", t.queries},
                              {"error", t.error},
                              {"s1", json(t.estimate.s1)},
                              {"s2", s2},
                              {"params", params_to_json(t.estimate.params)}});
    }
    return json{{"benchmark", r.benchmark}, {"d", r.d},
                {"T", r.T},                 {"k", r.true_k},
                {"rho", r.true_rho},        {"ctilde", r.c_tilde},
                {"trials", trials},         {"success_rate", r.success_rate},
                {"mean_queries", r.mean_queries}};
}

inline std::string trials_csv_header() {
    return "benchmark,d,T,k,rho,ctilde,noise_mode,sigma2,epsilon,N1,N2,trial,success,queries,s1_hat,"
           "s2_hat,error";
}

inline void append_trials_csv(std::ostream& os, const RunReport& r) {
    for (const auto& t : r.trials) {
        std::ostringstream s1s, s2s;
        bool first = true;
        for (int v : t.estimate.s1) {
            if (!first) s1s << ';';
            s1s << v;
            first = false;
        }
        first = true;
        for (const auto& [l, lp] : t.estimate.s2) {
            if (!first) s2s << ';';
            s2s << l << '-' << lp;
            first = false;
        }
        std::string error = t.error;
        for (char& ch : error)
            if (ch == ',' || ch == '\n') ch = ';';
        os << r.benchmark << ',' << r.d << ',' << r.T << ',' << r.true_k << ',' << r.true_rho << ','
           << r.c_tilde << ',' << r.config.noise_mode << ',' << r.config.sigma2 << ','
           << r.config.epsilon << ',' << t.estimate.params.pair_resamples << ','
           << t.estimate.params.uni_resamples << ',' << t.trial << ',' << (t.success ? 1 : 0) << ','
           << t.queries << ',' << s1s.str() << ',' << s2s.str() << ',' << error << '\n';
    }
}

inline void write_timings_csv(std::ostream& os, const std::vector<RunReport>& reports) {
    os << "benchmark,d,T,ctilde,trial,wall_ms\n";
    for (const auto& r : reports)
        for (const auto& t : r.trials)
            os << r.benchmark << ',' << r.d << ',' << r.T << ',' << r.c_tilde << ',' << t.trial << ','
               << t.wall_ms << '\n';
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

enum class SweepAxis { ctilde, dimension, sparsity, degree, noise };

inline SweepAxis parse_axis(const std::string& name) {
    if (name == "ctilde") return SweepAxis::ctilde;
    if (name == "d") return SweepAxis::dimension;
    if (name == "k") return SweepAxis::sparsity;
    if (name == "rho") return SweepAxis::degree;
    if (name == "noise") return SweepAxis::noise;
    throw ConfigError("unknown sweep axis: " + name);
}

struct SweepCell {
    double axis_value = 0.0;
    RunReport report;
};

struct SweepResult {
    SweepAxis axis;
    std::vector<SweepCell> cells;
};

/// One run_recover per axis value. The axis determines which config field the
/// values replace; `k` and `rho` sweeps walk the benchmark's T parameter and
/// record the realized sparsity / degree.
inline SweepResult run_sweep(const RunConfig& base, SweepAxis axis) {
    SweepResult result;
    result.axis = axis;
    auto run_cell = [&](const RunConfig& cfg, double axis_value) {
        SweepCell cell;
        cell.axis_value = axis_value;
        cell.report = run_recover(cfg);
        if (axis == SweepAxis::sparsity) cell.axis_value = cell.report.true_k;
        if (axis == SweepAxis::degree) cell.axis_value = cell.report.true_rho;
        result.cells.push_back(std::move(cell));
    };
    switch (axis) {
        case SweepAxis::ctilde: {
            if (base.ctilde_values.empty()) throw ConfigError("ctilde sweep needs ctilde_values");
            for (double v : base.ctilde_values) {
                RunConfig cfg = base;
                cfg.c_tilde = v;
                cfg.c_tilde_from_benchmark = false;
                run_cell(cfg, v);
            }
            break;
        }
        case SweepAxis::dimension: {
            if (base.d_values.empty()) throw ConfigError("d sweep needs d_values");
            for (int v : base.d_values) {
                RunConfig cfg = base;
                cfg.d = v;
                run_cell(cfg, v);
            }
            break;
        }
        case SweepAxis::sparsity:
        case SweepAxis::degree: {
            if (base.t_values.empty()) throw ConfigError("k/rho sweep needs T_values");
            for (int v : base.t_values) {
                RunConfig cfg = base;
                cfg.T = v;
                run_cell(cfg, v);
            }
            break;
        }
        case SweepAxis::noise: {
            if (base.noise_values.empty()) throw ConfigError("noise sweep needs noise_values");
            for (const auto& cellcfg : base.noise_values) {
                RunConfig cfg = base;
                cfg.noise_mode = "gaussian";
                cfg.sigma2 = cellcfg.sigma2;
                cfg.resamples = {cellcfg.n1, cellcfg.n2};
                run_cell(cfg, cellcfg.sigma2);
            }
            break;
        }
    }
    return result;
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& sweep) {
    os << "axis_value,trials,success_rate,mean_queries\n";
    for (const auto& c : sweep.cells)
        os << c.axis_value << ',' << c.report.trials.size() << ',' << c.report.success_rate << ','
           << c.report.mean_queries << '\n';
}

/// Self-contained line chart of the sweep aggregates: success rate on the left
/// scale, mean queries normalized on the right.
inline void write_sweep_svg(std::ostream& os, const SweepResult& sweep, const std::string& title) {
    const int W = 640, H = 400, ML = 60, MR = 60, MT = 40, MB = 50;
    const auto& cells = sweep.cells;
    double xmin = cells.front().axis_value, xmax = cells.back().axis_value;
    if (xmax <= xmin) xmax = xmin + 1;
    double qmax = 1.0;
    for (const auto& c : cells) qmax = std::max(qmax, c.report.mean_queries);
    auto px = [&](double x) { return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR); };
    auto py_rate = [&](double v) { return H - MB - v * (H - MT - MB); };
    auto py_q = [&](double v) { return H - MB - v / qmax * (H - MT - MB); };

    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    os << "<rect width='" << W << "' height='" << H << "' fill='white'/>\n";
    os << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
       << "</text>\n";
    os << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
       << "' stroke='black'/>\n";
    os << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
       << "' stroke='black'/>\n";
    os << "<text x='" << ML << "' y='" << H - MB + 20 << "' font-size='11'>" << xmin << "</text>\n";
    os << "<text x='" << W - MR << "' y='" << H - MB + 20 << "' text-anchor='end' font-size='11'>"
       << xmax << "</text>\n";
    os << "<text x='" << ML - 8 << "' y='" << py_rate(1.0) << "' text-anchor='end' font-size='11'>1"
       << "</text>\n";
    os << "<text x='" << ML - 8 << "' y='" << py_rate(0.0) << "' text-anchor='end' font-size='11'>0"
       << "</text>\n";
    os << "<text x='" << W - MR + 8 << "' y='" << py_q(qmax) << "' font-size='11'>" << qmax
       << " queries</text>\n";
    auto polyline = [&](const char* color, auto&& ycoord) {
        os << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
        for (const auto& c : cells) os << px(c.axis_value) << ',' << ycoord(c) << ' ';
        os << "'/>\n";
    };
    polyline("steelblue", [&](const SweepCell& c) { return py_rate(c.report.success_rate); });
    polyline("darkorange", [&](const SweepCell& c) { return py_q(c.report.mean_queries); });
    os << "<text x='" << ML + 6 << "' y='" << MT + 14
       << "' font-size='11' fill='steelblue'>success rate</text>\n";
    os << "<text x='" << ML + 6 << "' y='" << MT + 28
       << "' font-size='11' fill='darkorange'>mean queries</text>\n";
    os << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Output directory plumbing
// ---------------------------------------------------------------------------

inline void write_recover_outputs(const RunReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream out(dir + "/report.json");
        out << report_to_json(report).dump(2) << '\n';
    }
    {
        std::ofstream out(dir + "/trials.csv");
        out << trials_csv_header() << '\n';
        append_trials_csv(out, report);
    }
    {
        std::ofstream out(dir + "/timings.csv");
        write_timings_csv(out, {report});
    }
}

inline void write_sweep_outputs(const SweepResult& sweep, const RunConfig& base,
                                const std::string& axis_name, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream out(dir + "/sweep.csv");
        write_sweep_csv(out, sweep);
    }
    {
        std::ofstream out(dir + "/trials.csv");
        out << trials_csv_header() << '\n';
        for (const auto& c : sweep.cells) append_trials_csv(out, c.report);
    }
    {
        std::ofstream out(dir + "/chart.svg");
        write_sweep_svg(out, sweep, base.benchmark + " vs " + axis_name);
    }
    {
        std::vector<RunReport> reports;
        for (const auto& c : sweep.cells) reports.push_back(c.report);
        std::ofstream out(dir + "/timings.csv");
        write_timings_csv(out, reports);
    }
}

}  // namespace gspam
