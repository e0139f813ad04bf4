// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exit code 0 only if all pass.

#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "gspam/components.hpp"
#include "gspam/harness.hpp"
#include "gspam/quadrature.hpp"
#include "gspam/recovery.hpp"

using namespace gspam;

namespace {

int g_failures = 0;

void report(int number, bool pass, const std::string& text) {
    std::printf("[%s] %2d. %s\n", pass ? "PASS" : "FAIL", number, text.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof buf, f, args);
    va_end(args);
    return buf;
}

RunConfig base_config(const std::string& bench, int d, int trials, std::uint64_t seed) {
    RunConfig c;
    c.benchmark = bench;
    c.d = d;
    c.trials = trials;
    c.seed = seed;
    return c;
}

struct LineFit {
    double slope = 0, r2 = 0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const int n = static_cast<int>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (int i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
        syy += y[i] * y[i];
    }
    LineFit f;
    double den = n * sxx - sx * sx;
    f.slope = (n * sxy - sx * sy) / den;
    double intercept = (sy - f.slope * sx) / n;
    double ss_tot = syy - sy * sy / n, ss_res = 0;
    for (int i = 0; i < n; ++i) {
        double e = y[i] - (intercept + f.slope * x[i]);
        ss_res += e * e;
    }
    f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return f;
}

}  // namespace

int main() {
    // ---- criteria 1 and 3 share the noiseless f1 dimension scan ----
    std::map<int, RunReport> f1_noiseless;
    {
        bool pass = true;
        std::string detail = "exact-recovery phase transition (f1 noiseless, 5 trials)";
        for (int d : {100, 500, 1000}) {
            RunReport r = run_recover(base_config("f1", d, 5, 1000 + d));
            pass = pass && r.success_rate >= 0.8;
            detail += fmt(" d=%d:%.2f", d, r.success_rate);
            f1_noiseless.emplace(d, std::move(r));
        }
        RunConfig f2lo = base_config("f2", 100, 5, 77);
        f2lo.c_tilde = 1.0;
        f2lo.c_tilde_from_benchmark = false;
        RunConfig f2mid = base_config("f2", 100, 5, 77);
        f2mid.c_tilde = 2.0;
        f2mid.c_tilde_from_benchmark = false;
        RunConfig f2hi = base_config("f2", 100, 5, 77);
        RunReport rlo = run_recover(f2lo);
        RunReport rmid = run_recover(f2mid);
        RunReport rhi = run_recover(f2hi);
        pass = pass && rlo.success_rate < rhi.success_rate;
        detail += fmt("; f2 rate@1.0=%.2f < rate@5.6=%.2f (rate@2.0=%.2f)", rlo.success_rate,
                      rhi.success_rate, rmid.success_rate);
        report(1, pass, detail);
    }

    // ---- criterion 2: gaussian noise with the tabulated resampling pairs ----
    {
        const double noiseless_queries = f1_noiseless.at(500).mean_queries;
        struct Cell {
            double sigma2;
            int n1, n2;
        };
        bool pass = true;
        std::string detail = "gaussian-noise recovery (f1, d=500, 5 trials)";
        for (Cell cell : {Cell{1e-4, 50, 20}, Cell{1e-3, 85, 36}, Cell{1e-2, 90, 40}}) {
            RunConfig c = base_config("f1", 500, 5, 2300 + cell.n1);
            c.noise_mode = "gaussian";
            c.sigma2 = cell.sigma2;
            c.resamples = {{cell.n1, cell.n2}};
            RunReport r = run_recover(c);
            double ratio = r.mean_queries / noiseless_queries;
            bool ok = r.success_rate >= 0.8 && ratio >= 30.0 && ratio <= 300.0;
            pass = pass && ok;
            detail += fmt(" s2=%.0e:rate=%.2f,x%.0f", cell.sigma2, r.success_rate, ratio);
        }
        report(2, pass, detail);
    }

    // ---- criterion 3: query growth in d ----
    {
        double ratio = f1_noiseless.at(1000).mean_queries / f1_noiseless.at(100).mean_queries;
        double bound = 1.5 * std::pow(std::log(1000.0) / std::log(100.0), 3);
        report(3, ratio <= bound,
               fmt("query scaling in d: queries(1000)/queries(100) = %.2f <= %.2f", ratio, bound));
    }

    // ---- criterion 4: query scaling in k on f3 ----
    {
        std::vector<double> xs, ys;
        for (int T = 1; T <= 10; ++T) {
            RunConfig c = base_config("f3", 500, 2, 3100 + T);
            c.T = T;
            RunReport r = run_recover(c);
            double k = r.true_k;
            xs.push_back(k * std::log(500.0 / k));
            ys.push_back(r.mean_queries);
        }
        LineFit f = fit_line(xs, ys);
        report(4, f.r2 >= 0.95,
               fmt("query scaling in k (f3, d=500, T=1..10, 2 trials): R^2 = %.4f >= 0.95", f.r2));
    }

    // ---- criterion 5: query scaling in rho on f4 ----
    {
        std::vector<double> xs, ys;
        for (int T = 2; T <= 10; ++T) {
            RunConfig c = base_config("f4", 500, 2, 3200 + T);
            c.T = T;
            RunReport r = run_recover(c);
            double rho = r.true_rho;
            xs.push_back(rho * std::log(500.0 / rho));
            ys.push_back(r.mean_queries);
        }
        LineFit f = fit_line(xs, ys);
        report(5, f.r2 >= 0.95,
               fmt("query scaling in rho (f4, d=500, T=2..10, 2 trials): R^2 = %.4f >= 0.95", f.r2));
    }

    // ---- criterion 6: solver matches the exhaustive oracle ----
    {
        std::mt19937_64 eng(4242);
        std::normal_distribution<double> nrm(0.0, 1.0);
        int support_matches = 0;
        double worst_value_err = 0.0;
        for (int t = 0; t < 100; ++t) {
            auto V = draw_ensemble(12, 20, 9000 + t);
            Eigen::VectorXd w = Eigen::VectorXd::Zero(20);
            int i = static_cast<int>(eng() % 20);
            int j = (i + 1 + static_cast<int>(eng() % 19)) % 20;
            auto draw = [&] {
                double v = nrm(eng);
                return v + (v >= 0 ? 1.0 : -1.0);
            };
            w(i) = draw();
            w(j) = draw();
            Eigen::VectorXd y = V.mat * w;
            Eigen::VectorXd z = sparse_recover(V, y, 2, RecoveryMode::hard_threshold);

            // exhaustive oracle
            Eigen::VectorXd best = Eigen::VectorXd::Zero(20);
            double best_res = y.norm();
            for (int a = 0; a < 20; ++a)
                for (int b = a + 1; b < 20; ++b) {
                    Eigen::MatrixXd sub(12, 2);
                    sub.col(0) = V.mat.col(a);
                    sub.col(1) = V.mat.col(b);
                    Eigen::Vector2d coef = sub.colPivHouseholderQr().solve(y);
                    double res = (y - sub * coef).norm();
                    if (res < best_res) {
                        best_res = res;
                        best.setZero();
                        best(a) = coef(0);
                        best(b) = coef(1);
                    }
                }
            bool same_support = true;
            for (int q = 0; q < 20; ++q)
                if ((z(q) != 0.0) != (best(q) != 0.0)) same_support = false;
            if (same_support) {
                ++support_matches;
                worst_value_err = std::max(worst_value_err, (z - best).lpNorm<Eigen::Infinity>());
            }
        }
        bool pass = support_matches >= 99 && worst_value_err <= 1e-6;
        report(6, pass,
               fmt("solver vs exhaustive oracle: support match %d/100, value err %.2e", support_matches,
                   worst_value_err));
    }

    // ---- criterion 7: exactness invariants ----
    {
        auto bench = make_benchmark("f1", 100);
        QueryOracle oracle(bench.model, NoiseSpec::none(), 7001);
        auto params = derive_params_noiseless(bench.params, 100);
        auto family = build_hash_family(100, default_family_size(100), 7002);
        auto V = draw_ensemble(params.n_grad_meas, 100, 7003);
        auto Vp = draw_ensemble(params.n_hess_meas, 100, 7004);

        // central differences on the degree-2 benchmark are exact
        double cd_err = 0.0;
        std::mt19937_64 eng(7005);
        std::uniform_real_distribution<double> u(-0.9, 0.9);
        NoiseStream ns = oracle.stream(0);
        for (int t = 0; t < 10; ++t) {
            std::vector<double> x(100, 0.0);
            for (int q = 0; q < 100; ++q) x[q] = u(eng);
            auto mv = gradient_measurements(oracle, x, V, params.grad_step, nullptr, 1, ns);
            Eigen::VectorXd g = Eigen::VectorXd::Zero(100);
            g(0) = 2;
            g(1) = -6 * x[1];
            g(2) = 4 * x[3];
            g(3) = 4 * x[2] - 5 * x[4];
            g(4) = -5 * x[3];
            cd_err = std::max(cd_err, (mv.values - V.mat * g).lpNorm<Eigen::Infinity>());
        }

        // Hessian rows exactly recovered at every grid point
        double active_err = 0.0, inactive_max = 0.0;
        SampleGrid grid = combined_pair_grid(family, params.pair_grid_res);
        for (const auto& x : grid.points) {
            auto y0 = gradient_measurements(oracle, x, V, params.grad_step, nullptr, 1, ns);
            Eigen::VectorXd g0 = sparse_recover(V, y0.values, params.grad_budget,
                                                RecoveryMode::hard_threshold);
            std::vector<Eigen::VectorXd> offsets(params.n_hess_meas);
            std::vector<double> shifted(x.size());
            for (int p = 0; p < params.n_hess_meas; ++p) {
                for (int q = 0; q < 100; ++q) shifted[q] = x[q] + params.hess_step * Vp.mat(p, q);
                auto yp = gradient_measurements(oracle, shifted, V, params.grad_step, nullptr, 1, ns);
                offsets[p] =
                    sparse_recover(V, yp.values, params.grad_budget, RecoveryMode::hard_threshold);
            }
            for (int q = 1; q <= 100; ++q) {
                auto yq = hessian_row_measurements(g0, offsets, params.hess_step, q);
                Eigen::VectorXd row = Eigen::VectorXd::Zero(100);
                if (yq.values.norm() >= 0.25 * params.pair_threshold)
                    row = sparse_recover(Vp, yq.values, params.row_budget,
                                         RecoveryMode::hard_threshold);
                Eigen::VectorXd truth = Eigen::VectorXd::Zero(100);
                if (q == 2) truth(1) = -6;  // diagonal of the quadratic term
                if (q == 3) truth(3) = 4;
                if (q == 4) {
                    truth(2) = 4;
                    truth(4) = -5;
                }
                if (q == 5) truth(3) = -5;
                if (q > 5)
                    inactive_max = std::max(inactive_max, row.lpNorm<Eigen::Infinity>());
                else
                    active_err = std::max(active_err, (row - truth).lpNorm<Eigen::Infinity>());
            }
        }
        bool pass = cd_err <= 1e-12 && active_err <= 1e-6 && inactive_max <= params.pair_threshold / 10;
        report(7, pass,
               fmt("exactness: central-diff err %.1e <= 1e-12, hessian row err %.1e <= 1e-6, "
                   "inactive rows %.1e <= tau'/10=%.2e",
                   cd_err, active_err, inactive_max, params.pair_threshold / 10));
    }

    // ---- criterion 8: hash-family certificates and sizes ----
    {
        bool pass = true;
        std::string detail = "hash families (C'=1.7):";
        for (int d : {100, 500, 1000}) {
            int size = default_family_size(d, 1.7);
            auto fam = build_hash_family(d, size, 8000 + d);
            bool sep = fam.separates_all_pairs();
            pass = pass && sep && size >= 8 && size <= 12;
            detail += fmt(" d=%d:|H|=%d,%s", d, size, sep ? "certified" : "FAILED");
        }
        report(8, pass, detail);
    }

    // ---- criterion 9: component estimation rates ----
    {
        auto bench = make_benchmark("f2", 8);
        QueryOracle oracle(bench.model, NoiseSpec::none(), 9001);
        Curve truth = [](double x) { return 10 * std::sin(M_PI * x); };
        std::vector<double> log_n, log_err;
        std::vector<int> ns{8, 16, 32, 64};
        std::vector<double> errs;
        for (int n : ns) {
            auto est = estimate_component(oracle, ComponentTarget::univariate(1), n);
            double err = sup_error(est, truth, 512);
            errs.push_back(err);
            log_n.push_back(std::log(static_cast<double>(n)));
            log_err.push_back(std::log(err));
        }
        LineFit f = fit_line(log_n, log_err);
        bool slope_ok = f.slope >= -3.7 && f.slope <= -2.3;

        QueryOracle noisy(bench.model, NoiseSpec::bounded(0.05), 9002);
        double shift = 0.0;
        for (std::size_t i = 2; i < ns.size(); ++i) {  // the plateau end of the curve
            auto est = estimate_component(noisy, ComponentTarget::univariate(1), ns[i]);
            shift = std::max(shift, sup_error(est, truth, 512) - errs[i]);
        }
        bool shift_ok = shift <= 0.2;
        report(9, slope_ok && shift_ok,
               fmt("component rates: log-log slope %.2f in [-3.7,-2.3], bounded-noise shift %.3f <= 0.2",
                   f.slope, shift));
    }

    // ---- criterion 10: centering and reconstruction ----
    {
        double worst_expect = 0.0;
        for (const char* name : {"f1", "f2"}) {
            auto bench = make_benchmark(name, 8);
            auto centered = center_components(bench.model, 64);
            for (const auto& [v, cf] : centered.univariates)
                worst_expect = std::max(worst_expect, std::abs(expect_uniform(cf.uni, 64)));
            for (const auto& [pr, cf] : centered.bivariates) {
                worst_expect = std::max(worst_expect, std::abs(expect_uniform2(cf.biv, 64)));
                if (centered.degree(pr.first) == 1)
                    for (double y : {-0.6, 0.3})
                        worst_expect = std::max(
                            worst_expect,
                            std::abs(expect_uniform([&, y](double x) { return cf.biv(x, y); }, 64)));
                if (centered.degree(pr.second) == 1)
                    for (double x : {-0.6, 0.3})
                        worst_expect = std::max(
                            worst_expect,
                            std::abs(expect_uniform([&, x](double y) { return cf.biv(x, y); }, 64)));
            }
        }

        auto bench = make_benchmark("f1", 10);
        QueryOracle oracle(bench.model, NoiseSpec::none(), 9003);
        std::vector<ComponentEstimate> parts;
        for (const auto& target : targets_from_support(bench.model.s1, bench.model.s2))
            parts.push_back(estimate_component(oracle, target, 16));
        double c = estimate_constant(oracle, parts, 256, 9004);
        std::mt19937_64 eng(9005);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        double worst_rebuild = 0.0;
        for (int t = 0; t < 50; ++t) {
            std::vector<double> x(10);
            for (double& v : x) v = u(eng);
            worst_rebuild = std::max(
                worst_rebuild, std::abs(c + evaluate_estimates(parts, x) - bench.model.evaluate(x)));
        }
        bool pass = worst_expect <= 1e-6 && worst_rebuild <= 1e-3;
        report(10, pass,
               fmt("anova centering: worst expectation %.1e <= 1e-6, f1 reconstruction err %.1e <= 1e-3",
                   worst_expect, worst_rebuild));
    }

    std::printf("%s: %d/10 criteria passed\n", g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED",
                10 - g_failures);
    return g_failures == 0 ? 0 : 1;
}
