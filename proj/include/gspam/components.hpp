#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "gspam/anova.hpp"
#include "gspam/errors.hpp"
#include "gspam/model.hpp"
#include "gspam/splines.hpp"

namespace gspam {

/// What to estimate: a lone univariate, an interaction surface, or the
/// marginal of a variable that appears in more than one pair.
struct ComponentTarget {
    enum class Kind { univariate, bivariate, marginal };
    Kind kind = Kind::univariate;
    int var = 0;    // univariate / marginal variable, or first pair member
    int var2 = 0;   // second pair member (bivariate only)
    int deg1 = 0;   // degree of var in s2 (bivariate centering case)
    int deg2 = 0;   // degree of var2
    std::vector<int> s2_vars;  // all interaction variables (marginal sampling)

    static ComponentTarget univariate(int var) { return {Kind::univariate, var, 0, 0, 0, {}}; }
    static ComponentTarget bivariate(int l, int lp, int deg_l, int deg_lp) {
        return {Kind::bivariate, l, lp, deg_l, deg_lp, {}};
    }
    static ComponentTarget marginal(int var, std::vector<int> s2vars) {
        return {Kind::marginal, var, 0, 0, 0, std::move(s2vars)};
    }
};

/// Query points spanning the subspace of a target. Univariate targets get n
/// equispaced points on the axis; bivariate and marginal targets get an n x n
/// grid (first-axis index outermost). Marginal grids move every other
/// interaction variable in lockstep on the second axis.
inline std::vector<std::vector<double>> sample_component_grid(const ComponentTarget& target, int n,
                                                              int d) {
    if (n < 2) throw ConfigError("component grid needs at least 2 points per axis");
    auto tick = [n](int i) { return -1.0 + 2.0 * i / (n - 1); };
    std::vector<std::vector<double>> pts;
    switch (target.kind) {
        case ComponentTarget::Kind::univariate: {
            if (target.var < 1 || target.var > d) throw ConfigError("unknown component target variable");
            pts.assign(n, std::vector<double>(d, 0.0));
            for (int i = 0; i < n; ++i) pts[i][target.var - 1] = tick(i);
            break;
        }
        case ComponentTarget::Kind::bivariate: {
            if (target.var < 1 || target.var2 < 1 || target.var >= target.var2 || target.var2 > d)
                throw ConfigError("unknown component target pair");
            pts.assign(static_cast<std::size_t>(n) * n, std::vector<double>(d, 0.0));
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    auto& x = pts[static_cast<std::size_t>(i) * n + j];
                    x[target.var - 1] = tick(i);
                    x[target.var2 - 1] = tick(j);
                }
            break;
        }
        case ComponentTarget::Kind::marginal: {
            if (target.var < 1 || target.var > d) throw ConfigError("unknown component target variable");
            if (target.s2_vars.empty()) throw ConfigError("marginal target needs the interaction variables");
            pts.assign(static_cast<std::size_t>(n) * n, std::vector<double>(d, 0.0));
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    auto& x = pts[static_cast<std::size_t>(i) * n + j];
                    for (int q : target.s2_vars) x[q - 1] = tick(j);
                    x[target.var - 1] = tick(i);
                }
            break;
        }
    }
    return pts;
}

/// A fitted, ANOVA-centered component.
struct ComponentEstimate {
    ComponentTarget target;
    int n_samples = 0;
    std::string centering;  // which centering rule was applied
    Curve curve;            // univariate / marginal result
    Surface surface;        // bivariate result
    std::vector<double> knots;       // per-axis sample locations
    std::vector<double> raw_values;  // fitted-object coefficients (sample layout)

    bool is_curve() const { return target.kind != ComponentTarget::Kind::bivariate; }

    double operator()(double x) const { return curve(x); }
    double operator()(double x, double y) const { return surface(x, y); }

    /// Knots and coefficients, one row per sample.
    void write_coefficients_csv(std::ostream& os) const {
        int n = static_cast<int>(knots.size());
        if (is_curve()) {
            os << "knot,coefficient\n";
            for (int i = 0; i < n; ++i) os << knots[i] << ',' << raw_values[i] << '\n';
        } else {
            os << "knot1,knot2,coefficient\n";
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    os << knots[i] << ',' << knots[j] << ','
                       << raw_values[static_cast<std::size_t>(i) * n + j] << '\n';
        }
    }

    /// Dense equispaced evaluation for plotting.
    void write_dense_csv(std::ostream& os, int grid_n = 128) const {
        auto tick = [grid_n](int i) { return -1.0 + 2.0 * i / (grid_n - 1); };
        if (is_curve()) {
            os << "x,value\n";
            for (int i = 0; i < grid_n; ++i) os << tick(i) << ',' << curve(tick(i)) << '\n';
        } else {
            os << "x,y,value\n";
            for (int i = 0; i < grid_n; ++i)
                for (int j = 0; j < grid_n; ++j)
                    os << tick(i) << ',' << tick(j) << ',' << surface(tick(i), tick(j)) << '\n';
        }
    }
};

/// Fits the raw samples (quasi-interpolant for noiseless or bounded noise,
/// degree-3 local polynomials for Gaussian noise) and applies the centering
/// rule of the target. `values` must follow the sample_component_grid layout.
inline ComponentEstimate fit_component(const ComponentTarget& target,
                                       const std::vector<std::vector<double>>& points,
                                       const std::vector<double>& values, NoiseSpec::Kind noise,
                                       int quad_n = 128) {
    if (points.size() != values.size() || values.empty()) throw ConfigError("sample size mismatch");
    const bool uni = target.kind == ComponentTarget::Kind::univariate;
    const int n = uni ? static_cast<int>(values.size())
                      : static_cast<int>(std::lround(std::sqrt(static_cast<double>(values.size()))));
    if (!uni && static_cast<std::size_t>(n) * n != values.size())
        throw ConfigError("bivariate samples must form a square grid");
    if (n < 4) throw ConfigError("too few samples per axis");

    ComponentEstimate est;
    est.target = target;
    est.n_samples = static_cast<int>(values.size());
    est.raw_values = values;
    est.knots.resize(n);
    for (int i = 0; i < n; ++i) est.knots[i] = -1.0 + 2.0 * i / (n - 1);
    for (int i = 1; i < n; ++i)
        if (!(est.knots[i] > est.knots[i - 1])) throw ConfigError("degenerate sample grid");

    const bool gaussian = noise == NoiseSpec::Kind::gaussian;
    if (uni) {
        Curve tilde;
        if (gaussian) {
            double h = std::pow(std::log(static_cast<double>(est.n_samples)) / est.n_samples, 1.0 / 7.0);
            tilde = LocalPoly1D(est.knots, values, h);
        } else {
            tilde = QuadraticSpline1D(values);
        }
        est.centering = "subtract E_p";
        est.curve = center_univariate(std::move(tilde), quad_n);
        return est;
    }

    Surface tilde;
    if (gaussian) {
        std::vector<double> xs(values.size()), ys(values.size());
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                xs[static_cast<std::size_t>(i) * n + j] = est.knots[i];
                ys[static_cast<std::size_t>(i) * n + j] = est.knots[j];
            }
        double h = std::pow(std::log(static_cast<double>(est.n_samples)) / est.n_samples, 1.0 / 8.0);
        tilde = LocalPoly2D(std::move(xs), std::move(ys), values, h);
    } else {
        tilde = QuadraticSpline2D(values, n);
    }

    if (target.kind == ComponentTarget::Kind::bivariate) {
        est.surface = center_bivariate(std::move(tilde), target.deg1, target.deg2, quad_n, &est.centering);
    } else {
        est.centering = "E_x minus E_(l,x)";
        est.curve = marginal_from_surface(std::move(tilde), quad_n);
    }
    return est;
}

/// Max absolute deviation between the estimate and a reference on a dense
/// equispaced grid.
inline double sup_error(const ComponentEstimate& est, const Curve& truth, int grid_n = 256) {
    if (!est.is_curve()) throw ConfigError("curve reference for a surface estimate");
    double worst = 0.0;
    for (int i = 0; i < grid_n; ++i) {
        double x = -1.0 + 2.0 * i / (grid_n - 1);
        worst = std::max(worst, std::abs(est.curve(x) - truth(x)));
    }
    return worst;
}

inline double sup_error(const ComponentEstimate& est, const Surface& truth, int grid_n = 64) {
    if (est.is_curve()) throw ConfigError("surface reference for a curve estimate");
    double worst = 0.0;
    for (int i = 0; i < grid_n; ++i)
        for (int j = 0; j < grid_n; ++j) {
            double x = -1.0 + 2.0 * i / (grid_n - 1), y = -1.0 + 2.0 * j / (grid_n - 1);
            worst = std::max(worst, std::abs(est.surface(x, y) - truth(x, y)));
        }
    return worst;
}

inline double sup_error(const ComponentEstimate& est, const ComponentFunction& truth, int grid_n) {
    return truth.arity == Arity::univariate ? sup_error(est, truth.uni, grid_n)
                                            : sup_error(est, truth.biv, grid_n);
}

/// Samples the subspace of a target and fits it in one step.
inline ComponentEstimate estimate_component(QueryOracle& oracle, const ComponentTarget& target, int n,
                                            int resamples = 1, int quad_n = 128) {
    auto pts = sample_component_grid(target, n, oracle.model().d);
    std::vector<double> vals(pts.size());
    NoiseStream ns = oracle.stream(3000000 + static_cast<std::uint64_t>(target.var) * 4096 + target.var2);
    for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = oracle.query(pts[i], resamples, ns);
    return fit_component(target, pts, vals, oracle.noise().kind, quad_n);
}

/// Sum of centered estimates at a point.
inline double evaluate_estimates(const std::vector<ComponentEstimate>& parts,
                                 std::span<const double> x) {
    double acc = 0.0;
    for (const auto& e : parts) {
        if (e.is_curve())
            acc += e.curve(x[e.target.var - 1]);
        else
            acc += e.surface(x[e.target.var - 1], x[e.target.var2 - 1]);
    }
    return acc;
}

/// The grand constant: the centered estimates leave a constant residual
/// f(x) - sum of parts, estimated by its sample mean over random points.
inline double estimate_constant(QueryOracle& oracle, const std::vector<ComponentEstimate>& parts,
                                int n_samples = 256, std::uint64_t seed = 2024) {
    auto eng = rng::engine(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    NoiseStream ns = oracle.stream(4000000);
    std::vector<double> x(oracle.model().d);
    double acc = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        for (double& v : x) v = u(eng);
        acc += oracle.query(x, 1, ns) - evaluate_estimates(parts, x);
    }
    return acc / n_samples;
}

/// All component targets of a support estimate, with degrees filled in.
inline std::vector<ComponentTarget> targets_from_support(const std::set<int>& s1,
                                                         const std::set<VarPair>& s2) {
    std::vector<ComponentTarget> targets;
    std::map<int, int> deg;
    std::vector<int> s2vars;
    for (const auto& [l, lp] : s2) {
        ++deg[l];
        ++deg[lp];
    }
    for (const auto& kv : deg) s2vars.push_back(kv.first);
    for (int p : s1) targets.push_back(ComponentTarget::univariate(p));
    for (const auto& [l, lp] : s2) targets.push_back(ComponentTarget::bivariate(l, lp, deg[l], deg[lp]));
    for (const auto& [v, dg] : deg)
        if (dg > 1) targets.push_back(ComponentTarget::marginal(v, s2vars));
    return targets;
}

}  // namespace gspam
