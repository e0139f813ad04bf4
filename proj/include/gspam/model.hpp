#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gspam/anova.hpp"
#include "gspam/errors.hpp"
#include "gspam/rng.hpp"

namespace gspam {

/// Interaction pair with first < second. Variables are 1-based throughout.
using VarPair = std::pair<int, int>;

inline VarPair ordered_pair(int l, int lp) {
    if (l == lp) throw ConfigError("interaction pair must have distinct variables");
    return l < lp ? VarPair{l, lp} : VarPair{lp, l};
}

enum class Arity { univariate, bivariate };

/// One additive component. derivative_bounds[m] upper-bounds the sup-norm of
/// every order-m partial on the enlarged box.
struct ComponentFunction {
    Arity arity = Arity::univariate;
    Curve uni;
    Surface biv;
    std::array<double, 4> derivative_bounds{};

    static ComponentFunction univariate(Curve f, std::array<double, 4> bounds) {
        ComponentFunction c;
        c.arity = Arity::univariate;
        c.uni = std::move(f);
        c.derivative_bounds = bounds;
        return c;
    }
    static ComponentFunction bivariate(Surface f, std::array<double, 4> bounds) {
        ComponentFunction c;
        c.arity = Arity::bivariate;
        c.biv = std::move(f);
        c.derivative_bounds = bounds;
        return c;
    }
};

/// Sparse additive model with pairwise interactions:
///   f(x) = constant + sum_{p in s1 or marginal} phi_p(x_p)
///        + sum_{(l,l') in s2} phi_{ll'}(x_l, x_{l'}).
/// Univariate keys outside s1 are marginals attached to interaction variables.
struct GroundTruthModel {
    int d = 0;
    double r = 0.1;  // domain enlargement margin
    double constant = 0.0;
    std::set<int> s1;
    std::set<VarPair> s2;
    std::map<int, ComponentFunction> univariates;
    std::map<VarPair, ComponentFunction> bivariates;

    double domain_halfwidth() const { return 1.0 + r; }

    std::set<int> s2_vars() const {
        std::set<int> vars;
        for (const auto& [l, lp] : s2) {
            vars.insert(l);
            vars.insert(lp);
        }
        return vars;
    }

    /// Number of occurrences of `var` in s2; 0 when inactive.
    int degree(int var) const {
        if (var < 1 || var > d) throw ConfigError("variable index out of range: " + std::to_string(var));
        int deg = 0;
        for (const auto& [l, lp] : s2) deg += (l == var || lp == var);
        return deg;
    }

    int rho_max() const {
        int rho = 0;
        for (int v : s2_vars()) rho = std::max(rho, degree(v));
        return rho;
    }

    /// Total sparsity k = |s1| + |vars(s2)|.
    int sparsity() const { return static_cast<int>(s1.size() + s2_vars().size()); }

    std::set<int> active_vars() const {
        std::set<int> vars = s2_vars();
        vars.insert(s1.begin(), s1.end());
        return vars;
    }

    void validate() const {
        if (d < 1) throw ConfigError("model dimension must be positive");
        auto vars2 = s2_vars();
        for (int p : s1) {
            if (p < 1 || p > d) throw ConfigError("s1 index out of range");
            if (vars2.count(p)) throw ConfigError("s1 and vars(s2) must be disjoint (variable " + std::to_string(p) + ")");
        }
        for (const auto& [l, lp] : s2) {
            if (!(1 <= l && l < lp && lp <= d)) throw ConfigError("s2 pair out of range or unordered");
            if (!bivariates.count({l, lp})) throw ConfigError("missing bivariate component");
        }
        for (const auto& [v, cf] : univariates) {
            if (cf.arity != Arity::univariate) throw ConfigError("univariate component with wrong arity");
            if (!s1.count(v) && !vars2.count(v)) throw ConfigError("univariate component at inactive variable");
        }
        for (const auto& [pr, cf] : bivariates) {
            if (cf.arity != Arity::bivariate) throw ConfigError("bivariate component with wrong arity");
            if (!s2.count(pr)) throw ConfigError("bivariate component at inactive pair");
        }
    }

    /// Evaluation through a coordinate accessor; touches active variables only.
    template <class Coord>
    double evaluate_at(Coord&& coord) const {
        double acc = constant;
        for (const auto& [v, cf] : univariates) acc += cf.uni(coord(v));
        for (const auto& [pr, cf] : bivariates) acc += cf.biv(coord(pr.first), coord(pr.second));
        return acc;
    }

    double evaluate(std::span<const double> x) const {
        if (static_cast<int>(x.size()) != d) throw ConfigError("point dimension mismatch");
        const double hw = domain_halfwidth() + 1e-12;
        for (int q = 0; q < d; ++q) {
            if (!(std::abs(x[q]) <= hw)) {
                std::ostringstream os;
                os << "coordinate " << (q + 1) << " = " << x[q] << " outside [-" << domain_halfwidth()
                   << ", " << domain_halfwidth() << "]";
                throw DomainError(os.str());
            }
        }
        return evaluate_at([&](int v) { return x[v - 1]; });
    }
};

/// Problem constants fed to the sampling-parameter recipes.
struct ProblemParams {
    double d1 = 1.0, d2 = 1.0;          // critical derivative magnitudes
    double lambda1 = 1.0, lambda2 = 1.0;  // critical interval lengths
    double b3 = 1.0;                    // third-derivative bound used by the recipes
    int k_upper = 1;                    // upper bound on total sparsity
    int rho_upper = 1;                  // upper bound on the maximum degree

    void validate() const {
        if (!(d1 > 0 && d2 > 0 && b3 > 0)) throw ConfigError("D1, D2, B3 must be positive");
        if (!(lambda1 > 0 && lambda1 <= 2 && lambda2 > 0 && lambda2 <= 2))
            throw ConfigError("lambda1, lambda2 must lie in (0, 2]");
        if (k_upper < 1 || rho_upper < 0) throw ConfigError("sparsity bounds must be positive");
    }
};

// ---------------------------------------------------------------------------
// ANOVA centering (unique representation)
// ---------------------------------------------------------------------------

/// Rewrites the model in its unique ANOVA form: zero-mean univariates, the
/// four-case bivariate rule, marginals for variables of degree > 1, and the
/// grand constant. Function values are unchanged.
inline GroundTruthModel center_components(const GroundTruthModel& model, int quad_n = 64) {
    if (quad_n < 8) throw ConfigError("centering quadrature needs at least 8 nodes");
    model.validate();

    GroundTruthModel out;
    out.d = model.d;
    out.r = model.r;
    out.s2 = model.s2;

    auto vars2 = model.s2_vars();
    double c = model.constant;

    // Univariates sitting on interaction variables merge with their pairs
    // (degree 1) or feed the marginal (degree > 1).
    std::map<VarPair, Surface> merged;
    for (const auto& [pr, cf] : model.bivariates) merged[pr] = cf.biv;
    std::map<int, Curve> marginal_extra;

    for (const auto& [v, cf] : model.univariates) {
        if (!vars2.count(v)) {
            out.s1.insert(v);
            Curve centered = center_univariate(cf.uni, quad_n);
            c += expect_uniform(cf.uni, quad_n);
            auto b = cf.derivative_bounds;
            b[0] *= 2;
            out.univariates[v] = ComponentFunction::univariate(std::move(centered), b);
            continue;
        }
        if (model.degree(v) == 1) {
            VarPair host{};
            for (const auto& [l, lp] : model.s2)
                if (l == v || lp == v) host = {l, lp};
            Surface base = merged[host];
            Curve phi = cf.uni;
            bool first_slot = host.first == v;
            merged[host] = [base, phi, first_slot](double x, double y) {
                return base(x, y) + phi(first_slot ? x : y);
            };
        } else {
            marginal_extra[v] = cf.uni;
        }
    }

    // Pairs: grand-mean contribution plus the degree-keyed centering rule.
    for (const auto& [pr, surf] : merged) {
        int dl = model.degree(pr.first), dlp = model.degree(pr.second);
        c += expect_uniform2(surf, quad_n);
        Surface centered = center_bivariate(surf, dl, dlp, quad_n);
        auto b = model.bivariates.at(pr).derivative_bounds;
        for (double& x : b) x *= 2;
        b[0] *= 2;
        out.bivariates[pr] = ComponentFunction::bivariate(std::move(centered), b);
    }

    // Marginals: for each q of degree > 1, the net first-order effect of its
    // pairs, plus any pre-existing univariate at q (centered).
    for (int q : vars2) {
        if (model.degree(q) <= 1) continue;
        std::vector<Curve> parts;
        std::array<double, 4> b{};
        for (const auto& [pr, surf] : merged) {
            if (pr.first != q && pr.second != q) continue;
            Curve partner_mean = pr.first == q ? expect_second(surf, quad_n) : expect_first(surf, quad_n);
            double full = expect_uniform2(surf, quad_n);
            parts.push_back([partner_mean, full](double x) { return partner_mean(x) - full; });
            const auto& pb = model.bivariates.at(pr).derivative_bounds;
            for (int m = 0; m < 4; ++m) b[m] += 2 * pb[m];
        }
        if (auto it = marginal_extra.find(q); it != marginal_extra.end()) {
            parts.push_back(center_univariate(it->second, quad_n));
            c += expect_uniform(it->second, quad_n);
            const auto& ub = model.univariates.at(q).derivative_bounds;
            for (int m = 0; m < 4; ++m) b[m] += 2 * ub[m];
        }
        Curve sum = [parts](double x) {
            double acc = 0.0;
            for (const auto& p : parts) acc += p(x);
            return acc;
        };
        out.univariates[q] = ComponentFunction::univariate(std::move(sum), b);
    }

    out.constant = c;
    return out;
}

// ---------------------------------------------------------------------------
// Query oracle
// ---------------------------------------------------------------------------

struct NoiseSpec {
    enum class Kind { none, bounded, gaussian, adversarial };
    Kind kind = Kind::none;
    double epsilon = 0.0;  // bound for bounded / adversarial noise
    double sigma2 = 0.0;   // variance for gaussian noise

    static NoiseSpec none() { return {}; }
    static NoiseSpec bounded(double eps) { return {Kind::bounded, eps, 0.0}; }
    static NoiseSpec gaussian(double sigma2) { return {Kind::gaussian, 0.0, sigma2}; }
    /// Deterministic worst-case noise: +-epsilon alternating per draw.
    static NoiseSpec adversarial(double eps) { return {Kind::adversarial, eps, 0.0}; }
};

/// Deterministic noise source; one stream per unit of parallel work keeps runs
/// reproducible under any thread schedule.
class NoiseStream {
public:
    explicit NoiseStream(std::uint64_t seed) : eng_(rng::engine(seed)) {}

    double draw(const NoiseSpec& spec) {
        switch (spec.kind) {
            case NoiseSpec::Kind::none:
                return 0.0;
            case NoiseSpec::Kind::bounded: {
                std::uniform_real_distribution<double> u(-spec.epsilon, spec.epsilon);
                double z = u(eng_);
                while (std::abs(z) >= spec.epsilon && spec.epsilon > 0) z = u(eng_);
                return z;
            }
            case NoiseSpec::Kind::gaussian:
                return normal_(eng_) * std::sqrt(spec.sigma2);
            case NoiseSpec::Kind::adversarial:
                return (ticks_++ % 2 == 0) ? spec.epsilon : -spec.epsilon;
        }
        return 0.0;
    }

private:
    std::mt19937_64 eng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uint64_t ticks_ = 0;
};

/// Black-box view of a model: noisy point values plus query accounting. The
/// counter is atomic and advances by one per scalar evaluation (per resample);
/// concurrent users should take per-task child streams via stream().
class QueryOracle {
public:
    QueryOracle(const GroundTruthModel& model, NoiseSpec noise, std::uint64_t seed)
        : model_(&model), noise_(noise), seed_(seed), default_stream_(rng::child_seed(seed, 0)) {
        model.validate();
    }

    const GroundTruthModel& model() const { return *model_; }
    const NoiseSpec& noise() const { return noise_; }
    std::uint64_t query_count() const { return count_.load(); }

    NoiseStream stream(std::uint64_t index) const { return NoiseStream(rng::child_seed(seed_, index + 1)); }

    /// Mean of `resamples` independent noisy evaluations at x.
    double query(std::span<const double> x, int resamples, NoiseStream& ns) {
        double value = model_->evaluate(x);
        return corrupt(value, resamples, ns);
    }

    double query(std::span<const double> x, int resamples = 1) {
        std::lock_guard<std::mutex> lock(default_mu_);
        return query(x, resamples, default_stream_);
    }

    /// Lazy-coordinate query for probes touching few active variables. Domain
    /// enforcement covers every accessed coordinate.
    template <class Coord>
    double query_at(Coord&& coord, int resamples, NoiseStream& ns) {
        const double hw = model_->domain_halfwidth() + 1e-12;
        double value = model_->evaluate_at([&](int v) {
            double xv = coord(v);
            if (!(std::abs(xv) <= hw)) {
                std::ostringstream os;
                os << "coordinate " << v << " = " << xv << " outside [-" << model_->domain_halfwidth()
                   << ", " << model_->domain_halfwidth() << "]";
                throw DomainError(os.str());
            }
            return xv;
        });
        return corrupt(value, resamples, ns);
    }

private:
    double corrupt(double value, int resamples, NoiseStream& ns) {
        if (resamples < 1) throw ConfigError("resamples must be >= 1");
        count_.fetch_add(static_cast<std::uint64_t>(resamples), std::memory_order_relaxed);
        if (noise_.kind == NoiseSpec::Kind::none) return value;
        double acc = 0.0;
        for (int i = 0; i < resamples; ++i) acc += ns.draw(noise_);
        return value + acc / resamples;
    }

    const GroundTruthModel* model_;
    NoiseSpec noise_;
    std::uint64_t seed_;
    std::atomic<std::uint64_t> count_{0};
    NoiseStream default_stream_;
    std::mutex default_mu_;
};

// ---------------------------------------------------------------------------
// Synthetic benchmarks
// ---------------------------------------------------------------------------

struct Benchmark {
    std::string name;
    GroundTruthModel model;
    ProblemParams params;
    double suggested_c_tilde = 5.6;
};

namespace detail {

inline ComponentFunction linear_term(double c, double L) {
    return ComponentFunction::univariate([c](double x) { return c * x; },
                                         {std::abs(c) * L, std::abs(c), 0.0, 0.0});
}
inline ComponentFunction square_term(double c, double L) {
    return ComponentFunction::univariate([c](double x) { return c * x * x; },
                                         {std::abs(c) * L * L, 2 * std::abs(c) * L, 2 * std::abs(c), 0.0});
}
inline ComponentFunction bilinear_term(double c, double L) {
    return ComponentFunction::bivariate([c](double x, double y) { return c * x * y; },
                                        {std::abs(c) * L * L, std::abs(c) * L, std::abs(c), 0.0});
}
inline ComponentFunction sine_term(double a, double L) {
    const double pi = M_PI;
    (void)L;
    return ComponentFunction::univariate([a, pi](double x) { return a * std::sin(pi * x); },
                                         {a, a * pi, a * pi * pi, a * pi * pi * pi});
}
inline ComponentFunction exp_term(double a, double L) {
    double e = a * std::exp(2.0 * L);
    return ComponentFunction::univariate([a](double x) { return a * std::exp(-2.0 * x); },
                                         {e, 2 * e, 4 * e, 8 * e});
}
inline ComponentFunction sine_pair(double a, double L) {
    const double pi = M_PI;
    return ComponentFunction::bivariate(
        [a, pi](double x, double y) { return a * std::sin(pi * x * y); },
        {a, a * pi * L, a * (pi + pi * pi * L * L), a * pi * pi * L * (2.0 + pi * L * L)});
}
inline ComponentFunction exp_pair(double a, double L) {
    double e = std::exp(2.0 * L * L);
    return ComponentFunction::bivariate(
        [a](double x, double y) { return a * std::exp(-2.0 * x * y); },
        {a * e, 2 * a * L * e, 2 * a * (1.0 + 2.0 * L * L) * e, 8 * a * L * (1.0 + L * L) * e});
}

}  // namespace detail

/// Builds one of the four synthetic benchmarks. T is the block count for f3
/// and the hub degree for f4; random coefficients are drawn once from [2, 5]
/// with `coeff_seed` and frozen.
inline Benchmark make_benchmark(const std::string& name, int d, int T = 1,
                                std::uint64_t coeff_seed = 7, double r = 0.1) {
    using namespace detail;
    Benchmark bench;
    bench.name = name;
    GroundTruthModel& m = bench.model;
    m.d = d;
    m.r = r;
    const double L = 1.0 + r;

    auto draw_coeffs = [&](int count) {
        std::mt19937_64 eng = rng::engine(coeff_seed);
        std::uniform_real_distribution<double> u(2.0, 5.0);
        std::vector<double> a(count);
        for (double& v : a) v = u(eng);
        return a;
    };

    if (name == "f1") {
        if (d < 5) throw ConfigError("f1 needs d >= 5");
        m.s1 = {1, 2};
        m.s2 = {{3, 4}, {4, 5}};
        m.univariates[1] = linear_term(2.0, L);
        m.univariates[2] = square_term(-3.0, L);
        m.bivariates[{3, 4}] = bilinear_term(4.0, L);
        m.bivariates[{4, 5}] = bilinear_term(-5.0, L);
        bench.params = {2.0, 3.0, 0.3, 1.0, 6.0, 0, 0};
    } else if (name == "f2") {
        if (d < 5) throw ConfigError("f2 needs d >= 5");
        m.s1 = {1, 2};
        m.s2 = {{3, 4}, {4, 5}};
        m.univariates[1] = sine_term(10.0, L);
        m.univariates[2] = exp_term(5.0, L);
        m.bivariates[{3, 4}] = sine_pair(10.0, L);
        m.bivariates[{4, 5}] = exp_pair(5.0, L);
        // B3 must dominate the true third derivatives (the sine component alone
        // reaches 10*pi^3); set it from the declared component bounds.
        bench.params = {8.0, 4.0, 0.3, 0.3, 0.0, 0, 0};
    } else if (name == "f3") {
        if (T < 1) throw ConfigError("f3 needs T >= 1");
        if (d < 5 * T) throw ConfigError("f3 needs d >= 5T");
        auto a = draw_coeffs(4);
        for (int i = 0; i < T; ++i) {
            int base = 5 * i;
            m.s1.insert(base + 1);
            m.s1.insert(base + 2);
            m.univariates[base + 1] = linear_term(a[0], L);
            m.univariates[base + 2] = square_term(-a[1], L);
            m.s2.insert({base + 3, base + 4});
            m.s2.insert({base + 4, base + 5});
            m.bivariates[{base + 3, base + 4}] = bilinear_term(a[2], L);
            m.bivariates[{base + 4, base + 5}] = bilinear_term(-a[3], L);
        }
        bench.params = {2.0, 3.0, 0.3, 1.0, 6.0, 0, 0};
    } else if (name == "f4") {
        if (T < 1) throw ConfigError("f4 needs T >= 1");
        if (d < std::max(13, T + 3)) throw ConfigError("f4 needs d >= max(13, T+3)");
        auto a = draw_coeffs(2 + T + 5);
        m.s1 = {1, 2};
        m.univariates[1] = linear_term(a[0], L);
        m.univariates[2] = square_term(-a[1], L);
        for (int i = 1; i <= T; ++i) {
            m.s2.insert({3, i + 3});
            m.bivariates[{3, i + 3}] = bilinear_term(a[1 + i], L);
        }
        for (int i = 1; i <= 5; ++i) {
            VarPair pr{2 + 2 * i, 3 + 2 * i};
            if (!m.s2.count(pr)) {
                m.s2.insert(pr);
                m.bivariates[pr] = bilinear_term(a[1 + T + i], L);
            }
        }
        bench.params = {2.0, 3.0, 0.3, 1.0, 6.0, 0, 0};
        bench.suggested_c_tilde = 6.0;
    } else {
        throw ConfigError("unknown benchmark: " + name);
    }

    m.validate();
    if (bench.params.b3 <= 0.0) {
        double b3 = 0.0;
        for (const auto& [v, cf] : m.univariates) b3 = std::max(b3, cf.derivative_bounds[3]);
        for (const auto& [pr, cf] : m.bivariates) b3 = std::max(b3, cf.derivative_bounds[3]);
        bench.params.b3 = b3;
    }
    bench.params.k_upper = m.sparsity();
    bench.params.rho_upper = m.rho_max();
    bench.params.validate();
    return bench;
}

/// Largest declared order-m derivative bound across all components; the honest
/// model-level counterpart of ProblemParams::b3 for error-bound checks.
inline double model_derivative_bound(const GroundTruthModel& m, int order) {
    double b = 0.0;
    for (const auto& [v, cf] : m.univariates) b = std::max(b, cf.derivative_bounds[order]);
    for (const auto& [pr, cf] : m.bivariates) b = std::max(b, cf.derivative_bounds[order]);
    return b;
}

}  // namespace gspam
