#pragma once

#include <functional>
#include <string>

#include "gspam/quadrature.hpp"

namespace gspam {

// Centering rules for the unique ANOVA form. All expectations are over the
// uniform distribution per axis on [-1, 1], evaluated by Gauss-Legendre
// quadrature on the supplied callable.

using Curve = std::function<double(double)>;
using Surface = std::function<double(double, double)>;

/// phi - E[phi]
inline Curve center_univariate(Curve phi, int quad_n) {
    double mean = expect_uniform(phi, quad_n);
    return [phi = std::move(phi), mean](double x) { return phi(x) - mean; };
}

/// Partial expectation over the first argument; a function of the second.
inline Curve expect_first(Surface phi, int quad_n) {
    return [phi = std::move(phi), quad_n](double y) {
        return expect_uniform([&](double x) { return phi(x, y); }, quad_n);
    };
}

/// Partial expectation over the second argument; a function of the first.
inline Curve expect_second(Surface phi, int quad_n) {
    return [phi = std::move(phi), quad_n](double x) {
        return expect_uniform([&](double y) { return phi(x, y); }, quad_n);
    };
}

/// Bivariate centering keyed on the degrees of the two variables. Returns the
/// centered surface and a label describing which rule was applied.
inline Surface center_bivariate(Surface phi, int deg_first, int deg_second, int quad_n,
                                std::string* rule = nullptr) {
    bool f1 = deg_first <= 1, s1 = deg_second <= 1;
    if (f1 && s1) {
        if (rule) *rule = "subtract E_ll'";
        double m = expect_uniform2(phi, quad_n);
        return [phi = std::move(phi), m](double x, double y) { return phi(x, y) - m; };
    }
    if (f1 && !s1) {
        if (rule) *rule = "subtract E_l";
        Curve el = expect_first(phi, quad_n);
        return [phi = std::move(phi), el = std::move(el)](double x, double y) {
            return phi(x, y) - el(y);
        };
    }
    if (!f1 && s1) {
        if (rule) *rule = "subtract E_l'";
        Curve elp = expect_second(phi, quad_n);
        return [phi = std::move(phi), elp = std::move(elp)](double x, double y) {
            return phi(x, y) - elp(x);
        };
    }
    if (rule) *rule = "subtract E_l and E_l', add E_ll'";
    Curve el = expect_first(phi, quad_n);
    Curve elp = expect_second(phi, quad_n);
    double m = expect_uniform2(phi, quad_n);
    return [phi = std::move(phi), el = std::move(el), elp = std::move(elp), m](double x, double y) {
        return phi(x, y) - el(y) - elp(x) + m;
    };
}

/// Marginal extraction for a fitted two-axis object g(x_l, x): E_x[g] - E_(l,x)[g].
inline Curve marginal_from_surface(Surface g, int quad_n) {
    double full = expect_uniform2(g, quad_n);
    Curve esec = expect_second(std::move(g), quad_n);
    return [esec = std::move(esec), full](double x) { return esec(x) - full; };
}

}  // namespace gspam
