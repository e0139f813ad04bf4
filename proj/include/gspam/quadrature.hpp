#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <vector>

namespace gspam {

/// Gauss-Legendre rule on [-1, 1].
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;  // sum to 2
};

namespace detail {

inline QuadratureRule compute_gauss_legendre(int n) {
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    // Newton on P_n with the Tricomi initial guess; symmetric, so solve half.
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = -x;
        rule.weights[i] = w;
        rule.nodes[n - 1 - i] = x;
        rule.weights[n - 1 - i] = w;
    }
    return rule;
}

}  // namespace detail

inline const QuadratureRule& gauss_legendre(int n) {
    static std::map<int, QuadratureRule> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, detail::compute_gauss_legendre(n)).first;
    return it->second;
}

/// Expectation of g under the uniform distribution on [-1, 1].
template <class Fn>
double expect_uniform(Fn&& g, int quad_n) {
    const auto& q = gauss_legendre(quad_n);
    double acc = 0.0;
    for (int i = 0; i < quad_n; ++i) acc += q.weights[i] * g(q.nodes[i]);
    return 0.5 * acc;
}

/// Expectation of g(x, y) under the uniform distribution on [-1, 1]^2.
template <class Fn>
double expect_uniform2(Fn&& g, int quad_n) {
    const auto& q = gauss_legendre(quad_n);
    double acc = 0.0;
    for (int i = 0; i < quad_n; ++i) {
        double row = 0.0;
        for (int j = 0; j < quad_n; ++j) row += q.weights[j] * g(q.nodes[i], q.nodes[j]);
        acc += q.weights[i] * row;
    }
    return 0.25 * acc;
}

}  // namespace gspam
