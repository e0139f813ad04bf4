#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "gspam/errors.hpp"
#include "gspam/model.hpp"
#include "gspam/rng.hpp"

namespace gspam {

/// m x d random sign matrix scaled by 1/sqrt(m); unit-norm columns.
struct BernoulliEnsemble {
    Eigen::MatrixXd mat;
    std::uint64_t seed = 0;

    int rows() const { return static_cast<int>(mat.rows()); }
    int cols() const { return static_cast<int>(mat.cols()); }
};

inline BernoulliEnsemble draw_ensemble(int m, int d, std::uint64_t seed) {
    if (m < 1 || d < 1) throw ConfigError("ensemble dimensions must be positive");
    BernoulliEnsemble V;
    V.seed = seed;
    V.mat.resize(m, d);
    auto eng = rng::engine(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    for (int j = 0; j < m; ++j)
        for (int q = 0; q < d; ++q) V.mat(j, q) = (eng() & 1) ? scale : -scale;
    return V;
}

/// Central-difference measurements y_j = (f(x + mu v_j) - f(x - mu v_j)) / (2 mu),
/// a noisy linear functional of the gradient at x.
struct MeasurementVector {
    Eigen::VectorXd values;
    double step = 0.0;
    std::vector<double> base;
    std::vector<int> restriction;  // 1-based coordinate subset; empty = none
};

/// Assembles gradient measurements at `base` along the rows of V. With a
/// restriction P, every probe point is restricted to P (coordinates outside P
/// forced to zero), matching the reduced-support sampling of the second phase.
inline MeasurementVector gradient_measurements(QueryOracle& oracle, std::span<const double> base,
                                               const BernoulliEnsemble& V, double step,
                                               const std::vector<int>* restriction, int resamples,
                                               NoiseStream& ns) {
    const int d = V.cols();
    if (static_cast<int>(base.size()) != d) throw ConfigError("base point dimension mismatch");
    if (!(step > 0)) throw ConfigError("central-difference step must be positive");
    std::vector<char> keep;
    if (restriction) {
        if (restriction->empty()) throw ConfigError("restriction subset must be nonempty");
        keep.assign(d, 0);
        for (int q : *restriction) {
            if (q < 1 || q > d) throw ConfigError("restriction index out of range");
            keep[q - 1] = 1;
        }
    }
    MeasurementVector mv;
    mv.step = step;
    mv.base.assign(base.begin(), base.end());
    if (restriction) mv.restriction = *restriction;
    mv.values.resize(V.rows());
    for (int j = 0; j < V.rows(); ++j) {
        auto probe = [&](double sign) {
            return oracle.query_at(
                [&](int v) {
                    if (restriction && !keep[v - 1]) return 0.0;
                    return base[v - 1] + sign * step * V.mat(j, v - 1);
                },
                resamples, ns);
        };
        double plus, minus;
        try {
            plus = probe(+1.0);
            minus = probe(-1.0);
        } catch (const DomainError& e) {
            throw DomainError("measurement direction " + std::to_string(j + 1) + ": " + e.what());
        }
        mv.values(j) = (plus - minus) / (2.0 * step);
    }
    return mv;
}

/// Measurements of Hessian row q from gradient estimates at x and at the
/// offsets x + mu1 v'_p: y_p = (grads_at_offsets[p] - grad_at_base)_q / mu1.
inline MeasurementVector hessian_row_measurements(const Eigen::VectorXd& grad_at_base,
                                                  const std::vector<Eigen::VectorXd>& grads_at_offsets,
                                                  double step, int q) {
    if (!(step > 0)) throw ConfigError("hessian-row step must be positive");
    if (q < 1 || q > grad_at_base.size()) throw ConfigError("row index out of range");
    MeasurementVector mv;
    mv.step = step;
    mv.values.resize(static_cast<int>(grads_at_offsets.size()));
    for (std::size_t p = 0; p < grads_at_offsets.size(); ++p) {
        if (grads_at_offsets[p].size() != grad_at_base.size())
            throw ConfigError("gradient length mismatch in hessian-row assembly");
        mv.values(static_cast<int>(p)) = (grads_at_offsets[p](q - 1) - grad_at_base(q - 1)) / step;
    }
    return mv;
}

// ---------------------------------------------------------------------------
// Sparse recovery
// ---------------------------------------------------------------------------

enum class RecoveryMode { hard_threshold, l1_equality };

struct SolveStats {
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    std::vector<double> residual_path;  // accepted iterates; non-increasing
};

namespace detail {

inline Eigen::VectorXd ls_on_support(const Eigen::MatrixXd& V, const Eigen::VectorXd& y,
                                     const std::vector<int>& support) {
    Eigen::MatrixXd sub(V.rows(), static_cast<int>(support.size()));
    for (std::size_t c = 0; c < support.size(); ++c) sub.col(static_cast<int>(c)) = V.col(support[c]);
    Eigen::VectorXd w = sub.colPivHouseholderQr().solve(y);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(V.cols());
    for (std::size_t c = 0; c < support.size(); ++c) z(support[c]) = w(static_cast<int>(c));
    return z;
}

inline std::vector<int> top_indices(const Eigen::VectorXd& v, int s) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    int keep = std::min<int>(s, static_cast<int>(v.size()));
    std::partial_sort(idx.begin(), idx.begin() + keep, idx.end(),
                      [&](int a, int b) { return std::abs(v(a)) > std::abs(v(b)); });
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline std::vector<int> support_of(const Eigen::VectorXd& z) {
    std::vector<int> s;
    for (int i = 0; i < z.size(); ++i)
        if (z(i) != 0.0) s.push_back(i);
    return s;
}

/// Hard-thresholding pursuit with a light FISTA memory and monotone residual
/// safeguard; every accepted iterate is debiased by least squares on its
/// support, mirroring the accelerated hard-thresholding solvers used in
/// compressive-sensing practice.
inline Eigen::VectorXd htp_iterate(const Eigen::MatrixXd& V, const Eigen::VectorXd& y, int s,
                                   Eigen::VectorXd z, int max_iters, double tol, SolveStats& stats) {
    double res = (y - V * z).norm();
    stats.residual_path.push_back(res);
    Eigen::VectorXd z_prev = z;
    double t_prev = 1.0;
    int stable = 0;
    std::vector<int> last_support = support_of(z);
    for (int it = 0; it < max_iters && res > tol; ++it) {
        ++stats.iterations;
        double t = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_prev * t_prev));
        double beta = (t_prev - 1.0) / t;
        bool accepted = false;
        Eigen::VectorXd best_cand;
        double best_res = res;
        for (int pass = 0; pass < 2 && !accepted; ++pass) {
            Eigen::VectorXd w = pass == 0 ? Eigen::VectorXd(z + beta * (z - z_prev)) : z;
            Eigen::VectorXd g = V.transpose() * (y - V * w);
            Eigen::VectorXd g_dir = Eigen::VectorXd::Zero(g.size());
            for (int i : top_indices(g, 2 * s)) g_dir(i) = g(i);
            double denom = (V * g_dir).squaredNorm();
            if (denom <= 0.0) continue;
            double alpha = g_dir.squaredNorm() / denom;
            for (int bt = 0; bt < 30; ++bt, alpha *= 0.5) {
                Eigen::VectorXd u = w + alpha * g;
                std::vector<int> supp = top_indices(u, s);
                Eigen::VectorXd cand = ls_on_support(V, y, supp);
                double cres = (y - V * cand).norm();
                if (cres < best_res) {
                    best_cand = cand;
                    best_res = cres;
                    accepted = true;
                    break;
                }
            }
        }
        if (!accepted) break;  // fixed point: no sparse step improves the residual
        z_prev = z;
        z = best_cand;
        t_prev = t;
        double drop = res - best_res;
        res = best_res;
        stats.residual_path.push_back(res);
        std::vector<int> supp = support_of(z);
        if (supp == last_support && drop < 1e-12 * std::max(1.0, res)) {
            if (++stable >= 2) break;
        } else {
            stable = 0;
        }
        last_support = std::move(supp);
    }
    stats.residual = res;
    return z;
}

inline Eigen::VectorXd omp_init(const Eigen::MatrixXd& V, const Eigen::VectorXd& y, int s) {
    std::vector<int> support;
    Eigen::VectorXd z = Eigen::VectorXd::Zero(V.cols());
    Eigen::VectorXd r = y;
    std::vector<char> used(V.cols(), 0);
    for (int step = 0; step < s; ++step) {
        Eigen::VectorXd corr = V.transpose() * r;
        int best = -1;
        double best_val = 0.0;
        for (int i = 0; i < corr.size(); ++i)
            if (!used[i] && std::abs(corr(i)) > best_val) {
                best_val = std::abs(corr(i));
                best = i;
            }
        if (best < 0 || best_val <= 1e-14) break;
        used[best] = 1;
        support.push_back(best);
        z = ls_on_support(V, y, support);
        r = y - V * z;
        if (r.norm() <= 1e-14) break;
    }
    return z;
}

inline Eigen::VectorXd solve_hard_threshold(const Eigen::MatrixXd& V, const Eigen::VectorXd& y,
                                            int budget, SolveStats& stats) {
    const int s = std::min<int>({budget, static_cast<int>(V.cols()), static_cast<int>(V.rows())});
    const double tol = 1e-9;
    double ynorm = y.norm();
    if (ynorm <= tol) {
        stats.converged = true;
        stats.residual = ynorm;
        stats.residual_path = {ynorm};
        return Eigen::VectorXd::Zero(V.cols());
    }
    // Start from the debiased best-s correlation guess.
    Eigen::VectorXd z0 = ls_on_support(V, y, top_indices(V.transpose() * y, s));
    if ((y - V * z0).norm() > ynorm) z0.setZero();
    Eigen::VectorXd z = htp_iterate(V, y, s, z0, 500, tol, stats);
    if (stats.residual > std::max(tol, 1e-7 * ynorm)) {
        // Greedy restart for the rare stalls on hard instances.
        SolveStats retry;
        retry.iterations = stats.iterations;
        Eigen::VectorXd z2 = htp_iterate(V, y, s, omp_init(V, y, s), 500, tol, retry);
        if (retry.residual < stats.residual) {
            stats = std::move(retry);
            z = std::move(z2);
        }
    }
    stats.converged = true;  // fixed point reached (residual may sit at the noise floor)
    return z;
}

/// Equality-constrained l1 minimization via a primal-dual first-order scheme.
inline Eigen::VectorXd solve_l1_equality(const Eigen::MatrixXd& V, const Eigen::VectorXd& y,
                                         SolveStats& stats) {
    const double feas_tol = 1e-8 * std::max(1.0, y.norm());
    if (y.norm() <= feas_tol) {
        stats.converged = true;
        stats.residual = y.norm();
        return Eigen::VectorXd::Zero(V.cols());
    }
    // Operator norm by power iteration.
    Eigen::VectorXd u = Eigen::VectorXd::Ones(V.cols()).normalized();
    double L = 1.0;
    for (int i = 0; i < 50; ++i) {
        u = V.transpose() * (V * u);
        L = std::sqrt(u.norm());
        u.normalize();
    }
    const double tau = 0.95 / L, sigma = 0.95 / L;
    Eigen::VectorXd z = Eigen::VectorXd::Zero(V.cols());
    Eigen::VectorXd zbar = z, xi = Eigen::VectorXd::Zero(V.rows());
    double prev_obj = 0.0;
    const int max_iters = 50000;
    for (int it = 1; it <= max_iters; ++it) {
        xi += sigma * (V * zbar - y);
        Eigen::VectorXd w = z - tau * (V.transpose() * xi);
        Eigen::VectorXd z_new =
            w.unaryExpr([&](double v) { return std::copysign(std::max(std::abs(v) - tau, 0.0), v); });
        zbar = 2.0 * z_new - z;
        z = std::move(z_new);
        if (it % 25 == 0 || it == max_iters) {
            double feas = (V * z - y).norm();
            double obj = z.lpNorm<1>();
            stats.iterations = it;
            stats.residual = feas;
            if (feas <= feas_tol && std::abs(obj - prev_obj) <= 1e-9 * std::max(1.0, obj)) {
                stats.converged = true;
                return z;
            }
            prev_obj = obj;
        }
    }
    throw SolverError("l1 solve did not reach feasibility tolerance", stats.residual);
}

}  // namespace detail

/// Recovers a sparse vector from y ~ V z. hard_threshold returns a
/// budget-sparse residual minimizer (the experimental solver); l1_equality
/// solves min ||z||_1 s.t. Vz = y.
inline Eigen::VectorXd sparse_recover(const Eigen::MatrixXd& V, const Eigen::VectorXd& y, int budget,
                                      RecoveryMode mode, SolveStats* stats_out = nullptr) {
    if (budget < 1) throw ConfigError("sparsity budget must be >= 1");
    if (y.size() != V.rows()) throw ConfigError("measurement length does not match ensemble rows");
    SolveStats stats;
    Eigen::VectorXd z = mode == RecoveryMode::hard_threshold
                            ? detail::solve_hard_threshold(V, y, budget, stats)
                            : detail::solve_l1_equality(V, y, stats);
    if (stats_out) *stats_out = std::move(stats);
    return z;
}

inline Eigen::VectorXd sparse_recover(const BernoulliEnsemble& V, const Eigen::VectorXd& y, int budget,
                                      RecoveryMode mode, SolveStats* stats_out = nullptr) {
    return sparse_recover(V.mat, y, budget, mode, stats_out);
}

}  // namespace gspam
