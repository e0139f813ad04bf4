#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "gspam/errors.hpp"

namespace gspam {

// Local quadratic quasi-interpolation on uniform samples of [-1, 1]: each
// interval evaluates the parabola through its three-point stencil. The
// operator is linear with norm <= 1.25, reproduces quadratics, and attains the
// optimal O(n^-3) sup-norm rate for C^3 targets.
class QuadraticSpline1D {
public:
    QuadraticSpline1D() = default;
    explicit QuadraticSpline1D(std::vector<double> values, double lo = -1.0, double hi = 1.0)
        : vals_(std::move(values)), lo_(lo), hi_(hi) {
        if (vals_.size() < 3) throw ConfigError("quasi-interpolant needs at least 3 samples");
        h_ = (hi_ - lo_) / static_cast<double>(vals_.size() - 1);
        if (!(h_ > 0)) throw ConfigError("degenerate sample grid");
    }

    int n() const { return static_cast<int>(vals_.size()); }
    double knot(int i) const { return lo_ + h_ * i; }

    double operator()(double x) const {
        const int n = static_cast<int>(vals_.size());
        int j = static_cast<int>(std::floor((x - lo_) / h_));
        j = std::clamp(j, 0, n - 2);
        int s = std::clamp(j, 1, n - 2);  // stencil center
        double x0 = knot(s - 1), x1 = knot(s), x2 = knot(s + 1);
        double f0 = vals_[s - 1], f1 = vals_[s], f2 = vals_[s + 1];
        double l0 = (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2));
        double l1 = (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2));
        double l2 = (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
        return f0 * l0 + f1 * l1 + f2 * l2;
    }

private:
    std::vector<double> vals_;
    double lo_ = -1.0, hi_ = 1.0, h_ = 1.0;
};

/// Tensor-product counterpart on an n x n uniform grid (row index = first axis).
class QuadraticSpline2D {
public:
    QuadraticSpline2D() = default;
    QuadraticSpline2D(std::vector<double> values, int n, double lo = -1.0, double hi = 1.0)
        : vals_(std::move(values)), n_(n), lo_(lo), hi_(hi) {
        if (n_ < 3 || vals_.size() != static_cast<std::size_t>(n_) * n_)
            throw ConfigError("tensor quasi-interpolant needs an n x n grid with n >= 3");
        h_ = (hi_ - lo_) / (n_ - 1);
    }

    double operator()(double x, double y) const {
        int s = stencil(x);
        double w[3];
        lagrange_weights(x, s, w);
        double rows[3];
        for (int a = 0; a < 3; ++a) rows[a] = eval_row(s - 1 + a, y);
        return w[0] * rows[0] + w[1] * rows[1] + w[2] * rows[2];
    }

private:
    int stencil(double x) const {
        int j = static_cast<int>(std::floor((x - lo_) / h_));
        j = std::clamp(j, 0, n_ - 2);
        return std::clamp(j, 1, n_ - 2);
    }
    void lagrange_weights(double x, int s, double* w) const {
        double x0 = lo_ + h_ * (s - 1), x1 = x0 + h_, x2 = x1 + h_;
        w[0] = (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2));
        w[1] = (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2));
        w[2] = (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
    }
    double eval_row(int i, double y) const {
        int s = stencil(y);
        double w[3];
        lagrange_weights(y, s, w);
        const double* row = vals_.data() + static_cast<std::size_t>(i) * n_;
        return w[0] * row[s - 1] + w[1] * row[s] + w[2] * row[s + 1];
    }

    std::vector<double> vals_;
    int n_ = 0;
    double lo_ = -1.0, hi_ = 1.0, h_ = 1.0;
};

// Degree-3 local polynomial regression with an Epanechnikov kernel; the fixed
// design is the same uniform grid the quasi-interpolants use. The window
// widens automatically near the boundary until the fit is determined.
class LocalPoly1D {
public:
    LocalPoly1D() = default;
    LocalPoly1D(std::vector<double> xs, std::vector<double> ys, double bandwidth)
        : xs_(std::move(xs)), ys_(std::move(ys)), h_(bandwidth) {
        if (xs_.size() != ys_.size() || xs_.size() < 4) throw ConfigError("local polynomial needs >= 4 samples");
    }

    double operator()(double x) const {
        double h = h_;
        for (int attempt = 0; attempt < 32; ++attempt, h *= 1.5) {
            int used = 0;
            Eigen::Matrix4d ata = Eigen::Matrix4d::Zero();
            Eigen::Vector4d atb = Eigen::Vector4d::Zero();
            for (std::size_t i = 0; i < xs_.size(); ++i) {
                double u = (xs_[i] - x) / h;
                double w = kernel(u);
                if (w <= 0) continue;
                ++used;
                Eigen::Vector4d basis(1.0, u, u * u, u * u * u);
                ata += w * basis * basis.transpose();
                atb += w * ys_[i] * basis;
            }
            if (used < 4) continue;
            Eigen::LDLT<Eigen::Matrix4d> ldlt(ata);
            if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-13)) continue;
            return ldlt.solve(atb)(0);
        }
        throw ConfigError("local polynomial window could not be determined");
    }

private:
    static double kernel(double u) { return std::max(0.0, 0.75 * (1.0 - u * u)); }

    std::vector<double> xs_, ys_;
    double h_ = 0.5;
};

class LocalPoly2D {
public:
    LocalPoly2D() = default;
    LocalPoly2D(std::vector<double> xs, std::vector<double> ys, std::vector<double> vals,
                double bandwidth)
        : xs_(std::move(xs)), ys_(std::move(ys)), vals_(std::move(vals)), h_(bandwidth) {
        if (xs_.size() != ys_.size() || xs_.size() != vals_.size() || xs_.size() < 10)
            throw ConfigError("bivariate local polynomial needs >= 10 samples");
    }

    double operator()(double x, double y) const {
        constexpr int P = 10;  // monomials of total degree <= 3
        double h = h_;
        for (int attempt = 0; attempt < 32; ++attempt, h *= 1.5) {
            int used = 0;
            Eigen::Matrix<double, P, P> ata = Eigen::Matrix<double, P, P>::Zero();
            Eigen::Matrix<double, P, 1> atb = Eigen::Matrix<double, P, 1>::Zero();
            for (std::size_t i = 0; i < xs_.size(); ++i) {
                double u = (xs_[i] - x) / h, v = (ys_[i] - y) / h;
                double w = kernel(u) * kernel(v);
                if (w <= 0) continue;
                ++used;
                Eigen::Matrix<double, P, 1> basis;
                basis << 1.0, u, v, u * u, u * v, v * v, u * u * u, u * u * v, u * v * v, v * v * v;
                ata += w * basis * basis.transpose();
                atb += w * vals_[i] * basis;
            }
            if (used < P) continue;
            Eigen::LDLT<Eigen::Matrix<double, P, P>> ldlt(ata);
            if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-13)) continue;
            return ldlt.solve(atb)(0);
        }
        throw ConfigError("local polynomial window could not be determined");
    }

private:
    static double kernel(double u) { return std::max(0.0, 0.75 * (1.0 - u * u)); }

    std::vector<double> xs_, ys_, vals_;
    double h_ = 0.5;
};

}  // namespace gspam
