#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

// Small dense least-squares machinery: a damped Gauss-Newton (Levenberg-
// Marquardt) loop with numeric Jacobians for the nonlinear fits (2-4
// parameters) and closed-form weighted polynomial regression for the linear
// ones. No external linear algebra; the largest system solved here is 4x4.

namespace rydsim {

struct LmOptions {
    std::size_t max_iterations = 200;
    double step_tolerance = 1e-12;     // relative parameter step
    double rss_tolerance = 1e-14;      // relative objective decrease
    double initial_lambda = 1e-3;
    std::vector<double> param_scales;  // per-parameter scale; default max(|p0|, 1)
};

struct LeastSquaresSummary {
    std::vector<double> params;
    std::vector<double> sigmas;      // sqrt(diag cov), cov = s^2 (J^T J)^-1
    std::vector<double> covariance;  // row-major p x p
    double rss = 0.0;                // sum of squared (whitened) residuals
    bool converged = false;
    int n_eval = 0;
};

namespace detail {

/// Solve A x = b in place (row-major n x n) with partial pivoting.
inline std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col]))
                pivot = r;
        if (a[pivot * n + col] == 0.0)
            throw std::runtime_error("solve_linear: singular matrix");
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c)
                std::swap(a[col * n + c], a[pivot * n + c]);
            std::swap(b[col], b[pivot]);
        }
        const double inv = 1.0 / a[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] * inv;
            if (f == 0.0)
                continue;
            for (std::size_t c = col; c < n; ++c)
                a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t ri = n; ri-- > 0;) {
        double acc = b[ri];
        for (std::size_t c = ri + 1; c < n; ++c)
            acc -= a[ri * n + c] * x[c];
        x[ri] = acc / a[ri * n + ri];
    }
    return x;
}

/// Inverse via n solves against unit vectors.
inline std::vector<double> invert(const std::vector<double>& a, std::size_t n) {
    std::vector<double> inv(n * n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
        std::vector<double> e(n, 0.0);
        e[c] = 1.0;
        const auto col = solve_linear(a, e);
        for (std::size_t r = 0; r < n; ++r)
            inv[r * n + c] = col[r];
    }
    return inv;
}

inline double sum_sq(const std::vector<double>& r) {
    double s = 0.0;
    for (double v : r)
        s += v * v;
    return s;
}

} // namespace detail

/// Minimize |residual_fn(p)|^2 starting from p0. residual_fn returns the
/// whitened residual vector; the Jacobian is taken by central differences with
/// per-parameter steps scaled by opt.param_scales.
template <typename ResidualFn>
LeastSquaresSummary levenberg_marquardt(ResidualFn&& residual_fn, std::vector<double> p0,
                                        const LmOptions& opt = {}) {
    const std::size_t np = p0.size();
    if (np == 0)
        throw std::invalid_argument("levenberg_marquardt: no parameters");

    std::vector<double> scales = opt.param_scales;
    if (scales.size() != np) {
        scales.assign(np, 1.0);
        for (std::size_t j = 0; j < np; ++j)
            scales[j] = std::max(std::abs(p0[j]), 1.0);
    }

    LeastSquaresSummary out;
    out.params = p0;
    int n_eval = 0;
    auto eval = [&](const std::vector<double>& p) {
        ++n_eval;
        return residual_fn(p);
    };

    std::vector<double> r = eval(out.params);
    const std::size_t nr = r.size();
    if (nr < np)
        throw std::invalid_argument("levenberg_marquardt: fewer residuals than parameters");
    double rss = detail::sum_sq(r);

    std::vector<double> jac(nr * np);
    double lambda = opt.initial_lambda;
    bool converged = false;

    for (std::size_t iter = 0; iter < opt.max_iterations && !converged; ++iter) {
        // central-difference Jacobian
        for (std::size_t j = 0; j < np; ++j) {
            const double h = 1e-6 * scales[j];
            auto pp = out.params;
            pp[j] += h;
            const auto rp = eval(pp);
            pp[j] -= 2.0 * h;
            const auto rm = eval(pp);
            for (std::size_t i = 0; i < nr; ++i)
                jac[i * np + j] = (rp[i] - rm[i]) / (2.0 * h);
        }
        // normal equations
        std::vector<double> jtj(np * np, 0.0), jtr(np, 0.0);
        for (std::size_t i = 0; i < nr; ++i) {
            for (std::size_t a = 0; a < np; ++a) {
                jtr[a] += jac[i * np + a] * r[i];
                for (std::size_t b = a; b < np; ++b)
                    jtj[a * np + b] += jac[i * np + a] * jac[i * np + b];
            }
        }
        for (std::size_t a = 0; a < np; ++a)
            for (std::size_t b = 0; b < a; ++b)
                jtj[a * np + b] = jtj[b * np + a];

        bool accepted = false;
        for (int damp = 0; damp < 16 && !accepted; ++damp) {
            auto lhs = jtj;
            for (std::size_t a = 0; a < np; ++a) {
                const double d = jtj[a * np + a];
                lhs[a * np + a] += lambda * (d > 0.0 ? d : 1.0);
            }
            std::vector<double> step;
            try {
                std::vector<double> neg(np);
                for (std::size_t a = 0; a < np; ++a)
                    neg[a] = -jtr[a];
                step = detail::solve_linear(lhs, neg);
            } catch (const std::runtime_error&) {
                lambda *= 10.0;
                continue;
            }
            auto trial = out.params;
            for (std::size_t a = 0; a < np; ++a)
                trial[a] += step[a];
            const auto rt = eval(trial);
            const double rss_t = detail::sum_sq(rt);
            if (rss_t <= rss) {
                double max_rel_step = 0.0;
                for (std::size_t a = 0; a < np; ++a)
                    max_rel_step = std::max(max_rel_step, std::abs(step[a]) / scales[a]);
                const bool small_step = max_rel_step < opt.step_tolerance;
                const bool small_gain = (rss - rss_t) <= opt.rss_tolerance * std::max(rss, 1e-300);
                out.params = trial;
                r = rt;
                rss = rss_t;
                lambda = std::max(lambda * 0.3, 1e-12);
                accepted = true;
                if (small_step || small_gain)
                    converged = true;
            } else {
                lambda *= 10.0;
            }
        }
        if (!accepted)
            converged = true; // no descent direction left at max damping
    }

    out.rss = rss;
    out.converged = converged;
    out.n_eval = n_eval;

    // covariance from the final Jacobian, scaled by the residual variance
    try {
        std::vector<double> jtj(np * np, 0.0);
        for (std::size_t j = 0; j < np; ++j) {
            const double h = 1e-6 * scales[j];
            auto pp = out.params;
            pp[j] += h;
            const auto rp = eval(pp);
            pp[j] -= 2.0 * h;
            const auto rm = eval(pp);
            for (std::size_t i = 0; i < nr; ++i)
                jac[i * np + j] = (rp[i] - rm[i]) / (2.0 * h);
        }
        for (std::size_t i = 0; i < nr; ++i)
            for (std::size_t a = 0; a < np; ++a)
                for (std::size_t b = a; b < np; ++b)
                    jtj[a * np + b] += jac[i * np + a] * jac[i * np + b];
        for (std::size_t a = 0; a < np; ++a)
            for (std::size_t b = 0; b < a; ++b)
                jtj[a * np + b] = jtj[b * np + a];
        const auto inv = detail::invert(jtj, np);
        const double s2 = (nr > np) ? rss / static_cast<double>(nr - np) : 0.0;
        out.covariance.resize(np * np);
        out.sigmas.resize(np);
        for (std::size_t a = 0; a < np; ++a) {
            for (std::size_t b = 0; b < np; ++b)
                out.covariance[a * np + b] = s2 * inv[a * np + b];
            out.sigmas[a] = std::sqrt(std::max(out.covariance[a * np + a], 0.0));
        }
    } catch (const std::runtime_error&) {
        out.covariance.assign(np * np, 0.0);
        out.sigmas.assign(np, 0.0);
    }
    out.n_eval = n_eval;
    return out;
}

struct QuadraticFit {
    double a = 0.0, b = 0.0, c = 0.0; // y = a x^2 + b x + c
    std::vector<double> covariance;   // 3x3 row-major for (a, b, c)
    double rss = 0.0;                 // weighted residual sum of squares
    std::size_t n = 0;
};

/// Weighted quadratic regression, solved in closed form on centered abscissae
/// for conditioning. Weights w_i multiply the squared residuals.
inline QuadraticFit weighted_quadratic_fit(const std::vector<double>& x,
                                           const std::vector<double>& y,
                                           const std::vector<double>& w) {
    const std::size_t n = x.size();
    if (y.size() != n || w.size() != n)
        throw std::invalid_argument("weighted_quadratic_fit: size mismatch");
    if (n < 3)
        throw std::invalid_argument("weighted_quadratic_fit: need at least 3 points");

    double wsum = 0.0, xbar = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        wsum += w[i];
        xbar += w[i] * x[i];
    }
    if (!(wsum > 0.0))
        throw std::invalid_argument("weighted_quadratic_fit: nonpositive total weight");
    xbar /= wsum;

    // design on u = x - xbar: y = alpha u^2 + beta u + gamma
    std::vector<double> m(9, 0.0), rhs(3, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = x[i] - xbar;
        const double basis[3] = {u * u, u, 1.0};
        for (int a = 0; a < 3; ++a) {
            rhs[a] += w[i] * basis[a] * y[i];
            for (int b = 0; b < 3; ++b)
                m[a * 3 + b] += w[i] * basis[a] * basis[b];
        }
    }
    std::vector<double> sol;
    std::vector<double> minv;
    try {
        sol = detail::solve_linear(m, rhs);
        minv = detail::invert(m, 3);
    } catch (const std::runtime_error&) {
        throw std::runtime_error("weighted_quadratic_fit: degenerate design matrix");
    }
    const double alpha = sol[0], beta = sol[1], gamma = sol[2];

    QuadraticFit fit;
    fit.n = n;
    fit.a = alpha;
    fit.b = beta - 2.0 * alpha * xbar;
    fit.c = gamma - beta * xbar + alpha * xbar * xbar;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - (fit.a * x[i] * x[i] + fit.b * x[i] + fit.c);
        fit.rss += w[i] * r * r;
    }
    const double s2 = (n > 3) ? fit.rss / static_cast<double>(n - 3) : 0.0;
    // covariance of (a, b, c) from cov(alpha, beta, gamma) via the linear map
    //   a = alpha, b = beta - 2 xbar alpha, c = gamma - xbar beta + xbar^2 alpha
    const double t[9] = {1.0, 0.0, 0.0, -2.0 * xbar, 1.0, 0.0, xbar * xbar, -xbar, 1.0};
    fit.covariance.assign(9, 0.0);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            double acc = 0.0;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    acc += t[a * 3 + i] * minv[i * 3 + j] * t[b * 3 + j];
            fit.covariance[a * 3 + b] = s2 * acc;
        }
    return fit;
}

} // namespace rydsim
