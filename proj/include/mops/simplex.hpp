#pragma once

#include <algorithm>
#include <numeric>

#include "mops/common.hpp"

namespace mops {

// Nonnegative weights summing to one, one entry per agent.
class WeightSimplex {
  public:
    WeightSimplex() = default;
    explicit WeightSimplex(Vec w) : w_(std::move(w)) {
        if (w_.empty()) throw std::invalid_argument("WeightSimplex: empty");
        double s = 0.0;
        for (double x : w_) {
            if (!(x >= 0.0)) throw std::invalid_argument("WeightSimplex: negative entry");
            s += x;
        }
        if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("WeightSimplex: sum != 1");
    }

    static WeightSimplex uniform(size_t n) {
        if (n == 0) throw std::invalid_argument("WeightSimplex: empty");
        return WeightSimplex(Vec(n, 1.0 / static_cast<double>(n)));
    }

    const Vec& values() const { return w_; }
    double operator[](size_t i) const { return w_[i]; }
    size_t size() const { return w_.size(); }

  private:
    Vec w_;
};

// Euclidean projection onto the probability simplex (sort-based, exact).
// Inputs already on the simplex (within 1e-12) are returned verbatim, which
// makes the projection exactly idempotent.
inline WeightSimplex project_simplex(const Vec& v) {
    if (v.empty()) throw std::invalid_argument("project_simplex: empty vector");
    if (!all_finite(v)) throw std::invalid_argument("project_simplex: non-finite input");

    double s = std::accumulate(v.begin(), v.end(), 0.0);
    bool nonneg = std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0; });
    if (nonneg && std::abs(s - 1.0) <= 1e-12) return WeightSimplex(v);

    Vec u = v;
    std::sort(u.begin(), u.end(), std::greater<>());
    double css = 0.0, tau = 0.0;
    size_t rho = 0;
    for (size_t j = 0; j < u.size(); ++j) {
        css += u[j];
        double t = (css - 1.0) / static_cast<double>(j + 1);
        if (u[j] - t > 0.0) {
            rho = j + 1;
            tau = t;
        }
    }
    Vec x(v.size());
    for (size_t i = 0; i < v.size(); ++i) x[i] = std::max(v[i] - tau, 0.0);
    (void)rho;
    return WeightSimplex(std::move(x));
}

struct MinNormResult {
    WeightSimplex weights;
    double norm = 0.0;
};

// Minimizes ||sum_i w_i g_i|| over the simplex by projected gradient on the
// Gram form, fixed step 1/lambda_max, starting from the uniform point (which
// also breaks ties toward uniform). Stops when the objective improvement
// falls below 1e-8 relative to its initial scale; hard cap 10000 iterations.
inline MinNormResult min_norm_weights(const std::vector<Vec>& grads) {
    if (grads.empty()) throw std::invalid_argument("min_norm_weights: no gradients");
    const size_t n = grads.size();
    const size_t dim = grads[0].size();
    for (const auto& g : grads) {
        if (g.size() != dim) throw std::invalid_argument("min_norm_weights: dimension mismatch");
        if (!all_finite(g)) throw std::invalid_argument("min_norm_weights: non-finite gradient");
    }

    std::vector<Vec> gram(n, Vec(n));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i; j < n; ++j) gram[i][j] = gram[j][i] = dot(grads[i], grads[j]);

    auto apply = [&](const Vec& x) {
        Vec y(n, 0.0);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j) y[i] += gram[i][j] * x[j];
        return y;
    };
    auto objective = [&](const Vec& x) {
        double f = 0.0;
        Vec gx = apply(x);
        for (size_t i = 0; i < n; ++i) f += x[i] * gx[i];
        return f;
    };

    // lambda_max by power iteration; the trace bounds it from above and
    // serves as a fallback for degenerate cases.
    double trace = 0.0;
    for (size_t i = 0; i < n; ++i) trace += gram[i][i];
    double lam = trace;
    if (trace > 0.0) {
        Vec p(n, 1.0 / std::sqrt(static_cast<double>(n)));
        for (int it = 0; it < 64; ++it) {
            Vec q = apply(p);
            double nq = norm2(q);
            if (nq <= trace * 1e-18) break;
            for (auto& x : q) x /= nq;
            p = q;
            lam = dot(p, apply(p));
        }
        lam = std::min(std::max(lam, trace / static_cast<double>(n)), trace);
    }

    Vec x(n, 1.0 / static_cast<double>(n));
    double f = objective(x);
    if (lam > 0.0) {
        const double tol = 1e-8 * std::max(1.0, f);
        for (int it = 0; it < 10000; ++it) {
            Vec step = apply(x);
            for (size_t i = 0; i < n; ++i) step[i] = x[i] - step[i] / lam;
            x = project_simplex(step).values();
            double fn = objective(x);
            if (std::abs(f - fn) <= tol) {
                f = fn;
                break;
            }
            f = fn;
        }
    }
    return MinNormResult{WeightSimplex(x), std::sqrt(std::max(f, 0.0))};
}

}  // namespace mops
