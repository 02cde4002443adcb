#pragma once

#include "mops/common.hpp"

namespace mops {

// Central-difference gradient estimate, the oracle every analytic gradient
// in this library is checked against.
template <class F>
Vec finite_diff_grad(F&& f, const Vec& x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
    if (!all_finite(x)) throw std::invalid_argument("finite_diff_grad: non-finite point");
    Vec g(x.size());
    Vec p = x;
    for (size_t j = 0; j < x.size(); ++j) {
        double orig = p[j];
        p[j] = orig + h;
        double fp = f(p);
        p[j] = orig - h;
        double fm = f(p);
        p[j] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_diff_grad: non-finite function value");
        g[j] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace mops
