#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mops {

using Vec = std::vector<double>;

// Error taxonomy shared by all modules. Plain std::invalid_argument is used
// for precondition violations on arguments.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};
struct BarrierViolation : std::logic_error {
    using std::logic_error::logic_error;
};
struct ChannelClosed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, const Vec& x, Vec& y) {
    if (x.size() != y.size()) throw std::invalid_argument("axpy: dimension mismatch");
    for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vec scaled(const Vec& x, double alpha) {
    Vec out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = alpha * x[i];
    return out;
}

// Solves A x = b for a small symmetric positive definite system (in-place
// Cholesky). Used by the least-squares fits; sizes here never exceed a few
// dozen.
inline Vec solve_spd(std::vector<Vec> a, Vec b) {
    const size_t n = b.size();
    if (a.size() != n) throw std::invalid_argument("solve_spd: shape mismatch");
    for (size_t j = 0; j < n; ++j) {
        double d = a[j][j];
        for (size_t k = 0; k < j; ++k) d -= a[j][k] * a[j][k];
        if (!(d > 0.0)) throw NumericError("solve_spd: matrix not positive definite");
        a[j][j] = std::sqrt(d);
        for (size_t i = j + 1; i < n; ++i) {
            double s = a[i][j];
            for (size_t k = 0; k < j; ++k) s -= a[i][k] * a[j][k];
            a[i][j] = s / a[j][j];
        }
    }
    for (size_t i = 0; i < n; ++i) {  // L y = b
        double s = b[i];
        for (size_t k = 0; k < i; ++k) s -= a[i][k] * b[k];
        b[i] = s / a[i][i];
    }
    for (size_t ii = n; ii-- > 0;) {  // L^T x = y
        double s = b[ii];
        for (size_t k = ii + 1; k < n; ++k) s -= a[k][ii] * b[k];
        b[ii] = s / a[ii][ii];
    }
    return b;
}

}  // namespace mops
