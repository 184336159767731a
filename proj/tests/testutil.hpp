#pragma once
#include <cmath>
#include <functional>

#include "mgan/rng.hpp"
#include "mgan/tensor.hpp"

namespace mgan::testutil {

inline void fill_uniform(Tensor& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
    for (double& v : t.data) v = rng.uniform(lo, hi);
}

inline Tensor random_tensor(int c, int h, int w, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(c, h, w);
    fill_uniform(t, rng, lo, hi);
    return t;
}

inline double weighted_sum(const Tensor& y, const Tensor& w) {
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) s += y.data[i] * w.data[i];
    return s;
}

inline double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-12});
    return std::abs(a - b) / denom;
}

// Central finite difference of f at *slot with step h.
inline double central_diff(std::function<double()> f, double* slot, double h) {
    const double keep = *slot;
    *slot = keep + h;
    const double up = f();
    *slot = keep - h;
    const double down = f();
    *slot = keep;
    return (up - down) / (2.0 * h);
}

// True when analytic and finite-difference agree: tight relative error for
// gradients of ordinary size, absolute floor for gradients near zero.
inline bool grad_close(double analytic, double fd, double rel_tol, double abs_floor = 1e-8) {
    if (std::abs(analytic - fd) <= abs_floor) return true;
    return rel_err(analytic, fd) <= rel_tol;
}

}  // namespace mgan::testutil
