// Adaptive Simpson quadrature, used by the numeric KL oracle and by
// density-normalization checks.
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

namespace rts::quad {

namespace detail {
inline double simpson(double a, double fa, double b, double fb, double fm) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adapt(const std::function<double(double)>& f, double a, double fa, double b,
                    double fb, double m, double fm, double whole, double tol, int depth) {
    if (depth > 60) throw std::runtime_error("adaptive_simpson: recursion limit (non-convergence)");
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = simpson(a, fa, m, fm, flm);
    double right = simpson(m, fm, b, fb, frm);
    if (std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adapt(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth + 1) +
           adapt(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth + 1);
}
}  // namespace detail

// Starts from a uniform 16-panel split so narrow peaks inside a wide
// integration range are not skipped by the first probe points.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol = 1e-10) {
    if (!(a < b)) throw std::invalid_argument("adaptive_simpson: need a < b");
    const int panels = 16;
    const double h = (b - a) / panels;
    double total = 0.0;
    for (int i = 0; i < panels; ++i) {
        double lo = a + i * h;
        double hi = (i == panels - 1) ? b : lo + h;
        double m = 0.5 * (lo + hi);
        double flo = f(lo), fhi = f(hi), fm = f(m);
        if (!std::isfinite(flo) || !std::isfinite(fhi) || !std::isfinite(fm))
            throw std::domain_error("adaptive_simpson: non-finite integrand");
        double whole = detail::simpson(lo, flo, hi, fhi, fm);
        total += detail::adapt(f, lo, flo, hi, fhi, m, fm, whole, tol / panels, 0);
    }
    return total;
}

}  // namespace rts::quad
