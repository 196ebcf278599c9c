#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace cvrace::quad {

// Gauss-Legendre rule on [-1, 1].
struct Rule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Nodes by Newton iteration on P_n; cached per order, thread-safe.
[[nodiscard]] const Rule& gauss_legendre(std::size_t order);

// Fixed-rule integral of f over [a, b].
template <class F>
double fixed(const Rule& rule, F&& f, double a, double b)
{
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double sum = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
    }
    return sum * half;
}

struct AdaptiveResult {
    double value = 0.0;
    double error_estimate = 0.0;
    bool converged = true;
};

namespace detail {

template <class F>
void adaptive_step(const Rule& rule, F& f, double a, double b, double whole, double tol, int depth,
                   AdaptiveResult& out)
{
    const double mid = 0.5 * (a + b);
    const double left = fixed(rule, f, a, mid);
    const double right = fixed(rule, f, mid, b);
    const double diff = left + right - whole;
    if (std::abs(diff) <= tol || depth <= 0) {
        if (depth <= 0 && std::abs(diff) > tol) {
            out.converged = false;
        }
        out.value += left + right;
        out.error_estimate += std::abs(diff);
        return;
    }
    adaptive_step(rule, f, a, mid, left, 0.5 * tol, depth - 1, out);
    adaptive_step(rule, f, mid, b, right, 0.5 * tol, depth - 1, out);
}

} // namespace detail

// Adaptive bisection with a 16-point Gauss-Legendre panel rule, starting from
// `panels` equal panels. `tol` is an absolute tolerance on the whole integral.
template <class F>
AdaptiveResult adaptive(F&& f, double a, double b, double tol, std::size_t panels = 8, int max_depth = 30)
{
    const Rule& rule = gauss_legendre(16);
    AdaptiveResult out;
    const double width = (b - a) / static_cast<double>(panels);
    for (std::size_t p = 0; p < panels; ++p) {
        const double lo = a + width * static_cast<double>(p);
        const double hi = p + 1 == panels ? b : lo + width;
        const double whole = fixed(rule, f, lo, hi);
        detail::adaptive_step(rule, f, lo, hi, whole, tol / static_cast<double>(panels), max_depth, out);
    }
    return out;
}

} // namespace cvrace::quad
