#include "cvrace/studentized_range.hpp"

#include "cvrace/error.hpp"
#include "cvrace/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

// P(Q <= q) = integral over s of f_df(s) * W(q s), where s = chi_df / sqrt(df)
// is the scaled pooled standard deviation and W is the CDF of the range of m
// standard normals:
//   W(w) = m * integral phi(z) [Phi(z + w) - Phi(z)]^(m-1) dz.
// The inner integral uses a fixed 64-node Gauss-Legendre rule on [-8, 8]; the
// outer integral is adaptive over the effective support of f_df. Everything is
// computed as an upper tail so that small alpha keeps its absolute accuracy.

namespace cvrace::stats {

namespace {

constexpr double kInnerHalfWidth = 8.0;
constexpr std::size_t kInnerNodes = 64;
// 1 - W(w) < 1e-15 for every m used here once w exceeds this.
constexpr double kRangeCap = 12.0;
constexpr double kLogDensityDrop = 50.0;
constexpr double kOuterTolerance = 1e-12;

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

// Phi(hi) - Phi(lo) for lo <= hi, evaluated on the side with less cancellation.
double normal_mass(double lo, double hi)
{
    constexpr double r = std::numbers::sqrt2 / 2.0;
    if (lo >= 0.0) {
        return 0.5 * (std::erfc(lo * r) - std::erfc(hi * r));
    }
    if (hi <= 0.0) {
        return 0.5 * (std::erfc(-hi * r) - std::erfc(-lo * r));
    }
    return 1.0 - 0.5 * (std::erfc(-lo * r) + std::erfc(hi * r));
}

void check_args(std::size_t m, double df)
{
    if (m < 2) {
        throw std::invalid_argument("studentized range needs m >= 2");
    }
    if (!(df >= 1.0)) {
        throw std::invalid_argument("studentized range needs df >= 1");
    }
}

double range_upper(double w, std::size_t m)
{
    if (w <= 0.0) {
        return 1.0;
    }
    const auto& rule = quad::gauss_legendre(kInnerNodes);
    const double power = static_cast<double>(m - 1);
    const double inner = quad::fixed(
        rule, [&](double z) { return normal_pdf(z) * std::pow(normal_mass(z, z + w), power); }, -kInnerHalfWidth,
        kInnerHalfWidth);
    const double tail = 1.0 - static_cast<double>(m) * inner;
    return tail < 0.0 ? 0.0 : tail;
}

// log density of s = chi_df / sqrt(df).
struct ScaledChi {
    double df;
    double log_norm;

    explicit ScaledChi(double nu)
        : df(nu)
        , log_norm(0.5 * nu * std::log(nu) - std::lgamma(0.5 * nu) - (0.5 * nu - 1.0) * std::numbers::ln2)
    {
    }

    [[nodiscard]] double log_pdf(double s) const
    {
        if (s <= 0.0) {
            return df == 1.0 ? log_norm : -std::numeric_limits<double>::infinity();
        }
        return log_norm + (df - 1.0) * std::log(s) - 0.5 * df * s * s;
    }

    [[nodiscard]] double mode() const { return std::sqrt((df - 1.0) / df); }

    // Interval outside which the density is below exp(-kLogDensityDrop) of its peak.
    [[nodiscard]] std::pair<double, double> support() const
    {
        const double peak = mode();
        const double level = log_pdf(peak) - kLogDensityDrop;
        auto solve = [&](double inside, double outside) {
            for (int i = 0; i < 200; ++i) {
                const double mid = 0.5 * (inside + outside);
                (log_pdf(mid) > level ? inside : outside) = mid;
            }
            return 0.5 * (inside + outside);
        };
        double hi = peak + 1.0;
        while (log_pdf(hi) > level) {
            hi = peak + 2.0 * (hi - peak);
        }
        const double upper = solve(peak, hi);
        const double lower = df == 1.0 ? 0.0 : solve(peak, 0.0);
        return {lower, upper};
    }
};

} // namespace

double normal_range_cdf(double w, std::size_t m)
{
    check_args(m, kInfiniteDf);
    return 1.0 - range_upper(w, m);
}

double studentized_range_upper(double q, std::size_t m, double df)
{
    check_args(m, df);
    if (q <= 0.0) {
        return 1.0;
    }
    if (df >= kLargeDf) {
        return range_upper(q, m);
    }
    const ScaledChi chi(df);
    auto [lo, hi] = chi.support();
    hi = std::min(hi, kRangeCap / q);
    if (hi <= lo) {
        return 0.0;
    }
    const auto result = quad::adaptive(
        [&](double s) {
            const double lp = chi.log_pdf(s);
            return std::isfinite(lp) ? std::exp(lp) * range_upper(q * s, m) : 0.0;
        },
        lo, hi, kOuterTolerance, 16);
    if (!result.converged && result.error_estimate > 1e-8) {
        std::ostringstream os;
        os << "studentized range integral did not converge (error estimate " << result.error_estimate << ")";
        throw NumericalError(os.str());
    }
    return std::clamp(result.value, 0.0, 1.0);
}

double studentized_range_cdf(double q, std::size_t m, double df) { return 1.0 - studentized_range_upper(q, m, df); }

double studentized_range_quantile(double alpha, std::size_t m, double df)
{
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("alpha must lie in (0, 1)");
    }
    check_args(m, df);
    auto gap = [&](double q) { return studentized_range_upper(q, m, df) - alpha; };

    // Upper tail decreases in q: gap(lo) > 0 >= gap(hi).
    double lo = 0.0;
    double hi = 4.0;
    double g_hi = gap(hi);
    while (g_hi > 0.0) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e8) {
            throw NumericalError("studentized range quantile: no upper bracket");
        }
        g_hi = gap(hi);
    }

    double q = 0.5 * (lo + hi);
    double g = gap(q);
    for (int i = 0; i < 200 && std::abs(g) > 1e-6; ++i) {
        (g > 0.0 ? lo : hi) = q;
        q = 0.5 * (lo + hi);
        g = gap(q);
    }

    // Newton polish on the bracketed root with a central-difference slope.
    for (int i = 0; i < 20 && std::abs(g) > 1e-13; ++i) {
        (g > 0.0 ? lo : hi) = q;
        const double h = 1e-6 * std::max(q, 1.0);
        const double slope = (gap(q + h) - gap(q - h)) / (2.0 * h);
        double next = slope < 0.0 ? q - g / slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) {
            next = 0.5 * (lo + hi);
        }
        const double g_next = gap(next);
        if (std::abs(g_next) >= std::abs(g) && std::abs(next - q) < 1e-14 * q) {
            break;
        }
        q = next;
        g = g_next;
    }
    if (!(std::abs(g) <= 1e-6)) {
        std::ostringstream os;
        os << "studentized range quantile (alpha=" << alpha << ", m=" << m << ", df=" << df
           << ") reached only |P - target| = " << std::abs(g);
        throw NumericalError(os.str());
    }
    return q;
}

} // namespace cvrace::stats
