#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

// Scalar distribution functions used by recalibration and the metric suite.

namespace bcgan::stats {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
}

// Inverse standard normal CDF, rational initial guess (Acklam) polished with
// one Halley step; round-trips through normal_cdf to ~1e-15.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("normal_quantile: p must lie strictly inside (0, 1)");

    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;

    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= phigh) {
        double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley refinement
    double e = normal_cdf(x) - p;
    double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

namespace detail {

// continued fraction for the regularized incomplete beta (Lentz)
inline double betacf(double a, double b, double x) {
    const double fpmin = 1e-300, eps = 1e-15;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 400; ++m) {
        double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace detail

// regularized incomplete beta I_x(a, b)
inline double incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) throw std::invalid_argument("incomplete_beta: x outside [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * detail::betacf(a, b, x) / a;
    return 1.0 - bt * detail::betacf(b, a, 1.0 - x) / b;
}

// two-sided p-value for Student's t with df degrees of freedom
inline double student_t_pvalue(double t, double df) {
    if (df <= 0.0) throw std::invalid_argument("student_t_pvalue: df must be positive");
    if (std::isinf(t)) return 0.0;
    double x = df / (df + t * t);
    return incomplete_beta(0.5 * df, 0.5, x);
}

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
};

// two-sided paired t-test on matched samples
inline TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("paired_ttest: length mismatch");
    size_t n = a.size();
    if (n < 2) throw std::invalid_argument("paired_ttest: need at least two pairs");
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= double(n);
    double ss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double d = (a[i] - b[i]) - mean;
        ss += d * d;
    }
    double sd = std::sqrt(ss / double(n - 1));
    if (sd == 0.0)
        throw std::invalid_argument("paired_ttest: differences have zero variance, t undefined");
    TTestResult r;
    r.df = double(n - 1);
    r.t = mean / (sd / std::sqrt(double(n)));
    r.p = student_t_pvalue(r.t, r.df);
    return r;
}

}  // namespace bcgan::stats
