#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace fshrink {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace num {

// Fourth-order first derivative on a uniform grid; one-sided stencils near the ends.
inline std::vector<double> d1(const std::vector<double>& f, double h) {
    const std::size_t n = f.size();
    if (n < 5) throw std::invalid_argument("d1: need at least 5 samples");
    std::vector<double> d(n);
    for (std::size_t i = 2; i + 2 < n; ++i)
        d[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h);
    auto fwd = [&](std::size_t i) {
        return (-25.0 * f[i] + 48.0 * f[i + 1] - 36.0 * f[i + 2] + 16.0 * f[i + 3] - 3.0 * f[i + 4]) / (12.0 * h);
    };
    auto fwd1 = [&](std::size_t i) {
        return (-3.0 * f[i - 1] - 10.0 * f[i] + 18.0 * f[i + 1] - 6.0 * f[i + 2] + f[i + 3]) / (12.0 * h);
    };
    auto bwd = [&](std::size_t i) {
        return (25.0 * f[i] - 48.0 * f[i - 1] + 36.0 * f[i - 2] - 16.0 * f[i - 3] + 3.0 * f[i - 4]) / (12.0 * h);
    };
    auto bwd1 = [&](std::size_t i) {
        return (3.0 * f[i + 1] + 10.0 * f[i] - 18.0 * f[i - 1] + 6.0 * f[i - 2] - f[i - 3]) / (12.0 * h);
    };
    d[0] = fwd(0);
    d[1] = fwd1(1);
    d[n - 1] = bwd(n - 1);
    d[n - 2] = bwd1(n - 2);
    return d;
}

// Fourth-order second derivative on a uniform grid; one-sided stencils near the ends.
inline std::vector<double> d2(const std::vector<double>& f, double h) {
    const std::size_t n = f.size();
    if (n < 6) throw std::invalid_argument("d2: need at least 6 samples");
    std::vector<double> d(n);
    const double h2 = h * h;
    for (std::size_t i = 2; i + 2 < n; ++i)
        d[i] = (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]) / (12.0 * h2);
    auto fwd = [&](std::size_t i) {
        return (45.0 * f[i] - 154.0 * f[i + 1] + 214.0 * f[i + 2] - 156.0 * f[i + 3] + 61.0 * f[i + 4] -
                10.0 * f[i + 5]) / (12.0 * h2);
    };
    auto fwd1 = [&](std::size_t i) {
        return (10.0 * f[i - 1] - 15.0 * f[i] - 4.0 * f[i + 1] + 14.0 * f[i + 2] - 6.0 * f[i + 3] + f[i + 4]) /
               (12.0 * h2);
    };
    auto bwd = [&](std::size_t i) {
        return (45.0 * f[i] - 154.0 * f[i - 1] + 214.0 * f[i - 2] - 156.0 * f[i - 3] + 61.0 * f[i - 4] -
                10.0 * f[i - 5]) / (12.0 * h2);
    };
    auto bwd1 = [&](std::size_t i) {
        return (10.0 * f[i + 1] - 15.0 * f[i] - 4.0 * f[i - 1] + 14.0 * f[i - 2] - 6.0 * f[i - 3] + f[i - 4]) /
               (12.0 * h2);
    };
    d[0] = fwd(0);
    d[1] = fwd1(1);
    d[n - 1] = bwd(n - 1);
    d[n - 2] = bwd1(n - 2);
    return d;
}

// Second-order time derivative on a uniform grid (central inside, one-sided at the ends).
inline std::vector<double> dt2(const std::vector<double>& f, double h) {
    const std::size_t n = f.size();
    if (n < 3) throw std::invalid_argument("dt2: need at least 3 samples");
    std::vector<double> d(n);
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    return d;
}

inline double trapezoid(const std::vector<double>& f, double h) {
    if (f.empty()) return 0.0;
    double s = 0.5 * (f.front() + f.back());
    for (std::size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
    return s * h;
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double max_abs_residual = 0.0;
    std::size_t count = 0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need >= 2 paired samples");
    const double m = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / m, my = sy / m;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_line: degenerate abscissae");
    LineFit out;
    out.slope = sxy / sxx;
    out.intercept = my - out.slope * mx;
    out.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    out.count = x.size();
    for (std::size_t i = 0; i < x.size(); ++i)
        out.max_abs_residual = std::max(out.max_abs_residual, std::abs(y[i] - out.slope * x[i] - out.intercept));
    return out;
}

// Least squares for y ~ sum_k c_k * basis_k(x).
template <class Basis>
Vec fit_basis(const std::vector<double>& x, const std::vector<double>& y, int nbasis, Basis basis) {
    Mat A(static_cast<Eigen::Index>(x.size()), nbasis);
    Vec b(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (int k = 0; k < nbasis; ++k) A(static_cast<Eigen::Index>(i), k) = basis(k, x[i]);
        b(static_cast<Eigen::Index>(i)) = y[i];
    }
    return A.colPivHouseholderQr().solve(b);
}

// Quintic Hermite interpolation from value and first two derivatives at both ends.
struct Jet {
    double f, f1, f2;
};

inline Jet hermite5(double x0, const Jet& a, double x1, const Jet& b, double x) {
    const double h = x1 - x0;
    const double s = (x - x0) / h;
    const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
    const double h00 = 1 - 10 * s3 + 15 * s4 - 6 * s5, h01 = 10 * s3 - 15 * s4 + 6 * s5;
    const double h10 = s - 6 * s3 + 8 * s4 - 3 * s5, h11 = -4 * s3 + 7 * s4 - 3 * s5;
    const double h20 = 0.5 * (s2 - 3 * s3 + 3 * s4 - s5), h21 = 0.5 * (s3 - 2 * s4 + s5);
    const double d00 = -30 * s2 + 60 * s3 - 30 * s4, d01 = -d00;
    const double d10 = 1 - 18 * s2 + 32 * s3 - 15 * s4, d11 = -12 * s2 + 28 * s3 - 15 * s4;
    const double d20 = 0.5 * (2 * s - 9 * s2 + 12 * s3 - 5 * s4), d21 = 0.5 * (3 * s2 - 8 * s3 + 5 * s4);
    const double e00 = -60 * s + 180 * s2 - 120 * s3, e01 = -e00;
    const double e10 = -36 * s + 96 * s2 - 60 * s3, e11 = -24 * s + 84 * s2 - 60 * s3;
    const double e20 = 0.5 * (2 - 18 * s + 36 * s2 - 20 * s3), e21 = 0.5 * (6 * s - 24 * s2 + 20 * s3);
    Jet out;
    out.f = h00 * a.f + h01 * b.f + h * (h10 * a.f1 + h11 * b.f1) + h * h * (h20 * a.f2 + h21 * b.f2);
    out.f1 = (d00 * a.f + d01 * b.f) / h + (d10 * a.f1 + d11 * b.f1) + h * (d20 * a.f2 + d21 * b.f2);
    out.f2 = (e00 * a.f + e01 * b.f) / (h * h) + (e10 * a.f1 + e11 * b.f1) / h + (e20 * a.f2 + e21 * b.f2);
    return out;
}

// Portable uniform draws from a fixed 64-bit engine.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        // Box-Muller on the portable uniforms.
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
    std::uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
};

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> v(n);
    if (n == 1) {
        v[0] = a;
        return v;
    }
    for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

inline std::vector<double> geomspace(double a, double b, std::size_t n) {
    std::vector<double> v(n);
    const double la = std::log(a), lb = std::log(b);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = std::exp(la + (lb - la) * static_cast<double>(i) / static_cast<double>(n > 1 ? n - 1 : 1));
    if (n > 1) {
        v.front() = a;
        v.back() = b;
    }
    return v;
}

}  // namespace num
}  // namespace fshrink
