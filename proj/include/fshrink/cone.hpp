#pragma once

#include "curvature.hpp"

#include <boost/math/tools/roots.hpp>

#include <string>
#include <vector>

namespace fshrink {

// Rotationally symmetric cone {(sigma s nu, s)}; orientation +1 points the normal toward the axis.
struct ConeSpec {
    int n = 2;
    double sigma = 1.0;
    int orientation = 1;

    void validate() const {
        if (n < 2) throw std::invalid_argument("cone.n must be >= 2");
        if (!(sigma > 0.0)) throw std::invalid_argument("cone.sigma must be > 0");
        if (orientation != 1 && orientation != -1) throw std::invalid_argument("cone.orientation must be +1 or -1");
    }
    double position_norm(double s) const { return s * std::sqrt(1.0 + sigma * sigma); }
};

// Principal curvatures at height s: rotational directions first, the generator last.
inline Vec cone_principal_curvatures(const ConeSpec& cone, double s) {
    cone.validate();
    if (!(s > 0.0)) throw std::invalid_argument("cone height s must be > 0");
    Vec k = Vec::Constant(cone.n, cone.orientation / (cone.sigma * cone.position_norm(s)));
    k[cone.n - 1] = 0.0;
    return k;
}

inline Mat cone_shape_operator(const ConeSpec& cone, double s) { return cone_principal_curvatures(cone, s).asDiagonal(); }

// Totally symmetric covariant derivative of the cone's second fundamental form in its principal frame.
struct Tensor3 {
    int n = 0;
    std::vector<double> data;
    double operator()(int i, int j, int k) const { return data[(i * n + j) * n + k]; }
    double& operator()(int i, int j, int k) { return data[(i * n + j) * n + k]; }
    // Slice along the derivative slot.
    Mat slice(int m) const {
        Mat T(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) T(i, j) = (*this)(m, i, j);
        return T;
    }
};

inline Tensor3 cone_nabla_A(const ConeSpec& cone, double s) {
    cone.validate();
    if (!(s > 0.0)) throw std::invalid_argument("cone height s must be > 0");
    const int n = cone.n;
    const double X = cone.position_norm(s);
    const double c = -cone.orientation / (cone.sigma * X * X);
    Tensor3 t{n, std::vector<double>(static_cast<std::size_t>(n * n * n), 0.0)};
    for (int i = 0; i < n - 1; ++i) {
        t(i, i, n - 1) = c;
        t(i, n - 1, i) = c;
        t(n - 1, i, i) = c;
    }
    return t;
}

struct ConeSampling {
    double s_min = 1.0 / 3.0;
    double s_max = 3.0;
    std::size_t points = 64;
    std::string note() const {
        return "geometric grid of " + std::to_string(points) + " heights on the annulus; constant along rays";
    }
};

inline std::vector<double> cone_sample_heights(const ConeSampling& smp) {
    if (smp.points < 2 || !(smp.s_min > 0.0) || !(smp.s_max > smp.s_min))
        throw std::invalid_argument("cone sampling needs 0 < s_min < s_max and >= 2 points");
    return num::geomspace(smp.s_min, smp.s_max, smp.points);
}

inline double ellipticity_lambda(const CurvatureSpec& spec, const ConeSpec& cone, const ConeSampling& smp = {}) {
    if (spec.n != cone.n) throw std::invalid_argument("spec and cone dimensions differ");
    double lam = 1.0;
    for (double s : cone_sample_heights(smp)) {
        const Vec g = grad_f(spec, cone_principal_curvatures(cone, s));
        // dF/dS at a diagonal point is diagonal with the gradient entries.
        lam = std::min({lam, g.minCoeff(), 1.0 / g.maxCoeff()});
    }
    return lam;
}

// |X| times the largest Frobenius norm of d2F[nabla_v A] over unit directions v.
inline double kappa_integrand(const CurvatureSpec& spec, const ConeSpec& cone, double s) {
    const int n = cone.n;
    const MatrixPoint p = make_matrix_point(cone_shape_operator(cone, s));
    const Tensor3 dA = cone_nabla_A(cone, s);
    Mat cols(n * n, n);
    for (int m = 0; m < n; ++m) {
        const Mat C = d2F_contract(spec, p, dA.slice(m));
        cols.col(m) = Eigen::Map<const Vec>(C.data(), n * n);
    }
    Eigen::JacobiSVD<Mat> svd(cols);
    return cone.position_norm(s) * svd.singularValues()[0];
}

inline double kappa_constant(const CurvatureSpec& spec, const ConeSpec& cone, const ConeSampling& smp = {}) {
    if (spec.n != cone.n) throw std::invalid_argument("spec and cone dimensions differ");
    double k = 0.0;
    for (double s : cone_sample_heights(smp)) k = std::max(k, kappa_integrand(spec, cone, s));
    return k;
}

inline double kappa_bound_constant(int n) { return static_cast<double>(n) * n; }

// C(n) (|d2f(1,...,1,0)| + |d1 f - dn f|) with C(n) = n^2 and the Frobenius norm on the Hessian.
inline double kappa_bound_rotsym(const CurvatureSpec& spec) {
    Vec v = Vec::Ones(spec.n);
    v[spec.n - 1] = 0.0;
    const Vec g = grad_f(spec, v);
    const Mat H = hess_f(spec, v);
    return kappa_bound_constant(spec.n) * (H.norm() + std::abs(g[0] - g[spec.n - 1]));
}

struct HypothesisReport {
    double lambda = 0.0;
    double kappa = 0.0;
    double bound = 0.0;
    bool satisfied = false;
    double s_min = 1.0 / 3.0;
    double s_max = 3.0;
    std::string sampling;
    std::string kappa_norm = "Frobenius over the free slot, sup over unit derivative directions";
    std::string reason;
};

inline HypothesisReport check_uniqueness_hypothesis(const CurvatureSpec& spec, const ConeSpec& cone,
                                                    const ConeSampling& smp = {}) {
    HypothesisReport r;
    r.s_min = smp.s_min;
    r.s_max = smp.s_max;
    r.sampling = smp.note();
    try {
        r.lambda = ellipticity_lambda(spec, cone, smp);
        r.kappa = kappa_constant(spec, cone, smp);
    } catch (const DomainError& e) {
        r.reason = e.what();
        return r;
    }
    r.bound = r.lambda > 0.0 ? r.lambda * r.lambda * r.lambda / 1296.0 : 0.0;
    r.satisfied = r.lambda > 0.0 && r.kappa <= r.bound;
    if (!r.satisfied) r.reason = r.lambda > 0.0 ? "kappa exceeds the bound" : "ellipticity lost";
    return r;
}

struct EpsilonSearch {
    double eps_star = 0.0;
    double lower = 0.0;  // satisfied
    double upper = 0.0;  // not satisfied
};

// Bisection on the satisfied flag of a one-parameter family.
template <class Family>
EpsilonSearch max_admissible_epsilon(Family family, const ConeSpec& cone, double tol = 1e-6, double eps_min = 0.0,
                                     double eps_max = 1.0, const ConeSampling& smp = {}) {
    if (!(tol > 0.0)) throw std::invalid_argument("tol must be > 0");
    auto ok = [&](double e) { return check_uniqueness_hypothesis(family(e), cone, smp).satisfied; };
    if (!ok(eps_min)) throw std::runtime_error("hypothesis fails at lower bracket");
    double hi = eps_max;
    for (int k = 0; ok(hi); ++k) {
        if (k > 40) throw std::runtime_error("hypothesis holds on the whole search range");
        hi *= 2.0;
    }
    auto sign = [&](double e) { return ok(e) ? -1.0 : 1.0; };
    auto stop = [tol](double a, double b) { return b - a <= tol; };
    boost::uintmax_t iters = 200;
    const auto br = boost::math::tools::bisect(sign, eps_min, hi, stop, iters);
    EpsilonSearch out;
    out.lower = br.first;
    out.upper = br.second;
    out.eps_star = 0.5 * (br.first + br.second);
    return out;
}

}  // namespace fshrink
