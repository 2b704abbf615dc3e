#pragma once

#include "revolution.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <string>
#include <vector>

namespace fshrink {

// Segment-averaged, symmetrized dF/dS between two rotationally symmetric shape operators.
// Stored in the orthonormal (profile, rotation) frame, where it is diagonal.
struct CoefficientTensor {
    int n = 2;
    std::vector<double> prof, rot;
    std::vector<double> quadrature_delta;  // |8-node - 16-node| per sample

    std::size_t size() const { return prof.size(); }
    std::vector<double> trace() const {
        std::vector<double> tr(size());
        for (std::size_t i = 0; i < size(); ++i) tr[i] = prof[i] + (n - 1) * rot[i];
        return tr;
    }
    double max_quadrature_delta() const {
        double m = 0.0;
        for (double d : quadrature_delta) m = std::max(m, d);
        return m;
    }
};

namespace detail {

template <int N>
void gauss_nodes(std::vector<double>& theta, std::vector<double>& weight) {
    using Q = boost::math::quadrature::gauss<double, N>;
    const auto& x = Q::abscissa();
    const auto& w = Q::weights();
    theta.clear();
    weight.clear();
    for (std::size_t k = 0; k < x.size(); ++k) {
        const bool centre = x[k] == 0.0;
        theta.push_back(0.5 * (1.0 + x[k]));
        weight.push_back(0.5 * w[k]);
        if (!centre) {
            theta.push_back(0.5 * (1.0 - x[k]));
            weight.push_back(0.5 * w[k]);
        }
    }
}

inline void quadrature_rule(int nodes, std::vector<double>& theta, std::vector<double>& weight) {
    switch (nodes) {
        case 4: gauss_nodes<4>(theta, weight); break;
        case 8: gauss_nodes<8>(theta, weight); break;
        case 16: gauss_nodes<16>(theta, weight); break;
        case 32: gauss_nodes<32>(theta, weight); break;
        default: throw std::invalid_argument("tensor_a: quadrature nodes must be 4, 8, 16 or 32");
    }
}

inline std::pair<double, double> segment_average(const CurvatureSpec& spec, double kp, double kr, double kp_t,
                                                 double kr_t, const std::vector<double>& theta,
                                                 const std::vector<double>& weight, std::size_t sample) {
    double ap = 0.0, ar = 0.0;
    bool constant = true;
    double p0 = 0.0, r0 = 0.0;
    for (std::size_t q = 0; q < theta.size(); ++q) {
        const double th = theta[q];
        const Vec lam = curvature_vector(spec.n, (1 - th) * kp + th * kp_t, (1 - th) * kr + th * kr_t);
        const double m = spec.margin(lam);
        if (!(m > 0.0))
            throw DomainError("tensor_a: segment leaves the admissible set at theta=" + std::to_string(th) +
                                  ", sample " + std::to_string(sample),
                              m);
        const Vec g = spec.gradient(lam);
        if (q == 0) {
            p0 = g[spec.n - 1];
            r0 = g[0];
        }
        constant = constant && g[spec.n - 1] == p0 && g[0] == r0;
        ap += weight[q] * g[spec.n - 1];
        ar += weight[q] * g[0];
    }
    // A constant integrand is returned as is, free of weight-sum rounding.
    if (constant) return {p0, r0};
    return {ap, ar};
}

}  // namespace detail

// Orthonormal frame, so raising an index with the metric leaves the components unchanged.
inline CoefficientTensor tensor_a(const CurvatureSpec& spec, const std::vector<double>& kappa_prof,
                                  const std::vector<double>& kappa_rot, const std::vector<double>& kappa_prof_other,
                                  const std::vector<double>& kappa_rot_other, int nodes = 8) {
    const std::size_t m = kappa_prof.size();
    if (kappa_rot.size() != m || kappa_prof_other.size() != m || kappa_rot_other.size() != m)
        throw std::invalid_argument("tensor_a: curvature samples differ in length");
    std::vector<double> th, w, th2, w2;
    detail::quadrature_rule(nodes, th, w);
    detail::quadrature_rule(nodes == 16 ? 32 : 16, th2, w2);
    CoefficientTensor ct;
    ct.n = spec.n;
    ct.prof.resize(m);
    ct.rot.resize(m);
    ct.quadrature_delta.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto [ap, ar] = detail::segment_average(spec, kappa_prof[i], kappa_rot[i], kappa_prof_other[i],
                                                      kappa_rot_other[i], th, w, i);
        const auto [bp, br] = detail::segment_average(spec, kappa_prof[i], kappa_rot[i], kappa_prof_other[i],
                                                      kappa_rot_other[i], th2, w2, i);
        ct.prof[i] = ap;
        ct.rot[i] = ar;
        ct.quadrature_delta[i] = std::max(std::abs(ap - bp), std::abs(ar - br));
    }
    return ct;
}

inline CoefficientTensor tensor_a(const CurvatureSpec& spec, const std::vector<double>& kappa_prof,
                                  const std::vector<double>& kappa_rot, int nodes = 8) {
    return tensor_a(spec, kappa_prof, kappa_rot, kappa_prof, kappa_rot, nodes);
}

}  // namespace fshrink
