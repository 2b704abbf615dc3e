#pragma once

#include "numerics.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

namespace fshrink {

// Raised when a curvature vector leaves the admissible open set.
class DomainError : public std::domain_error {
public:
    DomainError(const std::string& what, double margin) : std::domain_error(what), margin_(margin) {}
    double margin() const { return margin_; }

private:
    double margin_;
};

// e_k(lambda) with the entries listed in `skip` removed (at most two).
inline double elementary_symmetric_skip(int k, const Vec& lam, int skip1 = -1, int skip2 = -1) {
    if (k < 0) return 0.0;
    if (k == 0) return 1.0;
    double e[16] = {1.0};
    const int n = static_cast<int>(lam.size());
    if (n > 15) throw std::invalid_argument("elementary_symmetric: dimension above 15");
    for (int j = 1; j <= n; ++j) e[j] = 0.0;
    int m = 0;
    for (int i = 0; i < n; ++i) {
        if (i == skip1 || i == skip2) continue;
        ++m;
        for (int j = m; j >= 1; --j) e[j] += lam[i] * e[j - 1];
    }
    return k <= m ? e[k] : 0.0;
}

inline double elementary_symmetric(int k, const Vec& lam) {
    if (k < 1 || k > lam.size())
        throw std::invalid_argument("elementary_symmetric: k=" + std::to_string(k) + " outside [1, " +
                                    std::to_string(lam.size()) + "]");
    return elementary_symmetric_skip(k, lam);
}

// A symmetric, degree-one homogeneous curvature function with its derivatives and domain.
struct CurvatureSpec {
    std::string name;
    int n = 2;
    std::map<std::string, double> params;
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;
    std::function<Mat(const Vec&)> hessian;
    std::function<double(const Vec&)> margin;

    double domain_margin(const Vec& lam) const { return margin(lam); }
    double param(const std::string& key, double fallback = 0.0) const {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    }
};

inline CurvatureSpec mean_curvature_spec(int n) {
    if (n < 2) throw std::invalid_argument("dimension n must be >= 2");
    CurvatureSpec s;
    s.name = "E1";
    s.n = n;
    s.value = [](const Vec& l) { return l.sum(); };
    s.gradient = [](const Vec& l) { return Vec::Ones(l.size()).eval(); };
    s.hessian = [](const Vec& l) { return Mat::Zero(l.size(), l.size()).eval(); };
    s.margin = [](const Vec&) { return std::numeric_limits<double>::infinity(); };
    return s;
}

// E1 + sign * eps * En / E(n-1), admissible where E(n-1) > domain_eps.
inline CurvatureSpec eps_family_spec(int n, double eps, int sign, double domain_eps = 1e-9) {
    if (n < 2) throw std::invalid_argument("dimension n must be >= 2");
    if (!(eps >= 0.0)) throw std::invalid_argument("eps must be >= 0");
    if (sign != 1 && sign != -1) throw std::invalid_argument("sign must be +1 or -1");
    CurvatureSpec s;
    s.name = sign > 0 ? "E1_plus_eps" : "E1_minus_eps";
    s.n = n;
    s.params = {{"eps", eps}, {"domain_eps", domain_eps}};
    const double c = sign * eps;
    s.value = [n, c](const Vec& l) {
        return l.sum() + c * elementary_symmetric_skip(n, l) / elementary_symmetric_skip(n - 1, l);
    };
    s.gradient = [n, c](const Vec& l) {
        const double P = elementary_symmetric_skip(n, l), Q = elementary_symmetric_skip(n - 1, l);
        Vec g(n);
        for (int i = 0; i < n; ++i) {
            const double Pi = elementary_symmetric_skip(n - 1, l, i), Qi = elementary_symmetric_skip(n - 2, l, i);
            g[i] = 1.0 + c * (Pi / Q - P * Qi / (Q * Q));
        }
        return g;
    };
    s.hessian = [n, c](const Vec& l) {
        const double P = elementary_symmetric_skip(n, l), Q = elementary_symmetric_skip(n - 1, l);
        Vec Pi(n), Qi(n);
        for (int i = 0; i < n; ++i) {
            Pi[i] = elementary_symmetric_skip(n - 1, l, i);
            Qi[i] = elementary_symmetric_skip(n - 2, l, i);
        }
        Mat H = Mat::Zero(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double Pij = i == j ? 0.0 : elementary_symmetric_skip(n - 2, l, i, j);
                const double Qij = i == j ? 0.0 : elementary_symmetric_skip(n - 3, l, i, j);
                H(i, j) = c * (Pij / Q - (Pi[i] * Qi[j] + Pi[j] * Qi[i] + P * Qij) / (Q * Q) +
                               2.0 * P * Qi[i] * Qi[j] / (Q * Q * Q));
            }
        return H;
    };
    s.margin = [n, domain_eps](const Vec& l) { return elementary_symmetric_skip(n - 1, l) - domain_eps; };
    return s;
}

// User hook: f = phi(E1, ..., En) with phi's gradient and Hessian in the E-variables.
struct ElementaryComposition {
    std::function<double(const Vec&)> phi;
    std::function<Vec(const Vec&)> dphi;
    std::function<Mat(const Vec&)> d2phi;
    std::function<double(const Vec&)> margin;
};

inline CurvatureSpec composite_spec(int n, std::string name, ElementaryComposition comp) {
    if (n < 2) throw std::invalid_argument("dimension n must be >= 2");
    auto evec = [n](const Vec& l) {
        Vec e(n);
        for (int k = 1; k <= n; ++k) e[k - 1] = elementary_symmetric_skip(k, l);
        return e;
    };
    auto jac = [n](const Vec& l) {
        Mat J(n, n);  // J(k, i) = d E_{k+1} / d lambda_i
        for (int k = 1; k <= n; ++k)
            for (int i = 0; i < n; ++i) J(k - 1, i) = elementary_symmetric_skip(k - 1, l, i);
        return J;
    };
    CurvatureSpec s;
    s.name = std::move(name);
    s.n = n;
    s.value = [comp, evec](const Vec& l) { return comp.phi(evec(l)); };
    s.gradient = [comp, evec, jac](const Vec& l) { return (jac(l).transpose() * comp.dphi(evec(l))).eval(); };
    s.hessian = [n, comp, evec, jac](const Vec& l) {
        const Vec e = evec(l);
        const Mat J = jac(l);
        const Vec d = comp.dphi(e);
        Mat H = J.transpose() * comp.d2phi(e) * J;
        for (int k = 2; k <= n; ++k)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    if (i != j) H(i, j) += d[k - 1] * elementary_symmetric_skip(k - 2, l, i, j);
        return H;
    };
    s.margin = comp.margin ? comp.margin : [](const Vec&) { return std::numeric_limits<double>::infinity(); };
    return s;
}

namespace detail {
inline void require_domain(const CurvatureSpec& spec, const Vec& lam) {
    if (lam.size() != spec.n)
        throw std::invalid_argument("curvature vector has size " + std::to_string(lam.size()) + ", expected " +
                                    std::to_string(spec.n));
    const double m = spec.margin(lam);
    if (!(m > 0.0)) throw DomainError(spec.name + ": curvature vector outside the admissible set", m);
}
}  // namespace detail

inline double eval_f(const CurvatureSpec& spec, const Vec& lam) {
    detail::require_domain(spec, lam);
    return spec.value(lam);
}

inline Vec grad_f(const CurvatureSpec& spec, const Vec& lam) {
    detail::require_domain(spec, lam);
    return spec.gradient(lam);
}

inline Mat hess_f(const CurvatureSpec& spec, const Vec& lam) {
    detail::require_domain(spec, lam);
    return spec.hessian(lam);
}

// Symmetric matrix with its spectral data (eigenvalues descending).
struct MatrixPoint {
    Mat S;
    Vec eigvals;
    Mat eigframe;
};

inline MatrixPoint make_matrix_point(const Mat& S, double sym_tol = 1e-10) {
    if (S.rows() != S.cols()) throw std::invalid_argument("matrix argument must be square");
    const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > sym_tol * scale)
        throw std::invalid_argument("matrix argument is not symmetric");
    MatrixPoint p;
    p.S = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(p.S);
    const Eigen::Index n = S.rows();
    p.eigvals.resize(n);
    p.eigframe.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        p.eigvals[i] = es.eigenvalues()[n - 1 - i];
        p.eigframe.col(i) = es.eigenvectors().col(n - 1 - i);
    }
    return p;
}

inline double eval_F(const CurvatureSpec& spec, const MatrixPoint& p) { return eval_f(spec, p.eigvals); }
inline double eval_F(const CurvatureSpec& spec, const Mat& S) { return eval_F(spec, make_matrix_point(S)); }

inline Mat dF_dS(const CurvatureSpec& spec, const MatrixPoint& p) {
    const Vec g = grad_f(spec, p.eigvals);
    return p.eigframe * g.asDiagonal() * p.eigframe.transpose();
}
inline Mat dF_dS(const CurvatureSpec& spec, const Mat& S) { return dF_dS(spec, make_matrix_point(S)); }

// Second derivative of F at S contracted with the symmetric direction T.
inline Mat d2F_contract(const CurvatureSpec& spec, const MatrixPoint& p, const Mat& T) {
    if (T.rows() != p.S.rows() || T.cols() != p.S.cols()) throw std::invalid_argument("direction has wrong shape");
    const double scale = std::max(1.0, T.cwiseAbs().maxCoeff());
    if ((T - T.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw std::invalid_argument("direction matrix is not symmetric");
    const Vec& lam = p.eigvals;
    const Vec g = grad_f(spec, lam);
    const Mat H = spec.hessian(lam);
    const Mat Tp = p.eigframe.transpose() * T * p.eigframe;
    const Eigen::Index n = lam.size();
    const double degenerate_tol = 1e-7 * lam.norm();
    Mat R(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) acc += H(i, k) * Tp(k, k);
        R(i, i) = acc;
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k == i) continue;
            const double gap = lam[i] - lam[k];
            const double dd = std::abs(gap) <= degenerate_tol ? H(i, i) - H(i, k) : (g[i] - g[k]) / gap;
            R(i, k) = dd * Tp(i, k);
        }
    }
    return p.eigframe * R * p.eigframe.transpose();
}
inline Mat d2F_contract(const CurvatureSpec& spec, const Mat& S, const Mat& T) {
    return d2F_contract(spec, make_matrix_point(S), T);
}

struct AdmissibleReport {
    bool ok = false;
    double min_grad = std::numeric_limits<double>::quiet_NaN();
    double domain_margin = 0.0;
};

inline AdmissibleReport check_admissible(const CurvatureSpec& spec, const Vec& lam) {
    AdmissibleReport r;
    r.domain_margin = spec.margin(lam);
    if (!(r.domain_margin > 0.0)) return r;
    r.min_grad = spec.gradient(lam).minCoeff();
    r.ok = r.min_grad > 0.0;
    return r;
}

}  // namespace fshrink
