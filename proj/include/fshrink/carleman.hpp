#pragma once

#include "flow.hpp"

#include <functional>
#include <limits>

namespace fshrink {

struct CarlemanParams {
    double M = 1.0;
    double tau = 1.0;
    double lambda = 1.0;  // ellipticity constant of the cone
    bool plain = false;   // unweighted: ln G = 0 and Psi = 0

    void validate() const {
        if (!plain) {
            if (!(M >= 1.0)) throw std::invalid_argument("carleman: M must be >= 1");
            if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("carleman: tau must lie in (0, 1]");
        }
        if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("carleman: lambda must lie in (0, 1]");
    }
};

// Pointwise data of one time slice; tensors are diagonal in the (profile, rotation) orthonormal frame.
struct CarlemanSlice {
    double t = 0.0;
    SliceGeometry geo;
    CoefficientTensor a;
    std::vector<double> a_s, b_s, a_ss, b_ss, gamma, gamma_s;  // derivatives of the profile/rotation entries
    std::vector<double> grad_a, hess_a;                        // |nabla a|, |nabla^2 a|
    std::vector<double> dta_p, dta_r;                          // time derivative of a, normal parametrization
    std::vector<double> lnG, m, phi_s, phi_ss, Psi;
    std::vector<double> Phi, Qp, Qr;                         // closed forms valid on self-similar shrinker flows
    std::vector<double> Phi_direct, Ups_p, Ups_r, Qp_direct, Qr_direct;
    std::vector<double> dtPsi, divPsi;
    std::vector<double> margin_eig, margin_scalar;

    std::size_t size() const { return geo.size(); }
};

namespace detail {

inline double rho_times(const SliceGeometry& g, std::size_t i, double q_s, double q_ss) {
    return g.on_axis(i) ? q_ss : g.rho[i] * q_s;
}

// Centered (one-sided at the ends) second-order time derivative along normal trajectories.
template <class Get>
std::vector<double> normal_time_derivative(const std::vector<CarlemanSlice>& sl, std::size_t k, double dt, Get get) {
    const std::size_t K = sl.size() - 1;
    std::array<std::size_t, 3> idx;
    std::array<double, 3> c;
    if (k == 0) {
        idx = {0, 1, 2};
        c = {-1.5, 2.0, -0.5};
    } else if (k == K) {
        idx = {K - 2, K - 1, K};
        c = {0.5, -2.0, 1.5};
    } else {
        idx = {k - 1, k, k + 1};
        c = {-0.5, 0.0, 0.5};
    }
    const auto& g = sl[k].geo;
    const std::vector<double>& qk = get(sl[k]);
    const auto qp = g.dpar(qk, 1);
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        double qt = 0.0, ut = 0.0;
        for (int j = 0; j < 3; ++j) {
            qt += c[j] * get(sl[idx[j]])[i];
            ut += c[j] * sl[idx[j]].geo.u[i];
        }
        qt /= dt;
        ut /= dt;
        const double pdot = -ut * g.e_dot_T[i] / g.speed[i];
        out[i] = qt + pdot * qp[i];
    }
    return out;
}

inline double snapshot_spacing(const FlowRun& run) {
    if (run.size() < 3) throw std::invalid_argument("carleman: need >= 3 snapshots");
    const double dt = run[1].t - run[0].t;
    for (std::size_t k = 1; k < run.size(); ++k)
        if (std::abs(run[k].t - run[k - 1].t - dt) > 1e-9 * std::abs(dt))
            throw std::invalid_argument("carleman: snapshots not uniformly spaced in time");
    if (!(dt > 0.0)) throw std::invalid_argument("carleman: snapshot times must increase");
    return dt;
}

}  // namespace detail

// ln G = M (t + tau) |X|^{3/2} + |X|^2 and its radial profile m = (d ln G / d|X|) / |X|.
inline double log_weight(const CarlemanParams& p, double t, double X) {
    return p.plain ? 0.0 : p.M * (t + p.tau) * std::pow(X, 1.5) + X * X;
}
inline double weight_slope(const CarlemanParams& p, double t, double X) {
    return p.plain ? 0.0 : 1.5 * p.M * (t + p.tau) / std::sqrt(X) + 2.0;
}

// Auxiliary function, assembled verbatim from the weighted-identity construction.
inline double auxiliary_psi(const CarlemanParams& p, double t, double X, double alpha, double trace, double xt) {
    if (p.plain) return 0.0;
    const double c = p.M * (t + p.tau), m = weight_slope(p, t, X), aXX = alpha * xt * xt, l3 = p.lambda / 3.0;
    return m * m * aXX + p.M * std::pow(X, 1.5) + 0.5 * m * (trace - l3) + (trace - l3) +
           0.75 * c * std::pow(X, -2.5) * (trace * X * X - aXX);
}

// Pointwise Carleman data on every snapshot of a run; coefficient tensor a = dF/dS of the flow itself.
inline std::vector<CarlemanSlice> carleman_slices(const CurvatureSpec& spec, const FlowRun& run,
                                                  const CarlemanParams& prm, int nodes = 8) {
    prm.validate();
    const double dt = detail::snapshot_spacing(run);
    const int n = spec.n, mm = n - 1;
    std::vector<CarlemanSlice> sl(run.size());
    for (std::size_t k = 0; k < run.size(); ++k) {
        auto& s = sl[k];
        s.t = run[k].t;
        if (!prm.plain && (s.t < -prm.tau - 1e-12 || s.t > 1e-12))
            throw std::invalid_argument("carleman: snapshot time outside [-tau, 0]");
        s.geo = slice_geometry(spec, run[k]);
        const auto& g = s.geo;
        const std::size_t N = g.size();
        s.a = tensor_a(spec, g.kappa_prof, g.kappa_rot, nodes);
        s.a_s = g.ds1(s.a.prof);
        s.b_s = g.ds1(s.a.rot);
        s.a_ss = g.ds2(s.a.prof);
        s.b_ss = g.ds2(s.a.rot);
        s.gamma.resize(N);
        for (std::size_t i = 0; i < N; ++i) s.gamma[i] = g.on_axis(i) ? 0.0 : g.rho[i] * (s.a.prof[i] - s.a.rot[i]);
        s.gamma_s = g.ds1(s.gamma, -1);
        for (auto* v : {&s.grad_a, &s.hess_a, &s.lnG, &s.m, &s.phi_s, &s.Psi}) v->resize(N);
        for (std::size_t i = 0; i < N; ++i) {
            const double al1 = s.a_s[i], be1 = s.b_s[i], ga = s.gamma[i];
            s.grad_a[i] = std::sqrt(al1 * al1 + mm * be1 * be1 + 2.0 * mm * ga * ga);
            const double rho = g.on_axis(i) ? 0.0 : g.rho[i];
            const double t1 = rho * (al1 - be1 - ga), t2 = rho * al1 - 2.0 * rho * ga;
            const double h2 = s.a_ss[i] * s.a_ss[i] + mm * s.b_ss[i] * s.b_ss[i] + 2.0 * mm * s.gamma_s[i] * s.gamma_s[i] +
                              2.0 * mm * t1 * t1 + mm * t2 * t2 +
                              rho * rho * (mm * mm * be1 * be1 + 4.0 * mm * be1 * ga + (2.0 * mm * mm + 2.0 * mm) * ga * ga);
            s.hess_a[i] = std::sqrt(h2);
            const double X = g.position_norm[i];
            s.lnG[i] = log_weight(prm, s.t, X);
            s.m[i] = weight_slope(prm, s.t, X);
            s.phi_s[i] = s.m[i] * g.tangential[i];
            s.Psi[i] = auxiliary_psi(prm, s.t, X, s.a.prof[i], s.a.prof[i] + mm * s.a.rot[i], g.tangential[i]);
        }
        s.phi_ss = g.ds2(s.lnG);
        s.divPsi = g.divergence(s.a.prof, s.Psi);
    }
    for (std::size_t k = 0; k < sl.size(); ++k) {
        auto& s = sl[k];
        const auto& g = s.geo;
        const std::size_t N = g.size();
        const auto adot = detail::normal_time_derivative(sl, k, dt, [](const CarlemanSlice& c) -> const std::vector<double>& { return c.a.prof; });
        const auto bdot = detail::normal_time_derivative(sl, k, dt, [](const CarlemanSlice& c) -> const std::vector<double>& { return c.a.rot; });
        const auto Gdot = detail::normal_time_derivative(sl, k, dt, [](const CarlemanSlice& c) -> const std::vector<double>& { return c.lnG; });
        s.dtPsi = detail::normal_time_derivative(sl, k, dt, [](const CarlemanSlice& c) -> const std::vector<double>& { return c.Psi; });
        const auto divG = g.divergence(s.a.prof, s.lnG);
        for (auto* v : {&s.dta_p, &s.dta_r, &s.Phi, &s.Qp, &s.Qr, &s.Phi_direct, &s.Ups_p, &s.Ups_r, &s.Qp_direct,
                        &s.Qr_direct, &s.margin_eig, &s.margin_scalar})
            v->resize(N);
        const double lam = prm.lambda, t = s.t;
        for (std::size_t i = 0; i < N; ++i) {
            const double al = s.a.prof[i], be = s.a.rot[i], kp = g.kappa_prof[i], kr = g.kappa_rot[i];
            const double F = g.F[i], H = g.H[i], X = g.position_norm[i], xt = g.tangential[i];
            const double al1 = s.a_s[i], be1 = s.b_s[i], ga = s.gamma[i], m = s.m[i];
            const double tr = al + mm * be, aA = al * kp + mm * be * kr;
            // The metric evolves by -2 F A, so raising both indices adds 2 F kappa to each entry.
            s.dta_p[i] = adot[i] + 2.0 * al * F * kp;
            s.dta_r[i] = bdot[i] + 2.0 * be * F * kr;

            s.Phi_direct[i] = Gdot[i] + divG[i] + al * s.phi_s[i] * s.phi_s[i] - F * H;
            s.Ups_p[i] = al * al * s.phi_ss[i] - 0.5 * s.dta_p[i] + 0.5 * al * al1 * s.phi_s[i];
            s.Ups_r[i] = be * be * detail::rho_times(g, i, s.phi_s[i], s.phi_ss[i]) - 0.5 * s.dta_r[i] +
                         0.5 * (2.0 * be * ga - al * be1) * s.phi_s[i];
            s.Qp_direct[i] = 2.0 * s.Ups_p[i] - (s.Phi_direct[i] - s.Psi[i]) * al;
            s.Qr_direct[i] = 2.0 * s.Ups_r[i] - (s.Phi_direct[i] - s.Psi[i]) * be;

            if (prm.plain || X == 0.0) {
                s.Phi[i] = s.Phi_direct[i];
                s.Qp[i] = s.Qp_direct[i];
                s.Qr[i] = s.Qr_direct[i];
            } else {
                // Shrinker identity X.N = 2 t F replaces the support function.
                const double c = prm.M * (t + prm.tau), S = 2.0 * t * F, aXX = al * xt * xt;
                const double corr = 0.75 * c * std::pow(X, -2.5);
                s.Phi[i] = m * m * aXX + prm.M * std::pow(X, 1.5) + 0.5 * m * tr + tr + corr * (tr * X * X - aXX) +
                           m * ((al1 + mm * ga) * xt + S * (F + aA)) - F * H;
                const double B11 = -xt * mm * al * ga;
                const double Bbb = xt * (2.0 * be * ga - al * be1 - be * al1 - mm * be * ga);
                s.Qp[i] = m * (al * al - lam * al / 6.0) + (2.0 * al * al - lam * al / 3.0) +
                          2.0 * corr * al * al * (X * X - xt * xt) + m * B11 +
                          m * (2.0 * al * al * kp - al * aA - F * al) * S - s.dta_p[i] + F * H * al;
                s.Qr[i] = m * (be * be - lam * be / 6.0) + (2.0 * be * be - lam * be / 3.0) + 2.0 * corr * be * be * X * X +
                          m * Bbb + m * (2.0 * be * be * kr - be * aA - F * be) * S - s.dta_r[i] + F * H * be;
            }
            s.margin_eig[i] = std::min(s.Qp[i], s.Qr[i]) - lam * lam / 9.0;
            s.margin_scalar[i] = 0.5 * (s.dtPsi[i] - s.divPsi[i] + (s.Phi[i] - s.Psi[i]) * s.Psi[i]) -
                                 lam * lam / 9.0 * X * X;
        }
    }
    return sl;
}

struct WorstSample {
    double value = std::numeric_limits<double>::infinity();
    double t = 0.0, X = 0.0;
    void offer(double v, double tt, double XX) {
        if (v < value) {
            value = v;
            t = tt;
            X = XX;
        }
    }
};

struct TensorBoundsReport {
    double lambda = 1.0, kappa = 0.0, R = 0.0;
    WorstSample lower_margin;   // min eigenvalue - lambda/3
    WorstSample upper_margin;   // 3/lambda - max eigenvalue
    WorstSample gradient_margin;  // 3 kappa - |X| |nabla a|
    double hessian_constant = 0.0;  // sup |X|^2 |nabla^2 a|
    double time_constant = 0.0;     // sup |X|^2 |d_t a|
    std::size_t samples = 0;
    bool lower_ok = true, upper_ok = true, gradient_ok = true;
    bool ok() const { return lower_ok && upper_ok && gradient_ok && std::isfinite(hessian_constant) && std::isfinite(time_constant); }
};

inline TensorBoundsReport verify_tensor_bounds(const std::vector<CarlemanSlice>& sl, double lambda, double kappa,
                                               double R, std::size_t edge = 4) {
    TensorBoundsReport r;
    r.lambda = lambda;
    r.kappa = kappa;
    r.R = R;
    const double tol = 1e-12;
    for (const auto& s : sl) {
        const auto& g = s.geo;
        const int mm = g.n - 1;
        for (std::size_t i = edge; i + edge < s.size(); ++i) {
            const double X = g.position_norm[i];
            if (X < R) continue;
            ++r.samples;
            const double lo = std::min(s.a.prof[i], s.a.rot[i]), hi = std::max(s.a.prof[i], s.a.rot[i]);
            r.lower_margin.offer(lo - lambda / 3.0, s.t, X);
            r.upper_margin.offer(3.0 / lambda - hi, s.t, X);
            r.gradient_margin.offer(3.0 * kappa - X * s.grad_a[i], s.t, X);
            r.hessian_constant = std::max(r.hessian_constant, X * X * s.hess_a[i]);
            const double dta = std::sqrt(s.dta_p[i] * s.dta_p[i] + mm * s.dta_r[i] * s.dta_r[i]);
            r.time_constant = std::max(r.time_constant, X * X * dta);
        }
    }
    r.lower_ok = r.lower_margin.value >= -tol;
    r.upper_ok = r.upper_margin.value >= -tol;
    r.gradient_ok = r.gradient_margin.value >= -tol;
    return r;
}

struct PointwiseReport {
    WorstSample eig, scalar;      // worst margins of the two inequalities (raw)
    WorstSample psi;              // smallest auxiliary function value
    double empirical_R = 0.0;     // largest |X| among failing samples (0 if none fail)
    double shrinker_identity = 0.0;  // max | |X^T|^2 - |X|^2 + (2 t F)^2 | / |X|^2
    std::size_t samples = 0, failures = 0;
    bool ok() const { return failures == 0 && psi.value >= 0.0; }
};

// Margins on samples with |X| >= R, tolerance -tol_scale |X|^2 per inequality.
inline PointwiseReport verify_pointwise_inequalities(const std::vector<CarlemanSlice>& sl, double R,
                                                     double tol_scale = 1e-6, std::size_t edge = 4) {
    PointwiseReport r;
    for (const auto& s : sl) {
        if (s.t >= 0.0) continue;
        const auto& g = s.geo;
        for (std::size_t i = edge; i + edge < s.size(); ++i) {
            const double X = g.position_norm[i];
            const double xt = g.tangential[i], S2 = 2.0 * s.t * g.F[i];
            r.shrinker_identity = std::max(r.shrinker_identity, std::abs(xt * xt - X * X + S2 * S2) / (X * X));
            const bool fail = s.margin_eig[i] < -tol_scale * X * X || s.margin_scalar[i] < -tol_scale * X * X;
            if (fail) r.empirical_R = std::max(r.empirical_R, X);
            if (X < R) continue;
            ++r.samples;
            r.eig.offer(s.margin_eig[i], s.t, X);
            r.scalar.offer(s.margin_scalar[i], s.t, X);
            r.psi.offer(s.Psi[i], s.t, X);
            if (fail) ++r.failures;
        }
    }
    return r;
}

struct RouteAgreement {
    double phi = 0.0, q = 0.0;  // max relative disagreement between closed and direct routes
};

inline RouteAgreement route_agreement(const std::vector<CarlemanSlice>& sl, std::size_t edge = 4) {
    RouteAgreement r;
    for (const auto& s : sl)
        for (std::size_t i = edge; i + edge < s.size(); ++i) {
            r.phi = std::max(r.phi, std::abs(s.Phi[i] - s.Phi_direct[i]) / std::max(1.0, std::abs(s.Phi[i])));
            r.q = std::max({r.q, std::abs(s.Qp[i] - s.Qp_direct[i]) / std::max(1.0, std::abs(s.Qp[i])),
                            std::abs(s.Qr[i] - s.Qr_direct[i]) / std::max(1.0, std::abs(s.Qr[i]))});
        }
    return r;
}

// |X| interval covered by every slice of a run.
inline std::pair<double, double> common_radius_range(const std::vector<CarlemanSlice>& sl) {
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (const auto& s : sl) {
        const auto& X = s.geo.position_norm;
        lo = std::max(lo, std::min(X.front(), X.back()));
        hi = std::min(hi, std::max(X.front(), X.back()));
    }
    return {lo, hi};
}

// Radial test function u(X, t) = b(|X|) q(t).
struct TestFunction {
    std::function<double(double)> b, db, d2b;
    std::function<double(double)> q, dq;
    double support_lo = 0.0, support_hi = std::numeric_limits<double>::infinity();
    bool compact = true;
};

inline TestFunction zero_test_function() {
    TestFunction u;
    u.b = [](double) { return 0.0; };
    u.db = [](double) { return 0.0; };
    u.d2b = [](double) { return 0.0; };
    u.q = [](double) { return 0.0; };
    u.dq = [](double) { return 0.0; };
    u.support_lo = 0.0;
    u.support_hi = 0.0;
    return u;
}

// Polynomial time factor sum_k c_k (t - t0)^k.
inline std::pair<std::function<double(double)>, std::function<double(double)>> time_ramp(std::vector<double> c,
                                                                                          double t0) {
    auto q = [c, t0](double t) {
        double v = 0.0;
        for (std::size_t k = c.size(); k-- > 0;) v = v * (t - t0) + c[k];
        return v;
    };
    auto dq = [c, t0](double t) {
        double v = 0.0;
        for (std::size_t k = c.size(); k-- > 1;) v = v * (t - t0) + static_cast<double>(k) * c[k];
        return v;
    };
    return {q, dq};
}

// (1 - y^2)^3 with y = (|X| - center)/width, times a polynomial ramp in time.
inline TestFunction bump_test_function(double center, double width, std::vector<double> ramp, double t0) {
    if (!(width > 0.0)) throw std::invalid_argument("bump: width must be > 0");
    TestFunction u;
    u.b = [center, width](double X) {
        const double y = (X - center) / width;
        return std::abs(y) < 1.0 ? std::pow(1.0 - y * y, 3) : 0.0;
    };
    u.db = [center, width](double X) {
        const double y = (X - center) / width;
        return std::abs(y) < 1.0 ? -6.0 * y * (1.0 - y * y) * (1.0 - y * y) / width : 0.0;
    };
    u.d2b = [center, width](double X) {
        const double y = (X - center) / width;
        return std::abs(y) < 1.0 ? -6.0 * (1.0 - y * y) * (1.0 - 5.0 * y * y) / (width * width) : 0.0;
    };
    std::tie(u.q, u.dq) = time_ramp(std::move(ramp), t0);
    u.support_lo = center - width;
    u.support_hi = center + width;
    return u;
}

inline TestFunction gaussian_test_function(std::vector<double> ramp, double t0) {
    TestFunction u;
    u.b = [](double X) { return std::exp(-X * X); };
    u.db = [](double X) { return -2.0 * X * std::exp(-X * X); };
    u.d2b = [](double X) { return (4.0 * X * X - 2.0) * std::exp(-X * X); };
    std::tie(u.q, u.dq) = time_ramp(std::move(ramp), t0);
    u.compact = false;
    return u;
}

namespace detail {

inline double sphere_area(int n) {
    // |S^{n-1}| = 2 pi^{n/2} / Gamma(n/2)
    return 2.0 * std::pow(M_PI, 0.5 * n) / std::tgamma(0.5 * n);
}

inline void check_support(const TestFunction& u, const std::vector<CarlemanSlice>& sl) {
    if (!u.compact) return;
    for (const auto& s : sl) {
        const auto& X = s.geo.position_norm;
        const double lo = std::min(X.front(), X.back()), hi = std::max(X.front(), X.back());
        // A margin of a few grid cells keeps one-sided stencils out of the support.
        const double pad = 6.0 * (hi - lo) / static_cast<double>(X.size() - 1);
        if (u.support_hi > u.support_lo && (u.support_lo < lo + pad || u.support_hi > hi - pad))
            throw std::invalid_argument("test function support [" + std::to_string(u.support_lo) + ", " +
                                        std::to_string(u.support_hi) + "] touches the patch boundary at t=" +
                                        std::to_string(s.t));
    }
}

struct FieldSlice {
    std::vector<double> u, us, ut, Pu, dmu;
};

// Space derivatives of u are analytic in |X|, so the bump's limited smoothness at its support edge
// is never differenced numerically.
inline FieldSlice field_slice(const CarlemanSlice& s, const TestFunction& f) {
    const auto& g = s.geo;
    const std::size_t N = g.size();
    FieldSlice o;
    for (auto* v : {&o.u, &o.us, &o.ut, &o.dmu, &o.Pu}) v->resize(N);
    const double q = f.q(s.t), dq = f.dq(s.t), area = sphere_area(g.n);
    const auto as = g.ds1(s.a.prof);
    for (std::size_t i = 0; i < N; ++i) {
        const double X = g.position_norm[i];
        const double b = f.b(X), db = f.db(X), d2b = f.d2b(X);
        // cos of the angle between X and the profile tangent, and its arclength derivative
        const double c = X > 0.0 ? g.tangential[i] / X : 1.0;
        const double cs = X > 0.0 ? (1.0 + g.kappa_prof[i] * g.support[i]) / X - c * c / X : 0.0;
        o.u[i] = b * q;
        o.us[i] = db * c * q;
        const double uss = (d2b * c * c + db * cs) * q;
        const double Xdot = X > 0.0 ? g.F[i] * g.support[i] / X : 0.0;
        o.ut[i] = b * dq + db * Xdot * q;
        o.dmu[i] = area * std::pow(g.R[i], g.n - 1) * g.speed[i];
        const double al = s.a.prof[i];
        const double div = al * uss + as[i] * o.us[i] + (g.n - 1) * al * rho_times(g, i, o.us[i], uss);
        o.Pu[i] = o.ut[i] - div;
    }
    return o;
}

inline bool active(const FieldSlice& f, std::size_t i) {
    return f.u[i] != 0.0 || f.us[i] != 0.0 || f.ut[i] != 0.0 || f.Pu[i] != 0.0;
}

// Largest ln G where the field is nonzero, so the normalized weight neither overflows nor underflows there.
inline double log_weight_reference(const std::vector<CarlemanSlice>& sl, const std::vector<FieldSlice>& fs) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < sl.size(); ++k)
        for (std::size_t i = 0; i < sl[k].size(); ++i)
            if (active(fs[k], i)) m = std::max(m, sl[k].lnG[i]);
    return std::isfinite(m) ? m : 0.0;
}

inline std::vector<FieldSlice> field_slices(const std::vector<CarlemanSlice>& sl, const TestFunction& u) {
    std::vector<FieldSlice> fs;
    fs.reserve(sl.size());
    for (const auto& s : sl) fs.push_back(field_slice(s, u));
    return fs;
}

// Normalized weight times the measure; zero where the field vanishes.
inline double weight(const CarlemanSlice& s, const FieldSlice& f, std::size_t i, double ref) {
    return active(f, i) ? std::exp(s.lnG[i] - ref) * f.dmu[i] : 0.0;
}

}  // namespace detail

struct IdentityReport {
    double bulk = 0.0;        // time integral of the quadratic-form side
    double flux = 0.0;        // time integral of 2 P u Y - 2 Y^2
    double energy_start = 0.0, energy_end = 0.0;
    double residual = 0.0;    // bulk - (flux - (energy_end - energy_start))
    double scale = 0.0;       // sum of magnitudes of the terms
    double log_weight_ref = 0.0;  // weights are divided by exp(log_weight_ref)
    std::vector<double> energy;   // per snapshot
};

// Weighted energy identity over the run's time window, integrals reduced by rotational symmetry.
inline IdentityReport carleman_identity_check(const std::vector<CarlemanSlice>& sl, const TestFunction& u) {
    detail::check_support(u, sl);
    IdentityReport r;
    const auto fs = detail::field_slices(sl, u);
    r.log_weight_ref = detail::log_weight_reference(sl, fs);
    std::vector<double> bulk(sl.size()), flux(sl.size());
    r.energy.resize(sl.size());
    for (std::size_t k = 0; k < sl.size(); ++k) {
        const auto& s = sl[k];
        const auto& f = fs[k];
        const std::size_t N = s.size();
        std::vector<double> ib(N), ifl(N), ie(N);
        for (std::size_t i = 0; i < N; ++i) {
            const double G = detail::weight(s, f, i, r.log_weight_ref);
            const double al = s.a.prof[i], us = f.us[i], uu = f.u[i];
            const double Y = f.ut[i] + al * s.phi_s[i] * us + 0.5 * s.Psi[i] * uu;
            const double scal = 0.5 * (s.dtPsi[i] - s.divPsi[i] + (s.Phi_direct[i] - s.Psi[i]) * s.Psi[i]);
            ib[i] = (s.Qp_direct[i] * us * us + scal * uu * uu) * G;
            ifl[i] = (2.0 * f.Pu[i] * Y - 2.0 * Y * Y) * G;
            ie[i] = (al * us * us - 0.5 * s.Psi[i] * uu * uu) * G;
        }
        const double dp = s.geo.dp;
        bulk[k] = num::trapezoid(ib, dp);
        flux[k] = num::trapezoid(ifl, dp);
        r.energy[k] = num::trapezoid(ie, dp);
    }
    const double dt = sl[1].t - sl[0].t;
    r.bulk = num::trapezoid(bulk, dt);
    r.flux = num::trapezoid(flux, dt);
    r.energy_start = r.energy.front();
    r.energy_end = r.energy.back();
    r.residual = r.bulk - (r.flux - (r.energy_end - r.energy_start));
    r.scale = std::abs(r.bulk) + std::abs(r.flux) + std::abs(r.energy_end) + std::abs(r.energy_start);
    return r;
}

struct GlobalReport {
    double lhs = 0.0;            // (lambda^2/9) int int (|grad u|^2 + u^2) G
    double rhs_source = 0.0;     // int int (P u)^2 G
    double rhs_initial = 0.0;    // (3/lambda) int |grad u|^2 G at the first snapshot
    double rhs_final = 0.0;      // (1/2) int Psi u^2 G at the last snapshot
    double slack = 0.0;          // rhs - lhs
    double log_weight_ref = 0.0;
};

// Global weighted inequality; the run should span [-tau, 0].
inline GlobalReport global_carleman_check(const std::vector<CarlemanSlice>& sl, const TestFunction& u, double lambda) {
    detail::check_support(u, sl);
    GlobalReport r;
    const auto fs = detail::field_slices(sl, u);
    r.log_weight_ref = detail::log_weight_reference(sl, fs);
    std::vector<double> lhs(sl.size()), src(sl.size());
    for (std::size_t k = 0; k < sl.size(); ++k) {
        const auto& s = sl[k];
        const auto& f = fs[k];
        const std::size_t N = s.size();
        std::vector<double> il(N), is(N), i0(N), i1(N);
        for (std::size_t i = 0; i < N; ++i) {
            const double G = detail::weight(s, f, i, r.log_weight_ref);
            il[i] = (f.us[i] * f.us[i] + f.u[i] * f.u[i]) * G;
            is[i] = f.Pu[i] * f.Pu[i] * G;
            i0[i] = f.us[i] * f.us[i] * G;
            i1[i] = s.Psi[i] * f.u[i] * f.u[i] * G;
        }
        const double dp = s.geo.dp;
        lhs[k] = num::trapezoid(il, dp);
        src[k] = num::trapezoid(is, dp);
        if (k == 0) r.rhs_initial = 3.0 / lambda * num::trapezoid(i0, dp);
        if (k + 1 == sl.size()) r.rhs_final = 0.5 * num::trapezoid(i1, dp);
    }
    const double dt = sl[1].t - sl[0].t;
    r.lhs = lambda * lambda / 9.0 * num::trapezoid(lhs, dt);
    r.rhs_source = num::trapezoid(src, dt);
    r.slack = r.rhs_source + r.rhs_initial + r.rhs_final - r.lhs;
    return r;
}

}  // namespace fshrink
