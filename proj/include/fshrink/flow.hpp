#pragma once

#include "coefficient.hpp"
#include "shrinker.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <optional>

namespace fshrink {

// radial: height u over a hyperplane as a function of the distance x to the axis; curve (Z, R) = (u, x).
// profile: distance to the axis as a function of the axial coordinate; curve (Z, R) = (x, u).
enum class GraphMode { radial, profile };

inline const char* to_string(GraphMode m) { return m == GraphMode::radial ? "radial" : "profile"; }

struct FlowPatch {
    GraphMode mode = GraphMode::profile;
    int n = 2;
    int orientation = 1;
    double t = -1.0;
    std::vector<double> x, u;
    std::vector<double> w;       // cone graph baseline (optional)
    std::vector<double> u1, u2;  // exact derivatives when known (optional)

    std::size_t size() const { return x.size(); }
    double spacing() const {
        if (x.size() < 6) throw std::invalid_argument("flow patch: need >= 6 grid points");
        const double h = (x.back() - x.front()) / static_cast<double>(x.size() - 1);
        for (std::size_t i = 1; i < x.size(); ++i)
            if (std::abs(x[i] - x[i - 1] - h) > 1e-9 * h) throw std::invalid_argument("flow patch: grid not uniform");
        return h;
    }
    bool reflected() const { return mode == GraphMode::radial && x.front() == 0.0; }
    void validate() const {
        if (n < 2) throw std::invalid_argument("flow patch: n must be >= 2");
        if (u.size() != x.size()) throw std::invalid_argument("flow patch: u and x differ in length");
        if (!w.empty() && w.size() != x.size()) throw std::invalid_argument("flow patch: w and x differ in length");
        if ((!u1.empty() && u1.size() != x.size()) || (!u2.empty() && u2.size() != x.size()))
            throw std::invalid_argument("flow patch: derivative samples differ in length");
        if (mode == GraphMode::radial && x.front() < 0.0)
            throw std::invalid_argument("flow patch: radial grid must start at x >= 0");
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!std::isfinite(u[i])) throw std::invalid_argument("flow patch: non-finite u at " + std::to_string(i));
            if (mode == GraphMode::profile && !(u[i] > 0.0))
                throw std::invalid_argument("flow patch: profile radius <= 0 at " + std::to_string(i));
        }
        spacing();
    }
};

// Differencing in the grid parameter; radial grids starting on the axis are extended by reflection.
inline std::vector<double> grid_derivative(const std::vector<double>& q, double h, int order, bool reflect,
                                           int parity = 1) {
    if (!reflect) return order == 1 ? num::d1(q, h) : num::d2(q, h);
    std::vector<double> ext;
    ext.reserve(q.size() + 2);
    ext.push_back(parity * q[2]);
    ext.push_back(parity * q[1]);
    ext.insert(ext.end(), q.begin(), q.end());
    const auto d = order == 1 ? num::d1(ext, h) : num::d2(ext, h);
    return {d.begin() + 2, d.end()};
}

// Pointwise geometry of one time slice of a rotationally symmetric flow.
struct SliceGeometry {
    GraphMode mode = GraphMode::profile;
    int n = 2, orientation = 1;
    double t = -1.0, dp = 0.0;
    bool reflect = false;
    std::vector<double> p, u, u1, u2;
    std::vector<double> Z, R, speed, speed_p;
    std::vector<double> kappa_prof, kappa_rot, F, f_prof, f_rot, H;
    std::vector<double> normal_Z, normal_R, support, tangential, position_norm, rho;
    std::vector<double> e_dot_N, e_dot_T;  // graph direction against the normal and tangent

    std::size_t size() const { return p.size(); }
    bool on_axis(std::size_t i) const { return R[i] == 0.0; }
    std::vector<double> dpar(const std::vector<double>& q, int order, int parity = 1) const {
        return grid_derivative(q, dp, order, reflect, parity);
    }
    std::vector<double> ds1(const std::vector<double>& q, int parity = 1) const {
        auto d = dpar(q, 1, parity);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] /= speed[i];
        return d;
    }
    std::vector<double> ds2(const std::vector<double>& q, int parity = 1) const {
        const auto a = dpar(q, 1, parity), b = dpar(q, 2, parity);
        std::vector<double> d(q.size());
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double v = speed[i];
            d[i] = b[i] / (v * v) - a[i] * speed_p[i] / (v * v * v);
        }
        return d;
    }
    // div(a grad q) for a radial function q and a diagonal coefficient tensor with profile entry alpha.
    std::vector<double> divergence(const std::vector<double>& alpha, const std::vector<double>& q) const {
        const auto qs = ds1(q), qss = ds2(q), as = ds1(alpha);
        std::vector<double> d(q.size());
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double rot = on_axis(i) ? qss[i] : rho[i] * qs[i];
            d[i] = alpha[i] * qss[i] + as[i] * qs[i] + (n - 1) * alpha[i] * rot;
        }
        return d;
    }
};

inline CurveJet graph_jet(GraphMode mode, double x, double u, double u1, double u2) {
    return mode == GraphMode::profile ? CurveJet{x, u, 1.0, u1, 0.0, u2} : CurveJet{u, x, u1, 1.0, u2, 0.0};
}

inline SliceGeometry slice_geometry(const CurvatureSpec& spec, const FlowPatch& patch) {
    patch.validate();
    if (spec.n != patch.n) throw std::invalid_argument("slice: spec and patch dimensions differ");
    SliceGeometry s;
    s.mode = patch.mode;
    s.n = patch.n;
    s.orientation = patch.orientation;
    s.t = patch.t;
    s.dp = patch.spacing();
    s.reflect = patch.reflected();
    s.p = patch.x;
    s.u = patch.u;
    s.u1 = patch.u1.empty() ? grid_derivative(patch.u, s.dp, 1, s.reflect) : patch.u1;
    s.u2 = patch.u2.empty() ? grid_derivative(patch.u, s.dp, 2, s.reflect) : patch.u2;
    const std::size_t m = patch.size();
    for (auto* v : {&s.Z, &s.R, &s.speed, &s.speed_p, &s.kappa_prof, &s.kappa_rot, &s.F, &s.f_prof, &s.f_rot, &s.H,
                    &s.normal_Z, &s.normal_R, &s.support, &s.tangential, &s.position_norm, &s.rho, &s.e_dot_N,
                    &s.e_dot_T})
        v->resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const CurveJet c = graph_jet(s.mode, s.p[i], s.u[i], s.u1[i], s.u2[i]);
        PointGeometry g;
        if (c.R == 0.0) {
            // On the axis the rotational curvature is the limit of the profile one.
            const double v = std::hypot(c.Zp, c.Rp);
            g.normal_Z = s.orientation * c.Rp / v;
            g.normal_R = -s.orientation * c.Zp / v;
            g.speed_factor = v;
            g.kappa_prof = (g.normal_Z * c.Zpp + g.normal_R * c.Rpp) / (v * v);
            g.kappa_rot = g.kappa_prof;
            g.support = c.Z * g.normal_Z;
            g.tangential = c.Z * c.Zp / v;
            g.position_norm = std::abs(c.Z);
        } else {
            g = curve_geometry(s.n, c, s.orientation);
        }
        s.Z[i] = c.Z;
        s.R[i] = c.R;
        s.speed[i] = g.speed_factor;
        s.speed_p[i] = (c.Zp * c.Zpp + c.Rp * c.Rpp) / g.speed_factor;
        s.kappa_prof[i] = g.kappa_prof;
        s.kappa_rot[i] = g.kappa_rot;
        s.normal_Z[i] = g.normal_Z;
        s.normal_R[i] = g.normal_R;
        s.support[i] = g.support;
        s.tangential[i] = g.tangential;
        s.position_norm[i] = g.position_norm;
        s.rho[i] = c.R == 0.0 ? std::numeric_limits<double>::infinity() : (c.Rp / g.speed_factor) / c.R;
        const Vec lam = curvature_vector(s.n, g.kappa_prof, g.kappa_rot);
        try {
            s.F[i] = eval_f(spec, lam);
        } catch (const DomainError& e) {
            throw DomainError(std::string(e.what()) + " at grid point " + std::to_string(i) + " (x=" +
                                  std::to_string(s.p[i]) + ", t=" + std::to_string(s.t) + ")",
                              e.margin());
        }
        const Vec gr = spec.gradient(lam);
        s.f_prof[i] = gr[s.n - 1];
        s.f_rot[i] = gr[0];
        s.H[i] = g.kappa_prof + (s.n - 1) * g.kappa_rot;
        const double TZ = c.Zp / g.speed_factor, TR = c.Rp / g.speed_factor;
        s.e_dot_N[i] = s.mode == GraphMode::profile ? g.normal_R : g.normal_Z;
        s.e_dot_T[i] = s.mode == GraphMode::profile ? TR : TZ;
    }
    return s;
}

// Graph velocity making the normal speed equal to F.
inline std::vector<double> flow_rate(const SliceGeometry& s) {
    std::vector<double> r(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) r[i] = s.F[i] / s.e_dot_N[i];
    return r;
}

// Largest diffusion coefficient of the linearized graph equation.
inline double max_diffusion(const SliceGeometry& s) {
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        double c = s.f_prof[i];
        if (s.mode == GraphMode::radial) c += (s.n - 1) * s.f_rot[i];
        d = std::max(d, c / (s.speed[i] * s.speed[i]));
    }
    return d;
}

class CflError : public std::runtime_error {
public:
    CflError(double cfl, double suggested_dt)
        : std::runtime_error("flow step rejected: CFL number " + std::to_string(cfl) + " exceeds the limit; try dt <= " +
                             std::to_string(suggested_dt)),
          suggested_dt_(suggested_dt) {}
    double suggested_dt() const { return suggested_dt_; }

private:
    double suggested_dt_;
};

using BoundaryFn = std::function<double(double x, double t)>;

struct StepOptions {
    double cfl_max = 0.2;
    BoundaryFn boundary;  // defaults to the cone graph w
    int clamp = 2;        // clamped nodes at each Dirichlet edge
};

namespace detail {

inline BoundaryFn resolve_boundary(const FlowPatch& patch, const StepOptions& opt) {
    if (opt.boundary) return opt.boundary;
    if (patch.w.empty()) throw std::invalid_argument("flow step: no boundary function and no cone baseline");
    const double x0 = patch.x.front(), h = patch.spacing();
    std::vector<double> w = patch.w;
    return [w, x0, h](double x, double) {
        const auto i = static_cast<std::size_t>(std::llround((x - x0) / h));
        return w.at(i);
    };
}

inline bool clamped(const FlowPatch& p, std::size_t i, int clamp) {
    const auto c = static_cast<std::size_t>(clamp);
    if (i + c >= p.size()) return true;
    return !p.reflected() && i < c;
}

}  // namespace detail

inline double cfl_number(const CurvatureSpec& spec, const FlowPatch& patch, double dt) {
    const auto s = slice_geometry(spec, patch);
    return dt * max_diffusion(s) / (s.dp * s.dp);
}

// One explicit RK4 step of the graph flow with fourth-order differences and Dirichlet edges.
inline FlowPatch flow_step(const CurvatureSpec& spec, const FlowPatch& patch, double dt, const StepOptions& opt = {}) {
    if (!(dt >= 0.0)) throw std::invalid_argument("flow step: dt must be >= 0");
    if (dt == 0.0) return patch;
    const auto bc = detail::resolve_boundary(patch, opt);
    const std::size_t m = patch.size();
    FlowPatch work = patch;
    work.u1.clear();
    work.u2.clear();
    const auto s0 = slice_geometry(spec, work);
    const double D = max_diffusion(s0), h2 = s0.dp * s0.dp;
    const double cfl = dt * D / h2;
    if (cfl > opt.cfl_max) throw CflError(cfl, opt.cfl_max * h2 / D);

    auto rates = [&](const std::vector<double>& u, double t) {
        FlowPatch q = work;
        q.u = u;
        q.t = t;
        for (std::size_t i = 0; i < m; ++i)
            if (detail::clamped(q, i, opt.clamp)) q.u[i] = bc(q.x[i], t);
        auto r = flow_rate(slice_geometry(spec, q));
        for (std::size_t i = 0; i < m; ++i)
            if (detail::clamped(q, i, opt.clamp)) r[i] = 0.0;
        return r;
    };
    auto axpy = [&](double a, const std::vector<double>& k) {
        std::vector<double> v = work.u;
        for (std::size_t i = 0; i < m; ++i) v[i] += a * k[i];
        return v;
    };
    const double t = work.t;
    const auto k1 = rates(work.u, t);
    const auto k2 = rates(axpy(0.5 * dt, k1), t + 0.5 * dt);
    const auto k3 = rates(axpy(0.5 * dt, k2), t + 0.5 * dt);
    const auto k4 = rates(axpy(dt, k3), t + dt);
    FlowPatch out = work;
    out.t = t + dt;
    for (std::size_t i = 0; i < m; ++i) {
        if (detail::clamped(out, i, opt.clamp))
            out.u[i] = bc(out.x[i], out.t);
        else
            out.u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    return out;
}

struct EvolveOptions {
    double cfl_max = 0.2;
    double snapshot_dt = 0.0;  // 0: only the initial and final states
    BoundaryFn boundary;
    int clamp = 2;
    int max_halvings = 30;
};

struct FlowRun {
    std::vector<FlowPatch> snapshots;
    double snapshot_dt = 0.0;
    std::size_t steps = 0, rejected = 0;
    double max_cfl = 0.0;

    std::size_t size() const { return snapshots.size(); }
    const FlowPatch& operator[](std::size_t k) const { return snapshots.at(k); }
};

// Time integration with snapshots at uniform spacing; the step halves whenever the CFL limit rejects it.
inline FlowRun evolve(const CurvatureSpec& spec, FlowPatch patch, double t_end, const EvolveOptions& opt = {}) {
    if (!(t_end > patch.t)) throw std::invalid_argument("evolve: t_end must exceed the initial time");
    const double t0 = patch.t, span = t_end - t0;
    const double snap = opt.snapshot_dt > 0.0 ? opt.snapshot_dt : span;
    const double intervals = std::round(span / snap);
    if (std::abs(intervals * snap - span) > 1e-9 * span)
        throw std::invalid_argument("evolve: snapshot spacing does not divide the time span");
    StepOptions so;
    so.cfl_max = opt.cfl_max;
    so.boundary = opt.boundary;
    so.clamp = opt.clamp;
    FlowRun run;
    run.snapshot_dt = snap;
    patch.u1.clear();
    patch.u2.clear();
    run.snapshots.push_back(patch);
    const auto s0 = slice_geometry(spec, patch);
    std::size_t sub = static_cast<std::size_t>(std::ceil(snap * max_diffusion(s0) / (opt.cfl_max * s0.dp * s0.dp)));
    sub = std::max<std::size_t>(sub, 1);
    const auto K = static_cast<std::size_t>(intervals);
    for (std::size_t k = 1; k <= K; ++k) {
        const double ta = t0 + static_cast<double>(k - 1) * snap, tb = t0 + static_cast<double>(k) * snap;
        for (int attempt = 0;; ++attempt) {
            if (attempt > opt.max_halvings) throw std::runtime_error("evolve: step halving limit reached");
            try {
                FlowPatch q = run.snapshots.back();
                const double dt = (tb - ta) / static_cast<double>(sub);
                for (std::size_t j = 0; j < sub; ++j) {
                    run.max_cfl = std::max(run.max_cfl, cfl_number(spec, q, dt));
                    q = flow_step(spec, q, dt, so);
                    q.t = ta + static_cast<double>(j + 1) * dt;
                }
                q.t = tb;
                run.steps += sub;
                run.snapshots.push_back(std::move(q));
                break;
            } catch (const CflError&) {
                ++run.rejected;
                sub *= 2;
            }
        }
    }
    return run;
}

// Shrinking sphere of the mean-curvature flow: R(t)^2 = R0^2 - 2 n t.
inline double sphere_radius(int n, double R0, double t) {
    const double r2 = R0 * R0 - 2.0 * n * t;
    if (!(r2 > 0.0)) throw std::domain_error("sphere has already vanished");
    return std::sqrt(r2);
}

// Slice of the rescaled flow sqrt(-t) * Sigma in profile mode, with exact derivatives; t = 0 is the cone.
inline FlowPatch self_similar_patch(const ProfileInterpolant& shrinker, double sigma, int n, int orientation,
                                    const std::vector<double>& x, double t) {
    if (t > 0.0) throw std::invalid_argument("self-similar slice: t must be <= 0");
    FlowPatch p;
    p.mode = GraphMode::profile;
    p.n = n;
    p.orientation = orientation;
    p.t = t;
    p.x = x;
    const std::size_t m = x.size();
    p.u.resize(m);
    p.u1.resize(m);
    p.u2.resize(m);
    p.w.resize(m);
    const double s = std::sqrt(-t);
    for (std::size_t i = 0; i < m; ++i) {
        p.w[i] = sigma * x[i];
        if (t == 0.0) {
            p.u[i] = sigma * x[i];
            p.u1[i] = sigma;
            p.u2[i] = 0.0;
        } else {
            const auto j = shrinker.at(x[i] / s);
            p.u[i] = s * j.f;
            p.u1[i] = j.f1;
            p.u2[i] = j.f2 / s;
        }
    }
    return p;
}

inline BoundaryFn self_similar_boundary(const ProfileInterpolant& shrinker) {
    return [&shrinker](double x, double t) {
        const double s = std::sqrt(-t);
        return s * shrinker.at(x / s).f;
    };
}

inline FlowRun self_similar_run(const ProfileInterpolant& shrinker, double sigma, int n, int orientation,
                                const std::vector<double>& x, double t0, double t1, std::size_t count) {
    if (count < 2 || !(t1 > t0)) throw std::invalid_argument("self-similar run: need >= 2 slices and t1 > t0");
    FlowRun run;
    run.snapshot_dt = (t1 - t0) / static_cast<double>(count - 1);
    for (std::size_t k = 0; k < count; ++k) {
        const double t = k + 1 == count ? t1 : t0 + static_cast<double>(k) * run.snapshot_dt;
        run.snapshots.push_back(self_similar_patch(shrinker, sigma, n, orientation, x, t));
    }
    return run;
}

struct DecayFit {
    double C = 0.0;             // |X| |u - w| <= C (-t)
    double fit_residual = 0.0;  // worst relative misfit of the model
    double slope = std::numeric_limits<double>::quiet_NaN();  // d log sup|u-w| / d log(-t)
    double slope_r2 = 0.0;
    bool exact_zero = false;
    std::size_t samples = 0;
};

inline DecayFit rescaled_decay_fit(const FlowRun& run) {
    std::vector<const FlowPatch*> use;
    for (const auto& p : run.snapshots)
        if (p.t < 0.0) use.push_back(&p);
    if (use.size() < 3) throw std::invalid_argument("decay fit: need >= 3 slices with t < 0");
    DecayFit out;
    double sym = 0.0, smm = 0.0, ymax = 0.0;
    std::vector<double> lt, ls;
    for (const auto* p : use) {
        if (p->w.size() != p->size()) throw std::invalid_argument("decay fit: slice lacks the cone baseline");
        double sup = 0.0;
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double Xn = std::hypot(p->x[i], p->w[i]);
            const double y = std::abs(p->u[i] - p->w[i]), m = -p->t / Xn;
            sym += y * m;
            smm += m * m;
            ymax = std::max(ymax, y);
            sup = std::max(sup, y);
            ++out.samples;
        }
        if (sup > 0.0) {
            lt.push_back(std::log(-p->t));
            ls.push_back(std::log(sup));
        }
    }
    if (ymax == 0.0) {
        out.exact_zero = true;
        return out;
    }
    out.C = sym / smm;
    for (const auto* p : use)
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double Xn = std::hypot(p->x[i], p->w[i]);
            out.fit_residual =
                std::max(out.fit_residual, std::abs(std::abs(p->u[i] - p->w[i]) - out.C * (-p->t) / Xn) / ymax);
        }
    if (lt.size() >= 2) {
        const auto f = num::fit_line(lt, ls);
        out.slope = f.slope;
        out.slope_r2 = f.r2;
    }
    return out;
}

struct EvolutionCheck {
    double shape_abs = 0.0, shape_rel = 0.0;
    double metric_abs = 0.0, metric_rel = 0.0;
    std::size_t samples = 0;
};

// Residuals of the metric and shape-operator evolution along normal trajectories, from snapshot differences.
inline EvolutionCheck shape_evolution_check(const CurvatureSpec& spec, const FlowRun& run, std::size_t margin = 6) {
    if (run.size() < 3) throw std::invalid_argument("evolution check: need >= 3 snapshots");
    const int n = spec.n;
    EvolutionCheck out;
    double shape_scale = 0.0, metric_scale = 0.0;
    auto slice = [&](std::size_t k) { return slice_geometry(spec, run[k]); };
    SliceGeometry prev = slice(0), cur = slice(1);
    for (std::size_t k = 1; k + 1 < run.size(); ++k) {
        SliceGeometry next = slice(k + 1);
        const double dt = next.t - prev.t;
        const std::size_t m = cur.size();
        if (2 * margin + 1 > m) throw std::invalid_argument("evolution check: margin leaves no interior");
        std::vector<double> pdot(m), lnv2(m), lnv2_t(m);
        for (std::size_t i = 0; i < m; ++i) {
            const double ut = (next.u[i] - prev.u[i]) / dt;
            pdot[i] = -ut * cur.e_dot_T[i] / cur.speed[i];
            lnv2[i] = 2.0 * std::log(cur.speed[i]);
            lnv2_t[i] = 2.0 * (std::log(next.speed[i]) - std::log(prev.speed[i])) / dt;
        }
        const auto kp_p = cur.dpar(cur.kappa_prof, 1), kr_p = cur.dpar(cur.kappa_rot, 1);
        const auto pdot_p = cur.dpar(pdot, 1, -1), lnv2_p = cur.dpar(lnv2, 1);
        const auto R_p = cur.dpar(cur.R, 1, -1);
        const auto as = cur.ds1(cur.kappa_prof), ass = cur.ds2(cur.kappa_prof);
        const auto bs = cur.ds1(cur.kappa_rot), bss = cur.ds2(cur.kappa_rot);
        for (std::size_t i = margin; i + margin < m; ++i) {
            if (cur.on_axis(i)) continue;
            const double al = cur.kappa_prof[i], be = cur.kappa_rot[i], rho = cur.rho[i];
            const double fp = cur.f_prof[i], fr = cur.f_rot[i], F = cur.F[i];
            const double gam = rho * (al - be);
            const Mat S = curvature_vector(n, al, be).asDiagonal();
            const MatrixPoint mp = make_matrix_point(S);
            Mat E1 = curvature_vector(n, as[i], bs[i]).asDiagonal();
            Mat Eb = Mat::Zero(n, n);
            Eb(0, n - 1) = Eb(n - 1, 0) = gam;
            const double d2p = (d2F_contract(spec, mp, E1) * E1).trace();
            const double d2r = (d2F_contract(spec, mp, Eb) * Eb).trace();
            const double A2 = fp * al * al + (n - 1) * fr * be * be;
            const double rhs_p = fp * ass[i] + fr * (n - 1) * (rho * as[i] - 2.0 * rho * rho * (al - be)) + A2 * al + d2p;
            const double rhs_r = fp * bss[i] + fr * ((n - 1) * rho * bs[i] + 2.0 * rho * rho * (al - be)) + A2 * be + d2r;
            const double lhs_p = (next.kappa_prof[i] - prev.kappa_prof[i]) / dt + pdot[i] * kp_p[i];
            const double lhs_r = (next.kappa_rot[i] - prev.kappa_rot[i]) / dt + pdot[i] * kr_p[i];
            out.shape_abs = std::max({out.shape_abs, std::abs(lhs_p - rhs_p), std::abs(lhs_r - rhs_r)});
            shape_scale = std::max({shape_scale, std::abs(rhs_p), std::abs(rhs_r)});

            const double g_pp = 2.0 * pdot_p[i] + lnv2_t[i] + pdot[i] * lnv2_p[i];
            const double R_t = (next.R[i] - prev.R[i]) / dt + pdot[i] * R_p[i];
            const double g_rr = 2.0 * R_t / cur.R[i];
            const double m_pp = -2.0 * F * al, m_rr = -2.0 * F * be;
            out.metric_abs = std::max({out.metric_abs, std::abs(g_pp - m_pp), std::abs(g_rr - m_rr)});
            metric_scale = std::max({metric_scale, std::abs(m_pp), std::abs(m_rr)});
            ++out.samples;
        }
        prev = std::move(cur);
        cur = std::move(next);
    }
    out.shape_rel = shape_scale > 0.0 ? out.shape_abs / shape_scale : out.shape_abs;
    out.metric_rel = metric_scale > 0.0 ? out.metric_abs / metric_scale : out.metric_abs;
    return out;
}

// Signed normal-graph height of another hypersurface over a base profile.
struct DeviationField {
    ProfileCurve base;
    double t = -1.0;
    std::vector<double> h, h1, h2;        // height and its z-derivatives on the base grid
    std::vector<double> grad, hess_prof, hess_rot;
    std::vector<double> alignment;        // other normal . base normal
    double min_alignment = 1.0;

    std::size_t size() const { return h.size(); }
    double sup_abs() const {
        double m = 0.0;
        for (double v : h) m = std::max(m, std::abs(v));
        return m;
    }
};

struct DeviationOptions {
    double tol = 1e-12;
    double min_alignment = 2.0 / 3.0;
};

inline DeviationField deviation_field(const ProfileCurve& base, const ProfileInterpolant& other,
                                      const DeviationOptions& opt = {}) {
    base.validate();
    const double dz = base.spacing();
    const std::size_t m = base.size();
    DeviationField d;
    d.base = base;
    d.h.resize(m);
    d.alignment.resize(m);
    const int o = base.orientation;
    for (std::size_t i = 0; i < m; ++i) {
        const auto g = point_geometry(base, i);
        const double Z = base.z[i], R = base.r[i], NZ = g.normal_Z, NR = g.normal_R;
        auto theta = [&](double s) { return other.at(Z + s * NZ).f - (R + s * NR); };
        const double gap = other.at(Z).f - R;
        double s = 0.0;
        if (gap != 0.0) {
            double lo = -2.0 * std::abs(gap), hi = 2.0 * std::abs(gap);
            double flo = theta(lo), fhi = theta(hi);
            for (int k = 0; k < 40 && flo * fhi > 0.0; ++k) {
                lo *= 2.0;
                hi *= 2.0;
                flo = theta(lo);
                fhi = theta(hi);
            }
            if (flo * fhi > 0.0)
                throw std::runtime_error("deviation: no bracket for the normal height at sample " + std::to_string(i) +
                                         " (z=" + std::to_string(Z) + ")");
            boost::uintmax_t it = 200;
            const auto root = boost::math::tools::toms748_solve(
                theta, lo, hi, flo, fhi, [&](double a, double b) { return std::abs(b - a) <= opt.tol; }, it);
            s = 0.5 * (root.first + root.second);
            for (int k = 0; k < 3; ++k) {
                const auto j = other.at(Z + s * NZ);
                const double f = j.f - (R + s * NR), df = j.f1 * NZ - NR;
                if (df == 0.0) break;
                const double step = f / df;
                s -= step;
                if (std::abs(step) <= 1e-16 * (1.0 + std::abs(s))) break;
            }
        }
        d.h[i] = s;
        const auto j = other.at(Z + s * NZ);
        const double v = std::hypot(1.0, j.f1);
        const double oNZ = o * j.f1 / v, oNR = -o / v;
        d.alignment[i] = oNZ * NZ + oNR * NR;
        d.min_alignment = std::min(d.min_alignment, d.alignment[i]);
        if (d.alignment[i] < opt.min_alignment)
            throw std::runtime_error("deviation: normal alignment " + std::to_string(d.alignment[i]) +
                                     " below the limit at sample " + std::to_string(i) + " (z=" + std::to_string(Z) +
                                     ")");
    }
    d.h1 = num::d1(d.h, dz);
    d.h2 = num::d2(d.h, dz);
    d.grad.resize(m);
    d.hess_prof.resize(m);
    d.hess_rot.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double v = std::hypot(1.0, base.r1[i]);
        const double vp = base.r1[i] * base.r2[i] / v;
        d.grad[i] = d.h1[i] / v;
        d.hess_prof[i] = d.h2[i] / (v * v) - d.h1[i] * vp / (v * v * v);
        d.hess_rot[i] = d.grad[i] * (base.r1[i] / v) / base.r[i];
    }
    return d;
}

// Coefficient tensor of the deviation equation on the base profile.
inline CoefficientTensor deviation_coefficients(const CurvatureSpec& spec, const DeviationField& dev, int nodes = 8) {
    const auto& b = dev.base;
    const auto off = normal_graph_geometry(b, dev.h, dev.h1, dev.h2);
    std::vector<double> kp(b.size()), kr(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
        const auto g = point_geometry(b, i);
        kp[i] = g.kappa_prof;
        kr[i] = g.kappa_rot;
    }
    return tensor_a(spec, kp, kr, off.kappa_prof, off.kappa_rot, nodes);
}

struct ResidualReport {
    std::vector<double> residual, bound;  // bound = |grad h|/|X| + |h|/|X|^2
    double fitted_C = 0.0;
    double max_abs = 0.0;
    std::size_t edge = 0;
};

// div(a dh) - (X.grad h - h)/2 on the base shrinker.
inline ResidualReport deviation_elliptic_residual(const CurvatureSpec& spec, const DeviationField& dev,
                                                  std::size_t edge = 4, int nodes = 8) {
    const auto& b = dev.base;
    if (spec.n != b.n) throw std::invalid_argument("elliptic residual: dimensions differ");
    const std::size_t m = b.size();
    const auto ct = deviation_coefficients(spec, dev, nodes);
    const double dz = b.spacing();
    std::vector<double> flux(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double v = std::hypot(1.0, b.r1[i]);
        flux[i] = std::pow(b.r[i], b.n - 1) * ct.prof[i] * dev.h1[i] / v;
    }
    const auto dflux = num::d1(flux, dz);
    ResidualReport out;
    out.edge = edge;
    out.residual.resize(m);
    out.bound.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto g = point_geometry(b, i);
        const double v = g.speed_factor;
        const double div = dflux[i] / (std::pow(b.r[i], b.n - 1) * v);
        out.residual[i] = div - 0.5 * (g.tangential * dev.grad[i] - dev.h[i]);
        const double X = g.position_norm;
        out.bound[i] = std::abs(dev.grad[i]) / X + std::abs(dev.h[i]) / (X * X);
        if (i < edge || i + edge >= m) continue;
        out.max_abs = std::max(out.max_abs, std::abs(out.residual[i]));
        if (out.bound[i] > 0.0) out.fitted_C = std::max(out.fitted_C, std::abs(out.residual[i]) / out.bound[i]);
    }
    return out;
}

// Two self-similar flows sqrt(-t) Sigma and sqrt(-t) Sigma~, compared through the deviation of Sigma~ over Sigma.
struct SelfSimilarPair {
    const CurvatureSpec* spec = nullptr;
    DeviationField dev;
    ResidualReport elliptic;
    ProfileCurve h_curve;  // h as a profile-like curve for interpolation

    SelfSimilarPair(const CurvatureSpec& s, DeviationField d, std::size_t edge = 4)
        : spec(&s), dev(std::move(d)), elliptic(deviation_elliptic_residual(s, dev, edge)) {
        h_curve.n = dev.base.n;
        h_curve.z = dev.base.z;
        h_curve.r = dev.h;
        h_curve.r1 = dev.h1;
        h_curve.r2 = dev.h2;
    }
    num::Jet h_at(double z) const {
        const auto& zz = h_curve.z;
        const double dz = (zz.back() - zz.front()) / static_cast<double>(zz.size() - 1);
        if (z < zz.front() || z > zz.back()) throw std::out_of_range("deviation: z outside the base range");
        std::size_t i = static_cast<std::size_t>((z - zz.front()) / dz);
        i = std::min(i, zz.size() - 2);
        return num::hermite5(zz[i], {h_curve.r[i], h_curve.r1[i], h_curve.r2[i]}, zz[i + 1],
                             {h_curve.r[i + 1], h_curve.r1[i + 1], h_curve.r2[i + 1]}, z);
    }
    num::Jet base_at(double z) const {
        const auto& b = dev.base;
        const double dz = b.spacing();
        std::size_t i = static_cast<std::size_t>((z - b.z.front()) / dz);
        i = std::min(i, b.size() - 2);
        return num::hermite5(b.z[i], {b.r[i], b.r1[i], b.r2[i]}, b.z[i + 1], {b.r[i + 1], b.r1[i + 1], b.r2[i + 1]}, z);
    }
};

// Tangential reparametrization turning the radial parametrization of sqrt(-t) Sigma into a normal one:
// dz/dt = (X.dX/dz) / (2 (-t) |dX/dz|^2) in coordinates of the base profile.
inline double normal_drift(const SelfSimilarPair& pair, double z, double t) {
    const auto j = pair.base_at(z);
    return (z + j.f * j.f1) / (2.0 * (-t) * (1.0 + j.f1 * j.f1));
}

inline double rk4_normal_trajectory(const SelfSimilarPair& pair, double z, double t0, double t1, int steps) {
    const double dt = (t1 - t0) / steps;
    double t = t0;
    for (int k = 0; k < steps; ++k) {
        const double k1 = normal_drift(pair, z, t);
        const double k2 = normal_drift(pair, z + 0.5 * dt * k1, t + 0.5 * dt);
        const double k3 = normal_drift(pair, z + 0.5 * dt * k2, t + 0.5 * dt);
        const double k4 = normal_drift(pair, z + dt * k3, t + dt);
        z += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        t = t0 + (k + 1) * dt;
    }
    return z;
}

struct ParabolicSlice {
    double t = 0.0;
    double sup_h = 0.0;          // sup |h_t| over the window
    double fitted_C = 0.0;       // |P h| <= C (|grad h_t|/|X_t| + |h_t|/|X_t|^2)
    double max_abs = 0.0;        // sup |P h|
    double scaling_mismatch = 0.0;  // |P h + E/sqrt(-t)| against the elliptic residual E
};

struct ParabolicReport {
    std::vector<ParabolicSlice> slices;
    double decay_slope = std::numeric_limits<double>::quiet_NaN();  // d log sup|h_t| / d log(-t)
    double terminal_sup = 0.0;
    bool exact_zero = false;
};

struct ParabolicOptions {
    double X_lo = 2.0, X_hi = 6.0;  // window in |X_t|
    std::size_t points = 41;
    double dt = 1e-3;               // half-width of the time difference along a trajectory
    int rk_steps = 4;
};

// P h = d/dt h along normal trajectories - div(a dh), evaluated on the pair of self-similar flows.
inline ParabolicReport parabolic_deviation_residual(const SelfSimilarPair& pair, const std::vector<double>& times,
                                                    const ParabolicOptions& opt = {}) {
    const auto& b = pair.dev.base;
    ParabolicReport rep;
    const double dz = b.spacing();
    std::vector<double> lt, ls;
    bool all_zero = true;
    for (double t : times) {
        if (!(t + opt.dt < 0.0)) throw std::invalid_argument("parabolic residual: times must satisfy t + dt < 0");
        const double s = std::sqrt(-t);
        ParabolicSlice sl;
        sl.t = t;
        for (std::size_t q = 0; q < opt.points; ++q) {
            const double Xt = opt.X_lo + (opt.X_hi - opt.X_lo) * q / (opt.points - 1.0);
            const double Xb = Xt / s;
            // Base node whose |X| is closest to Xb.
            std::size_t i = 0;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t k = 4; k + 4 < b.size(); ++k) {
                const double d = std::abs(std::hypot(b.z[k], b.r[k]) - Xb);
                if (d < best) {
                    best = d;
                    i = k;
                }
            }
            if (best > 2.0 * dz * std::sqrt(2.0))
                throw std::out_of_range("parabolic residual: base profile does not reach |X| = " + std::to_string(Xb));
            const double z = b.z[i];
            const double zp = rk4_normal_trajectory(pair, z, t, t + opt.dt, opt.rk_steps);
            const double zm = rk4_normal_trajectory(pair, z, t, t - opt.dt, opt.rk_steps);
            const double Hp = std::sqrt(-(t + opt.dt)) * pair.h_at(zp).f;
            const double Hm = std::sqrt(-(t - opt.dt)) * pair.h_at(zm).f;
            const double dHdt = (Hp - Hm) / (2.0 * opt.dt);
            const double E = pair.elliptic.residual[i];
            const double drift = 0.5 * (point_geometry(b, i).tangential * pair.dev.grad[i] - pair.dev.h[i]);
            const double div = (E + drift) / s;
            const double Ph = dHdt - div;
            sl.max_abs = std::max(sl.max_abs, std::abs(Ph));
            sl.scaling_mismatch = std::max(sl.scaling_mismatch, std::abs(Ph + E / s));
            // |grad h_t|/|X_t| + |h_t|/|X_t|^2 scales like the base bound over sqrt(-t).
            const double bound = pair.elliptic.bound[i] / s;
            if (bound > 0.0) sl.fitted_C = std::max(sl.fitted_C, std::abs(Ph) / bound);
            sl.sup_h = std::max(sl.sup_h, s * std::abs(pair.dev.h[i]));
        }
        if (sl.sup_h > 0.0) {
            all_zero = false;
            lt.push_back(std::log(-t));
            ls.push_back(std::log(sl.sup_h));
        }
        rep.slices.push_back(sl);
    }
    rep.exact_zero = all_zero;
    if (lt.size() >= 2) rep.decay_slope = num::fit_line(lt, ls).slope;
    if (!rep.slices.empty()) {
        auto it = std::max_element(rep.slices.begin(), rep.slices.end(),
                                   [](const ParabolicSlice& a, const ParabolicSlice& c) { return a.t < c.t; });
        rep.terminal_sup = it->sup_h;
    }
    return rep;
}

struct ExpFit {
    double Lambda = std::numeric_limits<double>::quiet_NaN();
    double r2 = 0.0;
    std::size_t used = 0, masked = 0;
    bool exact_zero = false;
};

// Fit log(value) = c + (|X|^2 / t) / Lambda over samples (|X|, t, value) with t < 0.
inline ExpFit exponential_decay_fit(const std::vector<double>& X, const std::vector<double>& t,
                                    const std::vector<double>& value, double floor = 1e-300) {
    if (X.size() != t.size() || X.size() != value.size()) throw std::invalid_argument("exp fit: length mismatch");
    std::vector<double> xs, ys;
    ExpFit out;
    for (std::size_t i = 0; i < X.size(); ++i) {
        if (!(t[i] < 0.0)) throw std::invalid_argument("exp fit: times must be negative");
        if (!(std::abs(value[i]) > floor)) {
            ++out.masked;
            continue;
        }
        xs.push_back(X[i] * X[i] / t[i]);
        ys.push_back(std::log(std::abs(value[i])));
    }
    out.used = xs.size();
    if (xs.empty()) {
        out.exact_zero = true;
        return out;
    }
    if (xs.size() < 3) throw std::invalid_argument("exp fit: fewer than 3 samples above the floor");
    const auto f = num::fit_line(xs, ys);
    out.Lambda = 1.0 / f.slope;
    out.r2 = f.r2;
    return out;
}

// |h_t| + |grad h_t| at fixed |X_t| for a self-similar pair: h_t(X_t) = sqrt(-t) h(X_t / sqrt(-t)).
inline double pair_deviation_at(const SelfSimilarPair& pair, double Xt, double t) {
    const auto& b = pair.dev.base;
    const double s = std::sqrt(-t), Xb = Xt / s;
    // Invert |X|(z) on the base by bisection (|X| increases along the end).
    double lo = b.z.front(), hi = b.z.back();
    auto normX = [&](double z) { return std::hypot(z, pair.base_at(z).f); };
    if (Xb < normX(lo) || Xb > normX(hi)) throw std::out_of_range("pair deviation: |X| outside the base range");
    const auto r = boost::math::tools::bisect([&](double z) { return normX(z) - Xb; }, lo, hi,
                                              boost::math::tools::eps_tolerance<double>(50));
    const double z = 0.5 * (r.first + r.second);
    const auto j = pair.h_at(z), bj = pair.base_at(z);
    const double v = std::hypot(1.0, bj.f1);
    return s * std::abs(j.f) + std::abs(j.f1) / v;
}

}  // namespace fshrink
