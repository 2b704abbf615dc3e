#pragma once

#include "cone.hpp"
#include "revolution.hpp"

#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include <array>
#include <optional>

namespace fshrink {

struct ShootState {
    double z = 0.0;
    double r = 1.0;
    double r1 = 0.0;
};

class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, ShootState s)
        : std::runtime_error(what + " at (z=" + std::to_string(s.z) + ", r=" + std::to_string(s.r) +
                             ", r1=" + std::to_string(s.r1) + ")"),
          state_(s) {}
    const ShootState& state() const { return state_; }

private:
    ShootState state_;
};

// r'' making the shrinker equation vanish at the state; closed form for E1, bracketed root otherwise.
inline double shrinker_ode_rhs(const CurvatureSpec& spec, const ShootState& s, int orientation = 1) {
    if (!(s.r > 0.0)) throw SolverError("shrinker rhs: r <= 0", s);
    const double W2 = 1.0 + s.r1 * s.r1, W = std::sqrt(W2);
    if (spec.name == "E1") return W2 * ((spec.n - 1) / s.r + 0.5 * (s.z * s.r1 - s.r));
    const int n = spec.n;
    const double krot = orientation / (s.r * W);
    const double half_support = 0.5 * orientation * (s.z * s.r1 - s.r) / W;
    auto phi = [&](double k) -> std::optional<double> {
        const Vec l = curvature_vector(n, k, krot);
        if (!(spec.margin(l) > 0.0)) return std::nullopt;
        return spec.value(l) + half_support;
    };
    // Start from the mean-curvature solution and walk outward until the sign flips.
    double a = -(n - 1) * krot - half_support;
    double step = 0.1 * (std::abs(a) + std::abs(krot)) + 1e-3;
    std::optional<double> fa = phi(a);
    for (int k = 0; !fa && k < 200; ++k) {
        a += step;
        step *= 2.0;
        fa = phi(a);
    }
    if (!fa) throw SolverError("shrinker rhs: no admissible profile curvature", s);
    if (*fa == 0.0) return -orientation * a * W2 * W;
    const double dir = *fa < 0.0 ? 1.0 : -1.0;
    step = 0.1 * (std::abs(a) + std::abs(krot)) + 1e-3;
    double b = a;
    std::optional<double> fb;
    for (int k = 0; k < 400; ++k) {
        b = a + dir * step;
        fb = phi(b);
        if (!fb) {
            step *= 0.5;
            if (step < 1e-300) break;
            continue;
        }
        if ((*fb > 0.0) != (*fa > 0.0)) break;
        a = b;
        fa = fb;
        step *= 2.0;
        fb.reset();
    }
    if (!fb || (*fb > 0.0) == (*fa > 0.0))
        throw SolverError("shrinker rhs: no admissible root for the profile curvature (ellipticity lost)", s);
    auto g = [&](double k) { return *phi(k); };
    boost::uintmax_t iters = 200;
    double lo = std::min(a, b), hi = std::max(a, b);
    double flo = a < b ? *fa : *fb, fhi = a < b ? *fb : *fa;
    const auto root = boost::math::tools::toms748_solve(g, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(52),
                                                        iters);
    const double k = 0.5 * (root.first + root.second);
    const Vec l = curvature_vector(n, k, krot);
    if (!(spec.gradient(l)[n - 1] > 0.0)) throw SolverError("shrinker rhs: ellipticity fails in the profile slot", s);
    return -orientation * k * W2 * W;
}

namespace detail {

using OdeState = std::array<double, 2>;

struct ShrinkerOde {
    const CurvatureSpec* spec;
    int orientation;
    void operator()(const OdeState& x, OdeState& dx, double z) const {
        dx[0] = x[1];
        dx[1] = shrinker_ode_rhs(*spec, ShootState{z, x[0], x[1]}, orientation);
    }
};

enum class Stop { reached, r_small, slope_up, slope_down, failed };

struct MarchLimits {
    double r_min = 1e-6;
    double slope_max = 1e4;
};

// Adaptive Dormand-Prince march from init toward z_end; `sample(z, x)` is called on the uniform grid.
template <class Sampler>
Stop march(const CurvatureSpec& spec, int orientation, const ShootState& init, double z_end, double tol, double dz,
           Sampler&& sample, const MarchLimits& lim = {}, ShootState* last = nullptr) {
    namespace ode = boost::numeric::odeint;
    ShrinkerOde sys{&spec, orientation};
    const double dir = z_end >= init.z ? 1.0 : -1.0;
    const double span = std::abs(z_end - init.z);
    auto stepper = ode::make_dense_output(tol, tol, ode::runge_kutta_dopri5<OdeState>());
    OdeState x{init.r, init.r1};
    stepper.initialize(x, init.z, dir * std::min(1e-3, 0.5 * span + 1e-12));
    const std::size_t nsample = dz > 0.0 ? static_cast<std::size_t>(std::floor(span / dz + 1e-9)) + 1 : 0;
    std::size_t next = 0;
    auto emit_until = [&](double zt) {
        while (next < nsample) {
            double zs = init.z + dir * dz * static_cast<double>(next);
            if (next + 1 == nsample && std::abs(zs - z_end) <= 1e-9 * dz) zs = z_end;
            if (dir * (zs - zt) > 1e-9 * dz) break;
            OdeState xs;
            if (next == 0)
                xs = {init.r, init.r1};
            else
                stepper.calc_state(zs, xs);
            sample(zs, xs);
            ++next;
        }
    };
    emit_until(init.z);
    Stop why = Stop::reached;
    try {
        while (dir * (z_end - stepper.current_time()) > 0.0) {
            stepper.do_step(sys);
            const double zc = stepper.current_time();
            emit_until(std::min(dir * zc, dir * z_end) * dir);
            const OdeState& xc = stepper.current_state();
            if (last) *last = {zc, xc[0], xc[1]};
            if (!std::isfinite(xc[0]) || !std::isfinite(xc[1])) {
                why = Stop::failed;
                break;
            }
            if (xc[0] <= lim.r_min) {
                why = Stop::r_small;
                break;
            }
            if (xc[1] >= lim.slope_max) {
                why = Stop::slope_up;
                break;
            }
            if (xc[1] <= -lim.slope_max) {
                why = Stop::slope_down;
                break;
            }
        }
    } catch (const std::exception&) {
        why = Stop::failed;
    }
    return why;
}

}  // namespace detail

struct IntegrateOptions {
    int orientation = 1;
    double dz = 0.01;  // output spacing
    detail::MarchLimits limits{};
};

// Uniformly sampled trajectory; blow-up leaves a partial profile flagged in the result.
inline ProfileCurve integrate_profile(const CurvatureSpec& spec, const ShootState& init, double z_end, double tol,
                                      const IntegrateOptions& opt = {}) {
    if (!(init.r > 0.0)) throw std::invalid_argument("integrate_profile: initial r must be > 0");
    if (!(tol > 0.0) || !(opt.dz > 0.0)) throw std::invalid_argument("integrate_profile: tol and dz must be > 0");
    ProfileCurve p;
    p.n = spec.n;
    p.orientation = opt.orientation;
    p.source = DerivativeSource::analytic;
    auto sample = [&](double z, const detail::OdeState& x) {
        p.z.push_back(z);
        p.r.push_back(x[0]);
        p.r1.push_back(x[1]);
    };
    const auto why = detail::march(spec, opt.orientation, init, z_end, tol, opt.dz, sample, opt.limits);
    p.blew_up = why != detail::Stop::reached;
    if (z_end < init.z) {
        std::reverse(p.z.begin(), p.z.end());
        std::reverse(p.r.begin(), p.r.end());
        std::reverse(p.r1.begin(), p.r1.end());
    }
    // Drop trailing samples that left the domain (possible when the march failed mid-step).
    while (!p.r.empty() && !(p.r.back() > 0.0 && std::isfinite(p.r1.back()))) {
        p.z.pop_back();
        p.r.pop_back();
        p.r1.pop_back();
        p.blew_up = true;
    }
    p.r2.resize(p.z.size());
    for (std::size_t i = 0; i < p.z.size(); ++i) {
        try {
            p.r2[i] = shrinker_ode_rhs(spec, {p.z[i], p.r[i], p.r1[i]}, opt.orientation);
        } catch (const std::exception&) {
            p.z.resize(i);
            p.r.resize(i);
            p.r1.resize(i);
            p.r2.resize(i);
            p.blew_up = true;
            break;
        }
    }
    return p;
}

inline double max_equation_residual(const CurvatureSpec& spec, const ProfileCurve& p) {
    double m = 0.0;
    for (double v : shrinker_residual(spec, p)) m = std::max(m, std::abs(v));
    return m;
}

// +1: slope blows up upward, -1: slope blows down or r collapses, 0: undecided by z_max.
inline int trajectory_fate(const CurvatureSpec& spec, const ShootState& init, double z_max, double tol,
                           int orientation = 1, detail::MarchLimits lim = {}) {
    ShootState last = init;
    const auto why =
        detail::march(spec, orientation, init, z_max, tol, 0.0, [](double, const detail::OdeState&) {}, lim, &last);
    switch (why) {
        case detail::Stop::slope_up: return 1;
        case detail::Stop::slope_down:
        case detail::Stop::r_small: return -1;
        case detail::Stop::failed: return last.r1 > 0.0 && last.r > lim.r_min ? 1 : -1;
        default: return 0;
    }
}

// Asymptotic data r = sigma z + a/z + b/z^3 of the conical end.
struct EndSeries {
    double sigma = 1.0, a = 0.0, b = 0.0;
    num::Jet at(double z) const {
        const double z2 = z * z;
        return {sigma * z + a / z + b / (z2 * z), sigma - a / z2 - 3.0 * b / (z2 * z2),
                2.0 * a / (z2 * z) + 12.0 * b / (z2 * z2 * z)};
    }
};

inline EndSeries end_series(const CurvatureSpec& spec, const ConeSpec& cone, double z_match) {
    cone.validate();
    if (spec.n != cone.n) throw std::invalid_argument("spec and cone dimensions differ");
    Vec unit = Vec::Ones(cone.n);
    unit[cone.n - 1] = 0.0;
    EndSeries s;
    s.sigma = cone.sigma;
    s.a = cone.orientation * eval_f(spec, cone.orientation * unit) / cone.sigma;
    auto residual = [&](double b) {
        EndSeries t = s;
        t.b = b;
        const auto j = t.at(z_match);
        const auto g = curve_geometry(spec.n, CurveJet{z_match, j.f, 1.0, j.f1, 0.0, j.f2}, cone.orientation);
        return shrinker_residual_at(spec, g);
    };
    const double L = 1e3 * (1.0 + std::abs(s.a));
    boost::uintmax_t iters = 200;
    const auto root =
        boost::math::tools::toms748_solve(residual, -L, L, boost::math::tools::eps_tolerance<double>(50), iters);
    s.b = 0.5 * (root.first + root.second);
    return s;
}

struct ConicalEnd {
    ProfileCurve profile;  // z in [z_stop, z_join]
    EndSeries series;
    double z_join = 0.0;
};

// The end asymptotic to the cone, integrated inward from series data where that direction is stable.
inline ConicalEnd conical_end(const CurvatureSpec& spec, const ConeSpec& cone, double z_stop, double z_join = 200.0,
                              double tol = 1e-11, double dz = 0.01) {
    if (!(z_stop > 0.0) || !(z_join > z_stop)) throw std::invalid_argument("conical_end: need 0 < z_stop < z_join");
    ConicalEnd e;
    e.z_join = z_join;
    e.series = end_series(spec, cone, z_join);
    const auto j = e.series.at(z_join);
    IntegrateOptions opt;
    opt.orientation = cone.orientation;
    opt.dz = dz;
    // Land exactly on z_stop by adjusting the output spacing.
    const double steps = std::max(1.0, std::round((z_join - z_stop) / dz));
    opt.dz = (z_join - z_stop) / steps;
    e.profile = integrate_profile(spec, ShootState{z_join, j.f, j.f1}, z_stop, tol, opt);
    return e;
}

// Quintic Hermite interpolation of a uniformly sampled profile, continued by the series beyond it.
class ProfileInterpolant {
public:
    explicit ProfileInterpolant(ProfileCurve p, std::optional<EndSeries> tail = std::nullopt)
        : p_(std::move(p)), tail_(tail) {
        p_.validate();
        h_ = p_.spacing();
    }
    double z_min() const { return p_.z.front(); }
    double z_max() const { return tail_ ? std::numeric_limits<double>::infinity() : p_.z.back(); }
    const ProfileCurve& profile() const { return p_; }

    num::Jet at(double z) const {
        if (z > p_.z.back()) {
            if (tail_) return tail_->at(z);
            throw std::out_of_range("profile interpolant: z above range");
        }
        if (z < p_.z.front()) throw std::out_of_range("profile interpolant: z below range");
        std::size_t i = static_cast<std::size_t>((z - p_.z.front()) / h_);
        i = std::min(i, p_.size() - 2);
        return num::hermite5(p_.z[i], {p_.r[i], p_.r1[i], p_.r2[i]}, p_.z[i + 1],
                             {p_.r[i + 1], p_.r1[i + 1], p_.r2[i + 1]}, z);
    }

private:
    ProfileCurve p_;
    std::optional<EndSeries> tail_;
    double h_ = 0.0;
};

struct ShootOptions {
    double z_far = 40.0;
    double tol = 1e-10;
    double slope_tol = 1e-4;
    double eq_tol = 1e-8;
    double exponent_max = -0.8;
    double divergence = 1e-6;  // twin separation that ends the trusted range
    double twin_delta = 1e-13;
    double dz = 0.01;
    double min_horizon_ratio = 3.0;  // trusted range must reach this multiple of z0
};

struct ShootResult {
    ShootState initial;
    ProfileCurve profile;
    double horizon = 0.0;
    double asymptotic_slope = std::numeric_limits<double>::quiet_NaN();
    double slope_residual = std::numeric_limits<double>::infinity();
    double tail_exponent = std::numeric_limits<double>::quiet_NaN();
    double max_equation_residual = std::numeric_limits<double>::infinity();
    bool blew_up = false;
    bool matched = false;
};

namespace detail {

struct TailFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double exponent = std::numeric_limits<double>::quiet_NaN();
};

inline TailFit fit_tail(const ProfileCurve& p, double z_hi, double sigma) {
    TailFit t;
    std::vector<double> z, r, lz, lr;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p.z[i] > z_hi) break;
        if (p.z[i] < z_hi / 2.0) continue;
        z.push_back(p.z[i]);
        r.push_back(p.r[i]);
        const double d = std::abs(p.r[i] - sigma * p.z[i]);
        if (d > 0.0) {
            lz.push_back(std::log(p.z[i]));
            lr.push_back(std::log(d));
        }
    }
    if (z.size() < 8 || lz.size() < 8) return t;
    // r ~ s z + c1/z + c3/z^3 + c5/z^5
    const Vec c = num::fit_basis(z, r, 4, [](int k, double x) { return k == 0 ? x : std::pow(x, -(2 * k - 1)); });
    t.slope = c[0];
    t.exponent = num::fit_line(lz, lr).slope;
    return t;
}

}  // namespace detail

// Shoot a pair of nearby trajectories; the trusted range ends where they separate.
inline ShootResult shoot_pair(const CurvatureSpec& spec, const ConeSpec& cone, const ShootState& init, double r1_twin,
                              const ShootOptions& opt) {
    IntegrateOptions io;
    io.orientation = cone.orientation;
    io.dz = opt.dz;
    ShootResult res;
    res.initial = init;
    const ProfileCurve a = integrate_profile(spec, init, opt.z_far, opt.tol, io);
    const ProfileCurve b = integrate_profile(spec, ShootState{init.z, init.r, r1_twin}, opt.z_far, opt.tol, io);
    std::size_t m = std::min(a.size(), b.size());
    std::size_t k = 0;
    while (k < m && std::abs(a.r[k] - b.r[k]) <= opt.divergence) ++k;
    res.blew_up = a.blew_up || b.blew_up;
    // The twins straddle the separatrix, so their mean is the better estimate of it.
    res.profile = a;
    for (std::size_t i = 0; i < k; ++i) {
        res.profile.r[i] = 0.5 * (a.r[i] + b.r[i]);
        res.profile.r1[i] = 0.5 * (a.r1[i] + b.r1[i]);
        res.profile.r2[i] = shrinker_ode_rhs(spec, {a.z[i], res.profile.r[i], res.profile.r1[i]}, cone.orientation);
    }
    res.profile.z.resize(k);
    res.profile.r.resize(k);
    res.profile.r1.resize(k);
    res.profile.r2.resize(k);
    res.profile.blew_up = k < a.size() || a.blew_up;
    if (k < 2) return res;
    res.horizon = res.profile.z.back();
    res.max_equation_residual = max_equation_residual(spec, res.profile);
    if (res.horizon < opt.min_horizon_ratio * init.z) return res;
    const auto fit = detail::fit_tail(res.profile, res.horizon, cone.sigma);
    res.asymptotic_slope = fit.slope;
    res.tail_exponent = fit.exponent;
    if (std::isfinite(fit.slope)) res.slope_residual = std::abs(fit.slope - cone.sigma);
    res.matched = res.slope_residual <= opt.slope_tol && res.tail_exponent <= opt.exponent_max &&
                  res.max_equation_residual <= opt.eq_tol;
    return res;
}

inline std::vector<ShootResult> shoot_to_cone(const CurvatureSpec& spec, const ConeSpec& cone,
                                              const std::vector<ShootState>& grid, const ShootOptions& opt = {}) {
    if (opt.z_far < 20.0) throw std::invalid_argument("shoot_to_cone: z_far must be >= 20");
    std::vector<ShootResult> out;
    out.reserve(grid.size());
    for (const auto& s : grid) out.push_back(shoot_pair(spec, cone, s, s.r1 + opt.twin_delta * std::max(1.0, std::abs(s.r1)), opt));
    return out;
}

struct ScanOptions {
    double z0 = 1.0;
    double r_lo = 1.0, r_hi = 2.5;
    int r_rows = 201;
    double r1_lo = -1.0, r1_hi = 3.0;
    int r1_cols = 41;
    double refine_tol = 1e-9;  // width of the final bracket in r
    double branch_jump = 0.25;  // largest r1 change between rows on one separatrix branch
    double cluster_tol = 0.05;
    std::vector<double> slope_tols{1e-3, 1e-4, 1e-5};
    ShootOptions shoot{};
};

struct Cluster {
    ShootState representative;
    double asymptotic_slope = 0.0;
    double slope_residual = 0.0;
    std::size_t members = 0;
};

struct ScanReport {
    std::size_t initial_conditions = 0;  // coarse grid size
    std::size_t trajectories = 0;        // every march, including bisection
    std::size_t separatrices = 0;
    std::vector<ShootResult> separatrix_results;
    std::vector<Cluster> clusters;  // at opt.shoot.slope_tol
    std::vector<std::pair<double, std::size_t>> count_by_tol;
    HypothesisReport hypothesis;
};

namespace detail {

struct Separatrix {
    double r, lo, hi;
};

inline std::vector<Cluster> cluster_matches(const std::vector<ShootResult>& res, double slope_tol, const ScanOptions& o) {
    std::vector<const ShootResult*> m;
    for (const auto& r : res)
        if (r.slope_residual <= slope_tol && r.tail_exponent <= o.shoot.exponent_max &&
            r.max_equation_residual <= o.shoot.eq_tol)
            m.push_back(&r);
    // Single linkage by union-find.
    std::vector<std::size_t> parent(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) parent[i] = i;
    auto find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = i + 1; j < m.size(); ++j)
            if (std::hypot(m[i]->initial.r - m[j]->initial.r, m[i]->initial.r1 - m[j]->initial.r1) <= o.cluster_tol)
                parent[find(i)] = find(j);
    std::vector<Cluster> out;
    std::vector<long> slot(m.size(), -1);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const std::size_t root = find(i);
        if (slot[root] < 0) {
            slot[root] = static_cast<long>(out.size());
            out.push_back({m[i]->initial, m[i]->asymptotic_slope, m[i]->slope_residual, 0});
        }
        Cluster& c = out[static_cast<std::size_t>(slot[root])];
        ++c.members;
        if (m[i]->slope_residual < c.slope_residual) {
            c.representative = m[i]->initial;
            c.asymptotic_slope = m[i]->asymptotic_slope;
            c.slope_residual = m[i]->slope_residual;
        }
    }
    return out;
}

}  // namespace detail

// r1 on the boundary between the two blow-up fates at (z0, r), bisected from a bracket with distinct fates.
struct SeparatrixBracket {
    double lo = 0.0, hi = 0.0;
    int fate_lo = 0;
};

inline std::optional<SeparatrixBracket> find_separatrix(const CurvatureSpec& spec, const ConeSpec& cone, double z0,
                                                        double r, double r1_lo, double r1_hi, const ShootOptions& o,
                                                        std::size_t* marches = nullptr) {
    auto fate = [&](double r1) {
        if (marches) ++*marches;
        return trajectory_fate(spec, ShootState{z0, r, r1}, o.z_far, o.tol, cone.orientation);
    };
    SeparatrixBracket b{r1_lo, r1_hi, fate(r1_lo)};
    const int fh = fate(r1_hi);
    if (b.fate_lo == 0 || fh == 0 || b.fate_lo == fh) return std::nullopt;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (b.lo + b.hi);
        if (mid <= b.lo || mid >= b.hi || b.hi - b.lo <= 1e-15 * (1.0 + std::abs(b.lo))) break;
        if (fate(mid) == b.fate_lo)
            b.lo = mid;
        else
            b.hi = mid;
    }
    return b;
}

// Count distinct initial data at z0 whose outward trajectories are asymptotic to the cone.
inline ScanReport uniqueness_scan(const CurvatureSpec& spec, const ConeSpec& cone, const ScanOptions& o = {}) {
    ScanReport rep;
    rep.hypothesis = check_uniqueness_hypothesis(spec, cone);
    const auto& so = o.shoot;
    const double z0 = o.z0;
    auto fate = [&](double r, double r1) {
        ++rep.trajectories;
        return trajectory_fate(spec, ShootState{z0, r, r1}, so.z_far, so.tol, cone.orientation);
    };
    auto bisect_r1 = [&](double r, double lo, double hi) -> std::optional<detail::Separatrix> {
        const auto b = find_separatrix(spec, cone, z0, r, lo, hi, so, &rep.trajectories);
        if (!b) return std::nullopt;
        return detail::Separatrix{r, b->lo, b->hi};
    };
    auto shoot = [&](const detail::Separatrix& s) {
        rep.trajectories += 2;
        return shoot_pair(spec, cone, ShootState{z0, s.r, s.lo}, s.hi, so);
    };
    // Separatrix near r1_guess at height r, searched in a widening window.
    auto find_near = [&](double r, double r1_guess, double width) -> std::optional<detail::Separatrix> {
        for (int k = 0; k < 6; ++k, width *= 2.0) {
            const double lo = r1_guess - width, hi = r1_guess + width;
            if (auto s = bisect_r1(r, lo, hi)) return s;
        }
        return std::nullopt;
    };

    const auto rs = num::linspace(o.r_lo, o.r_hi, static_cast<std::size_t>(o.r_rows));
    const auto r1s = num::linspace(o.r1_lo, o.r1_hi, static_cast<std::size_t>(o.r1_cols));
    rep.initial_conditions = rs.size() * r1s.size();
    std::vector<std::vector<std::size_t>> rows(rs.size());
    for (std::size_t i = 0; i < rs.size(); ++i) {
        std::vector<int> f(r1s.size());
        for (std::size_t j = 0; j < r1s.size(); ++j) f[j] = fate(rs[i], r1s[j]);
        for (std::size_t j = 0; j + 1 < r1s.size(); ++j) {
            if (f[j] == 0 || f[j + 1] == 0 || f[j] == f[j + 1]) continue;
            const auto s = bisect_r1(rs[i], r1s[j], r1s[j + 1]);
            if (!s) continue;
            rows[i].push_back(rep.separatrix_results.size());
            rep.separatrix_results.push_back(shoot(*s));
        }
    }

    // Bisect in r wherever the fitted slope crosses the target between neighbouring rows on one branch.
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        for (std::size_t ia : rows[i]) {
            const ShootResult a = rep.separatrix_results[ia];
            if (!std::isfinite(a.asymptotic_slope)) continue;
            std::optional<ShootResult> b;
            for (std::size_t ib : rows[i + 1]) {
                const auto& c = rep.separatrix_results[ib];
                if (std::abs(c.initial.r1 - a.initial.r1) <= o.branch_jump && std::isfinite(c.asymptotic_slope) &&
                    (!b || std::abs(c.initial.r1 - a.initial.r1) < std::abs(b->initial.r1 - a.initial.r1)))
                    b = c;
            }
            if (!b) continue;
            ShootResult lo = a, hi = *b;
            if ((lo.asymptotic_slope - cone.sigma) * (hi.asymptotic_slope - cone.sigma) > 0.0) continue;
            while (std::abs(hi.initial.r - lo.initial.r) > o.refine_tol) {
                const double rm = 0.5 * (lo.initial.r + hi.initial.r);
                const double guess = 0.5 * (lo.initial.r1 + hi.initial.r1);
                const auto s = find_near(rm, guess, std::abs(hi.initial.r1 - lo.initial.r1) + 1e-6);
                if (!s) break;
                ShootResult mid = shoot(*s);
                rep.separatrix_results.push_back(mid);
                if (!std::isfinite(mid.asymptotic_slope)) break;
                if ((mid.asymptotic_slope - cone.sigma) * (lo.asymptotic_slope - cone.sigma) > 0.0)
                    lo = mid;
                else
                    hi = mid;
            }
        }
    }
    rep.separatrices = rep.separatrix_results.size();
    rep.clusters = detail::cluster_matches(rep.separatrix_results, so.slope_tol, o);
    for (double t : o.slope_tols)
        rep.count_by_tol.emplace_back(t, detail::cluster_matches(rep.separatrix_results, t, o).size());
    return rep;
}

}  // namespace fshrink
