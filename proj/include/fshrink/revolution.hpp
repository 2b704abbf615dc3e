#pragma once

#include "curvature.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace fshrink {

// Planar generating curve p -> (Z, R) of a hypersurface of revolution, R = distance to the axis.
struct CurveJet {
    double Z, R, Zp, Rp, Zpp, Rpp;
};

struct PointGeometry {
    double kappa_prof = 0.0;
    double kappa_rot = 0.0;  // multiplicity n-1
    double support = 0.0;    // X.N
    double speed_factor = 0.0;  // |dc/dp|
    double H = 0.0;
    double position_norm = 0.0;
    double tangential = 0.0;  // X.T along the profile direction
    double normal_Z = 0.0;
    double normal_R = 0.0;
};

// Orientation +1 takes N = (T_R, -T_Z) in (Z, R) components, i.e. toward the axis for an increasing profile.
inline PointGeometry curve_geometry(int n, const CurveJet& c, int orientation = 1) {
    const double v = std::hypot(c.Zp, c.Rp);
    const double TZ = c.Zp / v, TR = c.Rp / v;
    PointGeometry g;
    g.normal_Z = orientation * TR;
    g.normal_R = -orientation * TZ;
    g.speed_factor = v;
    g.kappa_rot = -g.normal_R / c.R;
    g.kappa_prof = (g.normal_Z * c.Zpp + g.normal_R * c.Rpp) / (v * v);
    g.support = c.Z * g.normal_Z + c.R * g.normal_R;
    g.tangential = c.Z * TZ + c.R * TR;
    g.position_norm = std::hypot(c.Z, c.R);
    g.H = g.kappa_prof + (n - 1) * g.kappa_rot;
    return g;
}

// Curvature vector in the cone's ordering: rotational entries first, profile direction last.
inline Vec curvature_vector(int n, double kappa_prof, double kappa_rot) {
    Vec l = Vec::Constant(n, kappa_rot);
    l[n - 1] = kappa_prof;
    return l;
}
inline Vec curvature_vector(int n, const PointGeometry& g) { return curvature_vector(n, g.kappa_prof, g.kappa_rot); }

enum class DerivativeSource { analytic, finite_difference };

inline const char* to_string(DerivativeSource s) {
    return s == DerivativeSource::analytic ? "analytic" : "finite_difference";
}

// Sampled profile r(z) of a rotationally symmetric hypersurface.
struct ProfileCurve {
    int n = 2;
    std::vector<double> z, r, r1, r2;
    int orientation = 1;
    DerivativeSource source = DerivativeSource::analytic;
    bool blew_up = false;

    std::size_t size() const { return z.size(); }
    CurveJet jet(std::size_t i) const { return {z[i], r[i], 1.0, r1[i], 0.0, r2[i]}; }

    void validate() const {
        if (n < 2) throw std::invalid_argument("profile: n must be >= 2");
        if (r.size() != z.size() || r1.size() != z.size() || r2.size() != z.size())
            throw std::invalid_argument("profile: sample arrays differ in length");
        for (std::size_t i = 0; i < z.size(); ++i) {
            if (!(r[i] > 0.0)) throw std::invalid_argument("profile: r <= 0 at sample " + std::to_string(i));
            if (i > 0 && !(z[i] > z[i - 1]))
                throw std::invalid_argument("profile: z not increasing at sample " + std::to_string(i));
        }
    }
    double spacing() const {
        if (z.size() < 2) throw std::invalid_argument("profile: need >= 2 samples");
        const double h = (z.back() - z.front()) / static_cast<double>(z.size() - 1);
        for (std::size_t i = 1; i < z.size(); ++i)
            if (std::abs(z[i] - z[i - 1] - h) > 1e-9 * h) throw std::invalid_argument("profile: grid not uniform");
        return h;
    }
};

// Profile from sampled r on a uniform grid; derivatives by fourth-order differences.
inline ProfileCurve make_profile(int n, std::vector<double> z, std::vector<double> r, int orientation = 1) {
    ProfileCurve p;
    p.n = n;
    p.z = std::move(z);
    p.r = std::move(r);
    p.orientation = orientation;
    p.source = DerivativeSource::finite_difference;
    p.r1.assign(p.z.size(), 0.0);
    p.r2.assign(p.z.size(), 0.0);
    p.validate();
    const double h = p.spacing();
    p.r1 = num::d1(p.r, h);
    p.r2 = num::d2(p.r, h);
    return p;
}

// Worst deviation of supplied derivatives from fourth-order differences (uniform grids only).
inline double derivative_consistency(const ProfileCurve& p) {
    const double h = p.spacing();
    const auto d1 = num::d1(p.r, h), d2 = num::d2(p.r, h);
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        worst = std::max({worst, std::abs(d1[i] - p.r1[i]), std::abs(d2[i] - p.r2[i])});
    return worst;
}

inline PointGeometry point_geometry(const ProfileCurve& p, std::size_t i) {
    if (i >= p.size()) throw std::out_of_range("profile sample index");
    return curve_geometry(p.n, p.jet(i), p.orientation);
}

// f(kappa) + X.N / 2 at a single curve point.
inline double shrinker_residual_at(const CurvatureSpec& spec, const PointGeometry& g) {
    return eval_f(spec, curvature_vector(spec.n, g)) + 0.5 * g.support;
}

inline std::vector<double> shrinker_residual(const CurvatureSpec& spec, const ProfileCurve& p) {
    if (spec.n != p.n) throw std::invalid_argument("spec and profile dimensions differ");
    std::vector<double> res(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        try {
            res[i] = shrinker_residual_at(spec, point_geometry(p, i));
        } catch (const DomainError& e) {
            throw DomainError(std::string(e.what()) + " at sample " + std::to_string(i) + " (z=" +
                                  std::to_string(p.z[i]) + ")",
                              e.margin());
        }
    }
    return res;
}

// Offset surface X + hN over a base profile, in the base orthonormal frame (profile, rotation).
struct NormalGraphGeometry {
    std::vector<double> g_prof, g_rot;          // metric components
    std::vector<double> normal_Z, normal_R;     // offset normal
    std::vector<double> kappa_prof, kappa_rot;  // offset shape operator (diagonal)
    std::vector<double> grad;                   // arclength derivative of h
    std::vector<double> hess_prof, hess_rot;    // Hessian of h on the base
};

// Arclength derivative of the base profile curvature, by fourth-order differences in z.
inline std::vector<double> profile_curvature_slope(const ProfileCurve& base) {
    std::vector<double> k(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) k[i] = point_geometry(base, i).kappa_prof;
    return num::d1(k, base.spacing());
}

inline NormalGraphGeometry normal_graph_geometry(const ProfileCurve& base, const std::vector<double>& h,
                                                 const std::vector<double>& h1, const std::vector<double>& h2,
                                                 std::vector<double> dkappa_prof = {}) {
    const std::size_t m = base.size();
    if (h.size() != m || h1.size() != m || h2.size() != m)
        throw std::invalid_argument("normal graph: h samples differ in length from the base");
    if (dkappa_prof.empty()) dkappa_prof = profile_curvature_slope(base);
    NormalGraphGeometry out;
    for (auto* v : {&out.g_prof, &out.g_rot, &out.normal_Z, &out.normal_R, &out.kappa_prof, &out.kappa_rot, &out.grad,
                    &out.hess_prof, &out.hess_rot})
        v->resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const CurveJet c = base.jet(i);
        const PointGeometry g = point_geometry(base, i);
        if (!(1.0 - g.kappa_prof * h[i] > 0.0) || !(1.0 - g.kappa_rot * h[i] > 0.0))
            throw std::domain_error("normal graph degenerate at sample " + std::to_string(i));
        const double v = g.speed_factor;
        const double kp_p = dkappa_prof[i] * v;  // d kappa_prof / dp
        const double NZ = g.normal_Z, NR = g.normal_R;
        const double NZp = -g.kappa_prof * c.Zp, NRp = -g.kappa_prof * c.Rp;
        const double NZpp = -kp_p * c.Zp - g.kappa_prof * c.Zpp, NRpp = -kp_p * c.Rp - g.kappa_prof * c.Rpp;
        CurveJet o;
        o.Z = c.Z + h[i] * NZ;
        o.R = c.R + h[i] * NR;
        o.Zp = c.Zp + h1[i] * NZ + h[i] * NZp;
        o.Rp = c.Rp + h1[i] * NR + h[i] * NRp;
        o.Zpp = c.Zpp + h2[i] * NZ + 2.0 * h1[i] * NZp + h[i] * NZpp;
        o.Rpp = c.Rpp + h2[i] * NR + 2.0 * h1[i] * NRp + h[i] * NRpp;
        const PointGeometry go = curve_geometry(base.n, o, base.orientation);
        out.g_prof[i] = (o.Zp * o.Zp + o.Rp * o.Rp) / (v * v);
        out.g_rot[i] = (o.R / c.R) * (o.R / c.R);
        out.normal_Z[i] = go.normal_Z;
        out.normal_R[i] = go.normal_R;
        out.kappa_prof[i] = go.kappa_prof;
        out.kappa_rot[i] = go.kappa_rot;
        const double vp = (c.Zp * c.Zpp + c.Rp * c.Rpp) / v;
        out.grad[i] = h1[i] / v;
        out.hess_prof[i] = h2[i] / (v * v) - h1[i] * vp / (v * v * v);
        out.hess_rot[i] = out.grad[i] * (c.Rp / v) / c.R;
    }
    return out;
}

inline void write_profile_csv(const ProfileCurve& p, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "# n=" << p.n << " orientation=" << p.orientation << " derivatives=" << to_string(p.source) << "\n";
    os << "z,r,r1,r2\n" << std::setprecision(17);
    for (std::size_t i = 0; i < p.size(); ++i) os << p.z[i] << ',' << p.r[i] << ',' << p.r1[i] << ',' << p.r2[i] << '\n';
}

inline ProfileCurve read_profile_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    ProfileCurve p;
    std::string line;
    if (!std::getline(is, line) || line.rfind("# ", 0) != 0) throw std::runtime_error(path + ": missing header row");
    std::istringstream hs(line.substr(2));
    std::string tok;
    bool have_n = false;
    while (hs >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "n") {
            p.n = std::stoi(val);
            have_n = true;
        } else if (key == "orientation") {
            p.orientation = std::stoi(val);
        } else if (key == "derivatives") {
            p.source = val == "analytic" ? DerivativeSource::analytic : DerivativeSource::finite_difference;
        }
    }
    if (!have_n) throw std::runtime_error(path + ": header lacks n");
    std::getline(is, line);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        double v[4];
        char comma;
        ls >> v[0] >> comma >> v[1] >> comma >> v[2] >> comma >> v[3];
        if (!ls) throw std::runtime_error(path + ": malformed row '" + line + "'");
        p.z.push_back(v[0]);
        p.r.push_back(v[1]);
        p.r1.push_back(v[2]);
        p.r2.push_back(v[3]);
    }
    p.validate();
    return p;
}

}  // namespace fshrink
