#include <fshrink/cone.hpp>
#include <fshrink/revolution.hpp>

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

using namespace fshrink;

namespace {

ProfileCurve analytic_profile(int n, const std::vector<double>& z, auto r, auto r1, auto r2, int orientation = 1) {
    ProfileCurve p;
    p.n = n;
    p.orientation = orientation;
    p.z = z;
    for (double x : z) {
        p.r.push_back(r(x));
        p.r1.push_back(r1(x));
        p.r2.push_back(r2(x));
    }
    p.validate();
    return p;
}

ProfileCurve sphere(int n, double R, const std::vector<double>& z) {
    return analytic_profile(
        n, z, [R](double x) { return std::sqrt(R * R - x * x); },
        [R](double x) { return -x / std::sqrt(R * R - x * x); },
        [R](double x) { return -R * R / std::pow(R * R - x * x, 1.5); });
}

ProfileCurve cylinder(int n, double R, const std::vector<double>& z) {
    return analytic_profile(
        n, z, [R](double) { return R; }, [](double) { return 0.0; }, [](double) { return 0.0; });
}

}  // namespace

TEST(Revolution, ConeMatchesClosedForm) {
    for (double sigma : {0.5, 1.0, 2.0}) {
        ConeSpec cone{3, sigma, 1};
        auto p = analytic_profile(
            3, num::linspace(0.5, 5.0, 10), [sigma](double x) { return sigma * x; },
            [sigma](double) { return sigma; }, [](double) { return 0.0; });
        for (std::size_t i = 0; i < p.size(); ++i) {
            const auto g = point_geometry(p, i);
            const Vec kc = cone_principal_curvatures(cone, p.z[i]);
            EXPECT_NEAR(g.kappa_rot, kc[0], 1e-12 * kc[0]);
            EXPECT_EQ(g.kappa_prof, 0.0);
            EXPECT_NEAR(g.support, 0.0, 1e-14);
            EXPECT_NEAR(g.position_norm, cone.position_norm(p.z[i]), 1e-12);
            EXPECT_NEAR(g.kappa_rot * p.r[i] * g.speed_factor, 1.0, 1e-14);
        }
    }
}

TEST(Revolution, CylinderAndSphere) {
    auto c = cylinder(2, 1.5, {0.0, 1.0, 2.0});
    auto g = point_geometry(c, 1);
    EXPECT_NEAR(g.kappa_rot, 1 / 1.5, 1e-15);
    EXPECT_EQ(g.kappa_prof, 0.0);
    EXPECT_NEAR(g.support, -1.5, 1e-15);
    auto s = sphere(3, 2.0, {-1.0, 0.0, 0.7, 1.9});
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto gs = point_geometry(s, i);
        EXPECT_NEAR(gs.kappa_prof, 0.5, 1e-13);
        EXPECT_NEAR(gs.kappa_rot, 0.5, 1e-13);
        EXPECT_NEAR(gs.support, -2.0, 1e-13);
        EXPECT_NEAR(gs.H, 1.5, 1e-13);
    }
}

TEST(Revolution, OrientationFlipNegatesJointly) {
    auto p = analytic_profile(
        2, {0.3, 1.0, 2.0}, [](double x) { return 1 + x * x; }, [](double x) { return 2 * x; },
        [](double) { return 2.0; });
    auto q = p;
    q.orientation = -1;
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto a = point_geometry(p, i), b = point_geometry(q, i);
        EXPECT_EQ(a.kappa_prof, -b.kappa_prof);
        EXPECT_EQ(a.kappa_rot, -b.kappa_rot);
        EXPECT_EQ(a.support, -b.support);
        const double res_a = shrinker_residual_at(mean_curvature_spec(2), a);
        const double res_b = shrinker_residual_at(mean_curvature_spec(2), b);
        EXPECT_NEAR(res_a, -res_b, 1e-14);
        EXPECT_NEAR(a.support * a.support + a.tangential * a.tangential,
                    a.position_norm * a.position_norm, 1e-12);
    }
}

TEST(Revolution, ShrinkerResidualOracles) {
    for (int n = 2; n <= 4; ++n) {
        auto spec = mean_curvature_spec(n);
        const double Rs = std::sqrt(2.0 * n);
        auto s = sphere(n, Rs, num::linspace(-0.9 * Rs, 0.9 * Rs, 41));
        for (double v : shrinker_residual(spec, s)) EXPECT_LE(std::abs(v), 1e-10);
        auto c = cylinder(n, std::sqrt(2.0 * (n - 1)), num::linspace(0.0, 40.0, 41));
        for (double v : shrinker_residual(spec, c)) EXPECT_LE(std::abs(v), 1e-10);
        // plane z = 0 as a horizontal curve
        for (double rho : {0.1, 1.0, 7.0}) {
            auto g = curve_geometry(n, CurveJet{0.0, rho, 0.0, 1.0, 0.0, 0.0});
            EXPECT_EQ(g.kappa_prof, 0.0);
            EXPECT_EQ(g.kappa_rot, 0.0);
            EXPECT_EQ(g.support, 0.0);
            EXPECT_EQ(shrinker_residual_at(spec, g), 0.0);
        }
    }
}

TEST(Revolution, ResidualReportsDomainIndex) {
    auto c = cylinder(2, 1.0, {0.0, 1.0});
    c.orientation = -1;  // negative curvature leaves the quotient family's domain at n = 2
    try {
        shrinker_residual(eps_family_spec(2, 0.1, +1), c);
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("sample 0"), std::string::npos);
    }
}

TEST(Revolution, FiniteDifferenceDerivatives) {
    auto z = num::linspace(1.0, 2.0, 101);
    std::vector<double> r;
    for (double x : z) r.push_back(std::exp(0.5 * x));
    auto p = make_profile(2, z, r);
    EXPECT_EQ(p.source, DerivativeSource::finite_difference);
    for (std::size_t i = 0; i < z.size(); ++i) {
        EXPECT_NEAR(p.r1[i], 0.5 * r[i], 1e-8);
        EXPECT_NEAR(p.r2[i], 0.25 * r[i], 1e-6);
    }
    auto a = analytic_profile(
        2, z, [](double x) { return std::exp(0.5 * x); }, [](double x) { return 0.5 * std::exp(0.5 * x); },
        [](double x) { return 0.25 * std::exp(0.5 * x); });
    EXPECT_LT(derivative_consistency(a), 1e-6);
    EXPECT_THROW(make_profile(2, {0.0, 1.0, 0.5, 2.0, 3.0, 4.0}, {1, 1, 1, 1, 1, 1}), std::invalid_argument);
    EXPECT_THROW(make_profile(2, {0.0, 1.0, 2.0, 3.0, 4.0, 5.0}, {1, 1, 0, 1, 1, 1}), std::invalid_argument);
}

TEST(Revolution, CsvRoundTrip) {
    auto s = sphere(3, 2.0, num::linspace(-1.0, 1.0, 7));
    s.r[3] = 1.0 / 3.0;
    const auto path = (std::filesystem::temp_directory_path() / "fshrink_profile_rt.csv").string();
    write_profile_csv(s, path);
    auto t = read_profile_csv(path);
    EXPECT_EQ(t.n, 3);
    EXPECT_EQ(t.orientation, 1);
    EXPECT_EQ(t.z, s.z);
    EXPECT_EQ(t.r, s.r);
    EXPECT_EQ(t.r1, s.r1);
    EXPECT_EQ(t.r2, s.r2);
    std::remove(path.c_str());
}

TEST(NormalGraph, ZeroOffsetIsIdentity) {
    auto s = sphere(2, 3.0, num::linspace(-1.0, 1.0, 21));
    std::vector<double> zero(s.size(), 0.0);
    auto g = normal_graph_geometry(s, zero, zero, zero);
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto b = point_geometry(s, i);
        EXPECT_NEAR(g.kappa_prof[i], b.kappa_prof, 1e-14);
        EXPECT_NEAR(g.kappa_rot[i], b.kappa_rot, 1e-14);
        EXPECT_NEAR(g.g_prof[i], 1.0, 1e-14);
        EXPECT_EQ(g.g_rot[i], 1.0);
    }
}

TEST(NormalGraph, ConstantOffsets) {
    const double R = 2.0, h0 = 0.1;
    auto c = cylinder(3, R, num::linspace(0.0, 1.0, 11));
    std::vector<double> h(c.size(), h0), zero(c.size(), 0.0);
    auto g = normal_graph_geometry(c, h, zero, zero);
    auto s = sphere(3, R, num::linspace(-1.0, 1.0, 11));
    auto gs = normal_graph_geometry(s, h, zero, zero);
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_NEAR(g.kappa_rot[i], 1.0 / (R - h0), 1e-14);
        EXPECT_NEAR(g.kappa_prof[i], 0.0, 1e-14);
        EXPECT_NEAR(g.g_rot[i], std::pow((R - h0) / R, 2), 1e-14);
        EXPECT_NEAR(gs.kappa_rot[i], 1.0 / (R - h0), 1e-9);
        EXPECT_NEAR(gs.kappa_prof[i], 1.0 / (R - h0), 1e-9);
        EXPECT_NEAR(gs.g_prof[i], std::pow(1 - h0 / R, 2), 1e-12);
    }
}

TEST(NormalGraph, VaryingOffsetOverCylinderIsAProfile) {
    const double R = 1.5;
    auto z = num::linspace(0.0, 3.0, 31);
    auto c = cylinder(2, R, z);
    std::vector<double> h, h1, h2;
    for (double x : z) {
        h.push_back(0.2 * std::sin(x));
        h1.push_back(0.2 * std::cos(x));
        h2.push_back(-0.2 * std::sin(x));
    }
    auto g = normal_graph_geometry(c, h, h1, h2);
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double W = std::sqrt(1 + h1[i] * h1[i]);
        EXPECT_NEAR(g.kappa_rot[i], 1.0 / ((R - h[i]) * W), 1e-14);
        EXPECT_NEAR(g.kappa_prof[i], h2[i] / (W * W * W), 1e-14);
        EXPECT_NEAR(g.g_prof[i], 1 + h1[i] * h1[i], 1e-14);
        EXPECT_NEAR(g.hess_prof[i], h2[i], 1e-14);
        EXPECT_EQ(g.hess_rot[i], 0.0);
    }
    std::vector<double> big(z.size(), 2.0);
    EXPECT_THROW(normal_graph_geometry(c, big, h1, h2), std::domain_error);
}

TEST(NormalGraph, FirstOrderExpansion) {
    // A~ - A - Hess h -> A^2 h linearly in the offset amplitude.
    auto z = num::linspace(2.0, 6.0, 401);
    auto base = analytic_profile(
        2, z, [](double x) { return x + 1.0 / x; }, [](double x) { return 1.0 - 1.0 / (x * x); },
        [](double x) { return 2.0 / (x * x * x); });
    std::vector<double> err;
    for (double delta : {1e-2, 5e-3, 2.5e-3}) {
        std::vector<double> h, h1, h2;
        for (double x : z) {
            h.push_back(delta * std::sin(x) / x);
            h1.push_back(delta * (std::cos(x) / x - std::sin(x) / (x * x)));
            h2.push_back(delta * (-std::sin(x) / x - 2 * std::cos(x) / (x * x) + 2 * std::sin(x) / (x * x * x)));
        }
        auto g = normal_graph_geometry(base, h, h1, h2);
        double e = 0.0;
        for (std::size_t i = 5; i + 5 < z.size(); ++i) {
            auto b = point_geometry(base, i);
            const double rp = g.kappa_prof[i] - b.kappa_prof - g.hess_prof[i] - b.kappa_prof * b.kappa_prof * h[i];
            const double rr = g.kappa_rot[i] - b.kappa_rot - g.hess_rot[i] - b.kappa_rot * b.kappa_rot * h[i];
            e = std::max({e, std::abs(rp), std::abs(rr)});
        }
        err.push_back(e / (delta * delta));
    }
    // Remainder is quadratic in the amplitude.
    EXPECT_NEAR(err[1], err[0], 0.05 * err[0]);
    EXPECT_NEAR(err[2], err[1], 0.05 * err[1]);
}
