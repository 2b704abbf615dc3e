#include <fshrink/cone.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace fshrink;

TEST(Cone, PrincipalCurvatures) {
    ConeSpec c{3, 1.0, 1};
    Vec k = cone_principal_curvatures(c, 1.0);
    EXPECT_NEAR(k[0], 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(k[1], 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_EQ(k[2], 0.0);
    ConeSpec d{2, 0.37, 1};
    EXPECT_NEAR(cone_principal_curvatures(d, 2.4)[0], 0.5 * cone_principal_curvatures(d, 1.2)[0], 1e-15);
    EXPECT_NEAR(cone_principal_curvatures(ConeSpec{2, 0.37, -1}, 1.2)[0], -cone_principal_curvatures(d, 1.2)[0],
                1e-15);
    EXPECT_THROW(cone_principal_curvatures(c, 0.0), std::invalid_argument);
    EXPECT_THROW(cone_principal_curvatures(ConeSpec{2, -1.0, 1}, 1.0), std::invalid_argument);
}

TEST(Cone, NablaA) {
    ConeSpec c{3, 1.0, 1};
    Tensor3 t = cone_nabla_A(c, 1.0);
    EXPECT_NEAR(t(0, 0, 2), -0.5, 1e-15);
    EXPECT_NEAR(t(1, 1, 2), -0.5, 1e-15);
    EXPECT_EQ(t(2, 2, 2), 0.0);
    EXPECT_EQ(t(0, 1, 2), 0.0);
    EXPECT_EQ(t(0, 0, 0), 0.0);
    EXPECT_EQ(t(0, 2, 2), 0.0);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) {
                EXPECT_EQ(t(i, j, k), t(j, i, k));
                EXPECT_EQ(t(i, j, k), t(k, j, i));
                EXPECT_EQ(t(i, j, k), t(i, k, j));
            }
    EXPECT_THROW(cone_nabla_A(c, -1.0), std::invalid_argument);
}

TEST(Cone, NablaAMatchesRadialDerivativeOfCurvature) {
    // Along the generator, d/d|X| of the rotational curvature is the (i,i,n) entry.
    ConeSpec c{2, 0.6, 1};
    const double s = 1.7, h = 1e-5;
    const double ds = h / std::sqrt(1 + c.sigma * c.sigma);
    const double fd =
        (cone_principal_curvatures(c, s + ds)[0] - cone_principal_curvatures(c, s - ds)[0]) / (2 * h);
    EXPECT_NEAR(cone_nabla_A(c, s)(0, 0, 1), fd, 1e-8);
}

TEST(Cone, EllipticityLambda) {
    ConeSpec c{3, 1.0, 1};
    EXPECT_EQ(ellipticity_lambda(mean_curvature_spec(3), c), 1.0);
    for (double eps : {1e-3, 1e-2, 0.1}) {
        EXPECT_NEAR(ellipticity_lambda(eps_family_spec(3, eps, +1), c), 1.0 / (1.0 + eps), 1e-12);
        EXPECT_NEAR(ellipticity_lambda(eps_family_spec(3, eps, -1), c), 1.0 - eps, 1e-12);
    }
    ConeSampling narrow{1.0, 1.5, 8};
    EXPECT_NEAR(ellipticity_lambda(eps_family_spec(3, 0.1, +1), c, narrow),
                ellipticity_lambda(eps_family_spec(3, 0.1, +1), c), 1e-13);
}

TEST(Cone, KappaConstant) {
    for (int n = 2; n <= 4; ++n) {
        ConeSpec c{n, 0.8, 1};
        EXPECT_EQ(kappa_constant(mean_curvature_spec(n), c), 0.0);
        for (double s : {0.4, 1.0, 2.9}) EXPECT_EQ(kappa_integrand(mean_curvature_spec(n), c, s), 0.0);
    }
    ConeSpec c{3, 1.0, 1};
    auto spec = eps_family_spec(3, 0.05, +1);
    const double k0 = kappa_integrand(spec, c, 1.0 / 3.0);
    for (double s : {0.5, 1.0, 2.0, 3.0}) EXPECT_NEAR(kappa_integrand(spec, c, s), k0, 1e-12 * k0);
    // Degree-zero: independent of the slope too.
    EXPECT_NEAR(kappa_constant(spec, ConeSpec{3, 2.5, 1}), kappa_constant(spec, c), 1e-12 * k0);
}

TEST(Cone, KappaIsLinearInEpsilon) {
    ConeSpec c{3, 1.0, 1};
    for (int sign : {+1, -1}) {
        std::vector<double> le, lk;
        for (double eps : num::geomspace(1e-4, 1e-2, 9)) {
            le.push_back(std::log(eps));
            lk.push_back(std::log(kappa_constant(eps_family_spec(3, eps, sign), c)));
        }
        const auto fit = num::fit_line(le, lk);
        EXPECT_NEAR(fit.slope, 1.0, 0.1);
        double prev = 0;
        for (double eps : {1e-2, 1e-3, 1e-4}) {
            const double ratio = kappa_constant(eps_family_spec(3, eps, sign), c) / eps;
            EXPECT_LT(ratio, 10.0);
            if (prev > 0) EXPECT_NEAR(ratio, prev, 0.05 * prev);
            prev = ratio;
        }
    }
}

TEST(Cone, BoundDominatesKappa) {
    EXPECT_EQ(kappa_bound_rotsym(mean_curvature_spec(3)), 0.0);
    for (int n = 2; n <= 4; ++n)
        for (double eps : {1e-3, 1e-2, 0.1, 0.5})
            for (int sign : {+1, -1}) {
                auto spec = eps_family_spec(n, eps, sign);
                const double k = kappa_constant(spec, ConeSpec{n, 1.0, 1});
                EXPECT_GE(kappa_bound_rotsym(spec), k / kappa_bound_constant(n));
            }
    const double b1 = kappa_bound_rotsym(eps_family_spec(3, 1e-3, +1));
    const double b2 = kappa_bound_rotsym(eps_family_spec(3, 2e-3, +1));
    EXPECT_NEAR(b2, 2 * b1, 1e-9 * b1);
}

TEST(Cone, HypothesisReport) {
    ConeSpec c{3, 1.0, 1};
    auto r = check_uniqueness_hypothesis(mean_curvature_spec(3), c);
    EXPECT_TRUE(r.satisfied);
    EXPECT_EQ(r.kappa, 0.0);
    EXPECT_EQ(r.lambda, 1.0);
    EXPECT_NEAR(r.bound, 7.716049382716049e-4, 1e-18);
    auto bad = check_uniqueness_hypothesis(eps_family_spec(3, 0.1, +1), c);
    EXPECT_FALSE(bad.satisfied);
    EXPECT_FALSE(bad.reason.empty());
    // n = 2 with inward-flipped orientation leaves the admissible set for the quotient family.
    auto dom = check_uniqueness_hypothesis(eps_family_spec(2, 0.1, +1), ConeSpec{2, 1.0, -1});
    EXPECT_FALSE(dom.satisfied);
    EXPECT_NE(dom.reason.find("admissible"), std::string::npos);
}

TEST(Cone, MaxAdmissibleEpsilon) {
    ConeSpec c{3, 1.0, 1};
    for (int sign : {+1, -1}) {
        auto family = [sign](double e) { return eps_family_spec(3, e, sign); };
        auto res = max_admissible_epsilon(family, c, 1e-6);
        EXPECT_GT(res.eps_star, 0.0);
        EXPECT_LE(res.upper - res.lower, 1e-6);
        EXPECT_TRUE(check_uniqueness_hypothesis(family(res.lower), c).satisfied);
        EXPECT_FALSE(check_uniqueness_hypothesis(family(res.upper), c).satisfied);
        // monotone on a grid
        bool seen_fail = false;
        for (double e : num::linspace(0.0, 4 * res.eps_star, 41)) {
            const bool ok = check_uniqueness_hypothesis(family(e), c).satisfied;
            if (seen_fail) EXPECT_FALSE(ok) << e;
            seen_fail = seen_fail || !ok;
        }
    }
    auto always_bad = [](double e) { return eps_family_spec(3, 0.2 + e, +1); };
    EXPECT_THROW(max_admissible_epsilon(always_bad, c), std::runtime_error);
}
