#include <fshrink/curvature.hpp>

#include <gtest/gtest.h>

#include <vector>

using namespace fshrink;

namespace {

Mat random_orthogonal(num::Rng& rng, int n) {
    Mat G(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) G(i, j) = rng.normal();
    Eigen::HouseholderQR<Mat> qr(G);
    return qr.householderQ();
}

Mat random_symmetric(num::Rng& rng, int n) {
    Mat G(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) G(i, j) = rng.normal();
    return 0.5 * (G + G.transpose());
}

// Positive-cone draws keep every built-in family monotone for eps < 1.
Vec positive_curvatures(num::Rng& rng, int n) {
    Vec l(n);
    for (int i = 0; i < n; ++i) l[i] = rng.uniform(0.05, 2.0);
    return l;
}

std::vector<CurvatureSpec> builtins(int n) {
    return {mean_curvature_spec(n), eps_family_spec(n, 0.1, +1), eps_family_spec(n, 0.1, -1),
            eps_family_spec(n, 0.5, +1)};
}

}  // namespace

TEST(Elementary, SmallExamples) {
    Vec ones = Vec::Ones(3);
    Vec l(3);
    l << 1, 2, 3;
    EXPECT_DOUBLE_EQ(elementary_symmetric(1, ones), 3.0);
    EXPECT_DOUBLE_EQ(elementary_symmetric(3, l), 6.0);
    EXPECT_DOUBLE_EQ(elementary_symmetric(2, l), 11.0);
    EXPECT_THROW(elementary_symmetric(0, l), std::invalid_argument);
    EXPECT_THROW(elementary_symmetric(4, l), std::invalid_argument);
}

TEST(EvalF, Examples) {
    for (int n = 2; n <= 4; ++n) EXPECT_DOUBLE_EQ(eval_f(mean_curvature_spec(n), Vec::Ones(n)), n);
    const double c = 0.7;
    for (int n = 2; n <= 4; ++n) {
        Vec l = Vec::Constant(n, c);
        l[n - 1] = 0.0;
        EXPECT_NEAR(eval_f(eps_family_spec(n, 0.3, +1), l), (n - 1) * c, 1e-15);
    }
    Vec l(3);
    l << 1, 2, 3;
    // 6 + 0.1 * 6 / 11 expanded independently.
    EXPECT_NEAR(eval_f(eps_family_spec(3, 0.1, +1), l), 6.0545454545454545, 1e-15);
}

TEST(EvalF, DomainErrorCarriesMargin) {
    auto spec = eps_family_spec(3, 0.1, +1);
    Vec l(3);
    l << 1, -1, 0;  // E2 = -1
    try {
        eval_f(spec, l);
        FAIL() << "expected a domain error";
    } catch (const DomainError& e) {
        EXPECT_NEAR(e.margin(), -1.0 - 1e-9, 1e-15);
    }
}

TEST(GradF, Examples) {
    Vec l(3);
    l << 0.3, -2.0, 5.0;
    EXPECT_TRUE(grad_f(mean_curvature_spec(3), l).isApprox(Vec::Ones(3)));
    const double eps = 0.2, c = 1.3;
    for (int n = 2; n <= 4; ++n) {
        Vec v = Vec::Constant(n, c);
        v[n - 1] = 0.0;
        Vec expect = Vec::Ones(n);
        expect[n - 1] = 1.0 + eps;
        EXPECT_LT((grad_f(eps_family_spec(n, eps, +1), v) - expect).norm(), 1e-14);
    }
    Vec a(2);
    a << 1, 2;
    EXPECT_TRUE(grad_f(mean_curvature_spec(2), 3.0 * a).isApprox(grad_f(mean_curvature_spec(2), a)));
}

TEST(HessF, ExamplesAndHomogeneity) {
    Vec l(3);
    l << 1, 2, 3;
    EXPECT_EQ(hess_f(mean_curvature_spec(3), l).norm(), 0.0);
    auto spec = eps_family_spec(3, 0.25, +1);
    Vec v(3);
    v << 1, 1, 0;
    const Mat H = hess_f(spec, v);
    const double h = 1e-5 * v.norm();
    for (int k = 0; k < 3; ++k) {
        Vec e = Vec::Zero(3);
        e[k] = h;
        const Vec fd = (grad_f(spec, v + e) - grad_f(spec, v - e)) / (2 * h);
        EXPECT_LT((fd - H.col(k)).norm(), 1e-5);
    }
    EXPECT_TRUE(hess_f(spec, 2.0 * l).isApprox(0.5 * hess_f(spec, l), 1e-13));
}

TEST(CurvatureKernel, RandomPropertySweep) {
    num::Rng rng(20240601);
    for (int n = 2; n <= 4; ++n) {
        for (const auto& spec : builtins(n)) {
            for (int trial = 0; trial < 1000; ++trial) {
                const Vec l = positive_curvatures(rng, n);
                const double f = eval_f(spec, l);
                const Vec g = grad_f(spec, l);
                const Mat H = hess_f(spec, l);
                // permutation symmetry
                Vec p = l.reverse();
                EXPECT_NEAR(eval_f(spec, p), f, 1e-12 * std::abs(f));
                // homogeneity
                const double rho = rng.uniform(0.2, 5.0);
                EXPECT_NEAR(eval_f(spec, rho * l), rho * f, 1e-12 * std::abs(rho * f));
                // Euler identity and monotonicity
                EXPECT_NEAR(l.dot(g), f, 1e-8 * std::abs(f));
                EXPECT_GT(g.minCoeff(), 0.0);
                // gradient and Hessian against central differences
                const double h = 1e-5 * l.norm();
                for (int k = 0; k < n; ++k) {
                    Vec e = Vec::Zero(n);
                    e[k] = h;
                    const double fd = (eval_f(spec, l + e) - eval_f(spec, l - e)) / (2 * h);
                    EXPECT_NEAR(fd, g[k], 1e-6 * g.norm());
                    const Vec hd = (grad_f(spec, l + e) - grad_f(spec, l - e)) / (2 * h);
                    EXPECT_LE((hd - H.col(k)).norm(), 1e-4 * std::max(H.norm(), 1e-6 / l.norm()));
                }
            }
        }
    }
}

TEST(MatrixFunction, ConjugationInvarianceAndEquivariance) {
    num::Rng rng(11);
    for (int n = 2; n <= 4; ++n) {
        auto spec = eps_family_spec(n, 0.2, +1);
        for (int trial = 0; trial < 200; ++trial) {
            const Vec l = positive_curvatures(rng, n);
            const Mat Q0 = random_orthogonal(rng, n);
            const Mat S = Q0 * l.asDiagonal() * Q0.transpose();
            const Mat Q = random_orthogonal(rng, n);
            const Mat S2 = Q * S * Q.transpose();
            const double F = eval_F(spec, S);
            EXPECT_NEAR(eval_F(spec, S2), F, 1e-10 * std::abs(F));
            const Mat D = dF_dS(spec, S);
            EXPECT_LT((dF_dS(spec, S2) - Q * D * Q.transpose()).norm(), 1e-10);
        }
    }
}

TEST(MatrixFunction, DiagonalCasesAndIdentity) {
    EXPECT_DOUBLE_EQ(eval_F(mean_curvature_spec(3), Mat::Identity(3, 3)), 3.0);
    auto spec = eps_family_spec(3, 0.3, -1);
    Vec l(3);
    l << 0.4, 1.1, 2.0;
    Mat S = l.asDiagonal();
    EXPECT_NEAR(eval_F(spec, S), eval_f(spec, l), 1e-15);
    Mat D = dF_dS(spec, S);
    Mat expect = Mat(grad_f(spec, l).asDiagonal());
    EXPECT_LT((D - expect).norm(), 1e-14);
    Vec tau(3);
    tau << 0.3, -0.2, 1.0;
    Mat d2 = d2F_contract(spec, S, Mat(tau.asDiagonal()));
    Mat e2 = Mat((hess_f(spec, l) * tau).asDiagonal());
    EXPECT_LT((d2 - e2).norm(), 1e-13);
    Mat T = Mat::Random(3, 3);
    T = T + T.transpose().eval();
    EXPECT_EQ(d2F_contract(mean_curvature_spec(3), S, T).norm(), 0.0);
    EXPECT_LT((dF_dS(mean_curvature_spec(3), T) - Mat::Identity(3, 3)).norm(), 1e-13);
}

TEST(MatrixFunction, DerivativesAgainstFiniteDifferences) {
    num::Rng rng(5);
    for (int n = 2; n <= 4; ++n) {
        auto spec = eps_family_spec(n, 0.4, +1);
        for (int trial = 0; trial < 100; ++trial) {
            const Vec l = positive_curvatures(rng, n);
            const Mat Q0 = random_orthogonal(rng, n);
            const Mat S = Q0 * l.asDiagonal() * Q0.transpose();
            Mat T = random_symmetric(rng, n);
            const double t = 1e-6 * S.norm();
            const double first = (eval_F(spec, Mat(S + t * T)) - eval_F(spec, Mat(S - t * T))) / (2 * t);
            EXPECT_NEAR(first, (dF_dS(spec, S).cwiseProduct(T)).sum(), 1e-5 * std::max(1.0, T.norm()));
            const double t2 = 1e-4 * S.norm();
            const Mat fd = (dF_dS(spec, Mat(S + t2 * T)) - dF_dS(spec, Mat(S - t2 * T))) / (2 * t2);
            const Mat an = d2F_contract(spec, S, T);
            EXPECT_LE((fd - an).norm(), 1e-4 * std::max(an.norm(), 1e-3));
            const double second =
                (eval_F(spec, Mat(S + t2 * T)) - 2 * eval_F(spec, S) + eval_F(spec, Mat(S - t2 * T))) / (t2 * t2);
            EXPECT_NEAR(second, an.cwiseProduct(T).sum(), 1e-4 * std::max(1.0, std::abs(second)));
        }
    }
}

TEST(MatrixFunction, RepeatedEigenvaluesUseTheSmoothLimit) {
    auto spec = eps_family_spec(3, 0.3, +1);
    num::Rng rng(3);
    Vec l(3);
    l << 1.0, 1.0, 0.5;
    const Mat Q = random_orthogonal(rng, 3);
    const Mat S = Q * l.asDiagonal() * Q.transpose();
    const Mat T = random_symmetric(rng, 3);
    const double t = 1e-4;
    const Mat fd = (dF_dS(spec, Mat(S + t * T)) - dF_dS(spec, Mat(S - t * T))) / (2 * t);
    EXPECT_LE((fd - d2F_contract(spec, S, T)).norm(), 1e-6);
}

TEST(MatrixFunction, HomogeneityChain) {
    auto spec = eps_family_spec(3, 0.2, +1);
    Vec l(3);
    l << 0.5, 1.5, 0.9;
    Mat S = l.asDiagonal();
    Mat T = Mat::Ones(3, 3);
    const double rho = 2.5;
    EXPECT_NEAR(eval_F(spec, Mat(rho * S)), rho * eval_F(spec, S), 1e-13);
    EXPECT_LT((dF_dS(spec, Mat(rho * S)) - dF_dS(spec, S)).norm(), 1e-13);
    EXPECT_LT((d2F_contract(spec, Mat(rho * S), T) - d2F_contract(spec, S, T) / rho).norm(), 1e-13);
}

TEST(MatrixFunction, RejectsNonSymmetricInput) {
    Mat S(2, 2);
    S << 1, 2, 0, 1;
    EXPECT_THROW(eval_F(mean_curvature_spec(2), S), std::invalid_argument);
    Mat T = S;
    EXPECT_THROW(d2F_contract(mean_curvature_spec(2), Mat(Mat::Identity(2, 2)), T), std::invalid_argument);
}

TEST(Admissible, Reports) {
    Vec l(3);
    l << 1, 0, -5;
    auto r = check_admissible(mean_curvature_spec(3), l);
    EXPECT_TRUE(r.ok);
    EXPECT_DOUBLE_EQ(r.min_grad, 1.0);
    auto big = eps_family_spec(3, 20.0, -1);  // gradient 1 - 20/9
    auto rb = check_admissible(big, Vec::Ones(3));
    EXPECT_FALSE(rb.ok);
    EXPECT_LT(rb.min_grad, 0.0);
    Vec bad(3);
    bad << 1, -1, 0;
    auto rd = check_admissible(eps_family_spec(3, 0.1, +1), bad);
    EXPECT_FALSE(rd.ok);
    EXPECT_LE(rd.domain_margin, 0.0);
}

TEST(Composite, MatchesBuiltInQuotient) {
    // E1 + eps * E3 / E2 written through the elementary-symmetric hook.
    const double eps = 0.3;
    ElementaryComposition comp;
    comp.phi = [eps](const Vec& e) { return e[0] + eps * e[2] / e[1]; };
    comp.dphi = [eps](const Vec& e) {
        Vec d(3);
        d << 1.0, -eps * e[2] / (e[1] * e[1]), eps / e[1];
        return d;
    };
    comp.d2phi = [eps](const Vec& e) {
        Mat H = Mat::Zero(3, 3);
        H(1, 1) = 2 * eps * e[2] / (e[1] * e[1] * e[1]);
        H(1, 2) = H(2, 1) = -eps / (e[1] * e[1]);
        return H;
    };
    comp.margin = [](const Vec& l) { return elementary_symmetric_skip(2, l) - 1e-9; };
    auto c = composite_spec(3, "custom", comp);
    auto b = eps_family_spec(3, eps, +1);
    num::Rng rng(9);
    for (int i = 0; i < 50; ++i) {
        Vec l = positive_curvatures(rng, 3);
        EXPECT_NEAR(eval_f(c, l), eval_f(b, l), 1e-13);
        EXPECT_LT((grad_f(c, l) - grad_f(b, l)).norm(), 1e-12);
        EXPECT_LT((hess_f(c, l) - hess_f(b, l)).norm(), 1e-11);
    }
}
