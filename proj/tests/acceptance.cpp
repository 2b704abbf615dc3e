#include <fshrink/pipeline.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace fshrink;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

Vec positive_curvatures(num::Rng& rng, int n) {
    Vec l(n);
    for (int i = 0; i < n; ++i) l[i] = rng.uniform(0.05, 2.0);
    return l;
}

Mat random_orthogonal(num::Rng& rng, int n) {
    Mat G(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) G(i, j) = rng.normal();
    Eigen::HouseholderQR<Mat> qr(G);
    return qr.householderQ();
}

Outcome curvature_kernel() {
    Outcome o;
    num::Rng rng(1);
    double euler = 0.0, grad = 0.0, hess = 0.0, conj = 0.0, sym = 0.0, hom = 0.0;
    std::size_t draws = 0;
    for (int n = 2; n <= 4; ++n)
        for (const auto& spec : {mean_curvature_spec(n), eps_family_spec(n, 0.1, +1), eps_family_spec(n, 0.1, -1)})
            for (int k = 0; k < 1000; ++k, ++draws) {
                const Vec l = positive_curvatures(rng, n);
                const double f = eval_f(spec, l);
                const Vec g = grad_f(spec, l);
                const Mat H = hess_f(spec, l);
                Vec p = l;
                std::shuffle(p.data(), p.data() + n, std::mt19937_64(k));
                sym = std::max(sym, std::abs(eval_f(spec, p) - f) / std::abs(f));
                const double rho = rng.uniform(0.2, 5.0);
                hom = std::max(hom, std::abs(eval_f(spec, rho * l) - rho * f) / std::abs(rho * f));
                euler = std::max(euler, std::abs(l.dot(g) - f) / std::abs(f));
                const double h = 1e-5 * l.norm();
                for (int i = 0; i < n; ++i) {
                    Vec e = Vec::Zero(n);
                    e[i] = h;
                    const double fd = (eval_f(spec, l + e) - eval_f(spec, l - e)) / (2 * h);
                    grad = std::max(grad, std::abs(fd - g[i]) / g.norm());
                    const Vec hd = (grad_f(spec, l + e) - grad_f(spec, l - e)) / (2 * h);
                    hess = std::max(hess, (hd - H.col(i)).norm() / std::max(H.norm(), 1e-6 / l.norm()));
                }
                const Mat Q = random_orthogonal(rng, n);
                const Mat S = Q * l.asDiagonal() * Q.transpose();
                const Mat Q2 = random_orthogonal(rng, n);
                conj = std::max(conj, std::abs(eval_F(spec, Mat(Q2 * S * Q2.transpose())) - eval_F(spec, S)) / std::abs(f));
            }
    o.require(sym <= 1e-12, "permutation symmetry " + fmt(sym));
    o.require(hom <= 1e-12, "homogeneity " + fmt(hom));
    o.require(euler <= 1e-8, "Euler identity " + fmt(euler));
    o.require(grad <= 1e-6, "gradient vs FD " + fmt(grad));
    o.require(hess <= 1e-4, "Hessian vs FD " + fmt(hess));
    o.require(conj <= 1e-10, "conjugation invariance " + fmt(conj));
    o.note(std::to_string(draws) + " draws, Euler " + fmt(euler) + ", grad " + fmt(grad) + ", hess " + fmt(hess) +
           ", conj " + fmt(conj));
    return o;
}

Outcome hypothesis_checker() {
    Outcome o;
    const auto e1 = check_uniqueness_hypothesis(mean_curvature_spec(2), ConeSpec{2, 1.0, 1});
    o.require(e1.kappa == 0.0 && e1.satisfied, "E1 must give kappa = 0 and satisfied");
    const ConeSpec cone{3, 1.0, 1};
    for (int sign : {+1, -1}) {
        std::vector<double> le, lk;
        for (double eps : num::geomspace(1e-4, 1e-2, 9)) {
            le.push_back(std::log(eps));
            lk.push_back(std::log(kappa_constant(eps_family_spec(3, eps, sign), cone)));
        }
        const double slope = num::fit_line(le, lk).slope;
        o.require(std::abs(slope - 1.0) <= 0.1, "kappa exponent " + fmt(slope));
        const auto es = max_admissible_epsilon([sign](double e) { return eps_family_spec(3, e, sign); }, cone, 1e-6);
        o.require(es.eps_star > 0.0, "eps* positive");
        o.require(es.upper - es.lower <= 1e-6, "eps* bracket " + fmt(es.upper - es.lower));
        o.note(std::string(sign > 0 ? "+" : "-") + "eps: exponent " + fmt(slope) + ", eps* " + fmt(es.eps_star));
    }
    return o;
}

ProfileCurve analytic_profile(int n, const std::vector<double>& z, const std::function<double(double)>& r,
                              const std::function<double(double)>& r1, const std::function<double(double)>& r2) {
    ProfileCurve p;
    p.n = n;
    p.z = z;
    for (double x : z) {
        p.r.push_back(r(x));
        p.r1.push_back(r1(x));
        p.r2.push_back(r2(x));
    }
    return p;
}

Outcome shrinker_oracles() {
    Outcome o;
    double worst = 0.0;
    for (int n = 2; n <= 4; ++n) {
        const auto spec = mean_curvature_spec(n);
        const double Rs = std::sqrt(2.0 * n), Rc = std::sqrt(2.0 * (n - 1));
        const auto sphere = analytic_profile(
            n, num::linspace(-0.9 * Rs, 0.9 * Rs, 41), [Rs](double x) { return std::sqrt(Rs * Rs - x * x); },
            [Rs](double x) { return -x / std::sqrt(Rs * Rs - x * x); },
            [Rs](double x) { return -Rs * Rs / std::pow(Rs * Rs - x * x, 1.5); });
        const auto cyl = analytic_profile(
            n, num::linspace(0.0, 40.0, 41), [Rc](double) { return Rc; }, [](double) { return 0.0; },
            [](double) { return 0.0; });
        for (const auto* p : {&sphere, &cyl})
            for (double v : shrinker_residual(spec, *p)) worst = std::max(worst, std::abs(v));
        for (double rho : {0.1, 1.0, 7.0})
            worst = std::max(worst, std::abs(shrinker_residual_at(spec, curve_geometry(n, CurveJet{0.0, rho, 0.0, 1.0, 0.0, 0.0}))));
    }
    o.require(worst <= 1e-10, "oracle residual " + fmt(worst));
    // Radius 2 is exact at n = 3; irrational radii seed an unstable mode of the profile equation.
    const auto p = integrate_profile(mean_curvature_spec(3), {0.0, 2.0, 0.0}, 40.0, 1e-9);
    double dev = 0.0;
    for (double r : p.r) dev = std::max(dev, std::abs(r - 2.0));
    o.require(!p.blew_up && std::abs(p.z.back() - 40.0) < 1e-12 && dev <= 1e-6, "cylinder drift " + fmt(dev));
    o.note("oracle residual " + fmt(worst) + ", n=3 cylinder drift on [0,40] " + fmt(dev));
    return o;
}

Outcome uniqueness() {
    Outcome o;
    const auto rep = uniqueness_scan(mean_curvature_spec(2), ConeSpec{2, 1.0, 1});
    o.require(rep.initial_conditions >= 200, "initial conditions " + std::to_string(rep.initial_conditions));
    o.require(rep.clusters.size() == 1, "clusters " + std::to_string(rep.clusters.size()));
    std::size_t prev = std::numeric_limits<std::size_t>::max();
    std::string counts;
    for (auto [tol, count] : rep.count_by_tol) {
        o.require(count <= prev, "cluster count grew at tol " + fmt(tol));
        prev = count;
        counts += (counts.empty() ? "" : ",") + std::to_string(count);
    }
    o.note(std::to_string(rep.initial_conditions) + " initial conditions, " + std::to_string(rep.clusters.size()) +
           " cluster, counts by tol [" + counts + "]");
    return o;
}

FlowPatch sphere_patch(GraphMode mode, int n, double R0, double t, std::size_t points, double extent) {
    FlowPatch p;
    p.mode = mode;
    p.n = n;
    p.orientation = mode == GraphMode::radial ? -1 : 1;
    p.t = t;
    p.x = mode == GraphMode::radial ? num::linspace(0.0, extent, points) : num::linspace(-extent, extent, points);
    const double R = sphere_radius(n, R0, t);
    for (double x : p.x) {
        const double u = std::sqrt(R * R - x * x);
        p.u.push_back(u);
        p.u1.push_back(-x / u);
        p.u2.push_back(-R * R / (u * u * u));
    }
    return p;
}

bool halves(const std::vector<double>& e) {
    for (std::size_t k = 1; k < e.size(); ++k)
        if (!(e[k - 1] >= 2.0 * e[k])) return false;
    return true;
}

std::string list(const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : ",") + fmt(x);
    return "[" + s + "]";
}

Outcome flow_fidelity() {
    Outcome o;
    double sphere_err = 0.0;
    for (int n : {2, 3})
        for (GraphMode mode : {GraphMode::radial, GraphMode::profile}) {
            const double R0 = 2.0, ext = (mode == GraphMode::radial ? 0.7 : 0.6) * sphere_radius(n, R0, -0.5);
            EvolveOptions eo;
            eo.snapshot_dt = 0.05;
            eo.boundary = [n, R0](double x, double t) {
                const double R = sphere_radius(n, R0, t);
                return std::sqrt(R * R - x * x);
            };
            const auto run = evolve(mean_curvature_spec(n), sphere_patch(mode, n, R0, -1.0, 81, ext), -0.5, eo);
            for (const auto& p : run.snapshots) {
                const double R = sphere_radius(n, R0, p.t);
                for (std::size_t i = 0; i < p.size(); ++i)
                    sphere_err = std::max(sphere_err, std::abs(p.u[i] - std::sqrt(R * R - p.x[i] * p.x[i])));
            }
        }
    o.require(sphere_err <= 1e-5, "sphere closed form " + fmt(sphere_err));

    const auto spec = mean_curvature_spec(2);
    const auto end = conical_end(spec, ConeSpec{2, 1.0, 1}, 0.3, 200.0, 1e-13);
    const ProfileInterpolant I(end.profile, end.series);
    std::vector<double> stat;
    for (std::size_t N : {31, 61, 121}) {
        const auto x = num::linspace(1.0, 4.0, N);
        EvolveOptions eo;
        eo.boundary = self_similar_boundary(I);
        const auto run = evolve(spec, self_similar_patch(I, 1.0, 2, 1, x, -1.0), -0.5, eo);
        const auto exact = self_similar_patch(I, 1.0, 2, 1, x, -0.5);
        double e = 0.0;
        for (std::size_t i = 0; i < N; ++i) e = std::max(e, std::abs(run.snapshots.back().u[i] - exact.u[i]));
        stat.push_back(e);
    }
    o.require(halves(stat), "self-similar stationarity " + list(stat));

    std::vector<double> shape, metric;
    for (int k = 0; k < 3; ++k) {
        const std::size_t N = 31 * (1u << k) - ((1u << k) - 1);
        EvolveOptions eo;
        eo.boundary = self_similar_boundary(I);
        const auto burn = evolve(spec, self_similar_patch(I, 1.0, 2, 1, num::linspace(1.0, 4.0, N), -1.0), -0.97, eo);
        eo.snapshot_dt = 0.004 / (1 << k);
        const auto run = evolve(spec, burn.snapshots.back(), burn.snapshots.back().t + 10 * eo.snapshot_dt, eo);
        const auto r = shape_evolution_check(spec, run, 3u << k);
        shape.push_back(r.shape_rel);
        metric.push_back(r.metric_rel);
    }
    o.require(halves(shape) && halves(metric), "evolution residuals shape " + list(shape) + " metric " + list(metric));
    o.note("sphere " + fmt(sphere_err) + ", stationarity " + list(stat) + ", shape residual " + list(shape) +
           ", metric residual " + list(metric));
    return o;
}

Outcome deviation_pipeline() {
    Outcome o;
    const auto spec = mean_curvature_spec(2);
    const ConeSpec cone{2, 1.0, 1};
    const auto end = conical_end(spec, cone, 0.3, 200.0, 1e-13);
    const ProfileInterpolant I(end.profile, end.series);
    const auto base = sample_profile(I, 2, 1, 1.0, 60.0, 5901);

    const auto self = deviation_field(base, ProfileInterpolant(base));
    const auto er = deviation_elliptic_residual(spec, self);
    const auto pr = parabolic_deviation_residual(SelfSimilarPair(spec, self), {-1.0, -0.5, -0.1});
    double pmax = 0.0;
    for (const auto& s : pr.slices) pmax = std::max(pmax, s.max_abs + s.sup_h);
    o.require(self.sup_abs() == 0.0 && er.max_abs == 0.0 && pmax == 0.0, "self pair not identically zero");

    double offset_err = 0.0;
    const auto cone_base = cone_profile(cone, 1.0, 5.0, 401);
    for (double delta : {0.05, -0.1}) {
        const ProfileInterpolant shifted(cone_profile(cone, 0.5, 6.0, 1101));
        ProfileCurve moved = shifted.profile();
        for (auto& r : moved.r) r -= delta * std::sqrt(2.0);
        const auto d = deviation_field(cone_base, ProfileInterpolant(moved));
        for (double h : d.h) offset_err = std::max(offset_err, std::abs(h - delta));
    }
    o.require(offset_err <= 1e-10, "constant offset " + fmt(offset_err));

    const SelfSimilarPair pair(spec, deviation_field(base, ProfileInterpolant(cone_profile(cone, 0.1, 80.0, 7991))));
    const std::vector<double> times{-1.0, -0.5, -0.25, -0.1, -0.05, -0.02};
    const auto rep = parabolic_deviation_residual(pair, times);
    // At least linear decay: sup|h_t| <= C (-t) with C settling as t -> 0.
    std::vector<double> C;
    for (const auto& s : rep.slices) C.push_back(s.sup_h / (-s.t));
    const double Cmax = *std::max_element(C.begin(), C.end());
    o.require(Cmax <= 1.02 * C.back() && std::abs(C[C.size() - 2] - C.back()) <= 0.02 * C.back(),
              "sup|h_t|/(-t) " + list(C));

    std::vector<double> X, t, v;
    for (double tt : {-0.5, -0.2, -0.1})
        for (double x : num::linspace(1.0, 3.0, 9)) {
            X.push_back(x);
            t.push_back(tt);
            v.push_back(2.0 * std::exp(x * x / (3.0 * tt)));
        }
    const double L = exponential_decay_fit(X, t, v).Lambda;
    o.require(std::abs(L - 3.0) <= 0.06, "exponential fit " + fmt(L));
    o.note("offset " + fmt(offset_err) + ", sup|h_t|/(-t) " + list(C) + ", slope " + fmt(rep.decay_slope) +
           ", Lambda " + fmt(L) + " (3)");
    return o;
}

Outcome carleman_certification() {
    Outcome o;
    RunConfig cfg;
    const auto dir = fs::temp_directory_path() / ("fshrink_acceptance_" + std::to_string(::getpid()));
    const auto r = run_verify_carleman(cfg, dir);
    fs::remove_all(dir);
    for (const auto& c : r.summary["checks"]) o.require(c["passed"].get<bool>(), c["name"].get<std::string>());
    double worst_eig = std::numeric_limits<double>::infinity(), worst_scalar = worst_eig;
    for (const auto& c : r.summary["results"]["certification"]) {
        worst_eig = std::min(worst_eig, c["eig_worst"]["value"].get<double>());
        worst_scalar = std::min(worst_scalar, c["scalar_worst"]["value"].get<double>());
    }
    double min_ratio = std::numeric_limits<double>::infinity();
    for (const auto& c : r.summary["results"]["identity"]) {
        const auto rel = c["relative_residual"].get<std::vector<double>>();
        for (std::size_t k = 1; k < rel.size(); ++k) min_ratio = std::min(min_ratio, rel[k - 1] / rel[k]);
    }
    o.note("worst eig margin " + fmt(worst_eig) + ", worst scalar margin " + fmt(worst_scalar) +
           ", min identity ratio " + fmt(min_ratio) + ", worst slack " +
           fmt(r.summary["checks"][2]["value"].get<double>()));
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome reproducibility() {
    Outcome o;
#ifdef FSHRINK_CLI
    const auto dir = fs::temp_directory_path() / ("fshrink_repro_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "config.json");
        cfg << R"({"spec": "E1", "cone": {"n": 2, "sigma": 1}})";
    }
    const auto out = dir / "out";
    const std::string cmd = std::string("\"") + FSHRINK_CLI + "\" all --config " + (dir / "config.json").string() +
                            " --output " + out.string() + " --seed 7 > /dev/null";
    std::vector<std::pair<std::string, std::string>> first;
    for (int pass = 0; pass < 2; ++pass) {
        fs::remove_all(out);
        const int status = std::system(cmd.c_str());
        o.require(WIFEXITED(status) && WEXITSTATUS(status) == 0, "run all exit status");
        std::vector<std::pair<std::string, std::string>> now;
        for (const auto& e : fs::recursive_directory_iterator(out))
            if (e.path().extension() == ".json") now.emplace_back(fs::relative(e.path(), out).string(), slurp(e.path()));
        std::sort(now.begin(), now.end());
        if (pass == 0) first = std::move(now);
        else {
            o.require(now == first, "JSON summaries differ between runs");
            o.note(std::to_string(now.size()) + " JSON files byte-identical");
        }
    }
    fs::remove_all(dir);
#else
    o.require(false, "CLI path not configured");
#endif
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "curvature kernel", 10.0, curvature_kernel},
        {2, "hypothesis checker", 30.0, hypothesis_checker},
        {3, "shrinker oracles", 10.0, shrinker_oracles},
        {4, "uniqueness at desk scale", 60.0, uniqueness},
        {5, "flow fidelity", 120.0, flow_fidelity},
        {6, "deviation pipeline", 120.0, deviation_pipeline},
        {7, "Carleman certification", 300.0, carleman_certification},
        {8, "reproducibility", 600.0, reproducibility},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        o.require(secs <= c.budget, "runtime over budget");
        if (!o.pass) ++failed;
        std::printf("criterion %d (%s): %s [%.1f s / %.0f s] %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", secs,
                    c.budget, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
