#pragma once

#include "carleman.hpp"
#include "config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fshrink {

namespace fs = std::filesystem;

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const fs::path& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw std::ios_base::failure("cannot write " + path.string());
        for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
        out_ << "\n";
    }
    void row(const std::vector<double>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) out_ << (i ? "," : "") << format_double(v[i]);
        out_ << "\n";
    }

private:
    std::ofstream out_;
};

// Collects named checks; hard ones decide the exit status.
class CheckList {
public:
    void add(const std::string& name, bool passed, bool hard, double value = std::numeric_limits<double>::quiet_NaN()) {
        Json e{{"name", name}, {"passed", passed}, {"hard", hard}};
        if (!std::isnan(value)) e["value"] = value;
        items_.push_back(std::move(e));
        if (hard && !passed) hard_failed_ = true;
        if (!passed) all_passed_ = false;
    }
    bool hard_failed() const { return hard_failed_; }
    bool all_passed() const { return all_passed_; }
    const Json& json() const { return items_; }

private:
    Json items_ = Json::array();
    bool hard_failed_ = false, all_passed_ = true;
};

struct ExperimentResult {
    Json summary;
    bool hard_failed = false;
};

inline void write_json(const Json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::ios_base::failure("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

inline ExperimentResult finish(const std::string& name, const RunConfig& cfg, Json results, const CheckList& checks,
                               const fs::path& dir) {
    Json s{{"experiment", name},
           {"config", config_to_json(cfg)},
           {"versions", module_versions()},
           {"results", std::move(results)},
           {"checks", checks.json()},
           {"all_checks_passed", checks.all_passed()},
           {"hard_failure", checks.hard_failed()}};
    write_json(s, dir / "summary.json");
    return {s, checks.hard_failed()};
}

inline Json worst_json(const WorstSample& w) { return Json{{"value", w.value}, {"t", w.t}, {"X", w.X}}; }

// Shrinker asymptotic to the configured cone, resolved down to z_stop.
struct ShrinkerModel {
    CurvatureSpec spec;
    ConicalEnd end;
    ProfileInterpolant shrinker;
};

inline ShrinkerModel build_shrinker(const RunConfig& cfg, double z_stop) {
    auto spec = make_spec(cfg);
    auto end = conical_end(spec, cfg.cone, z_stop, cfg.solver.z_join, cfg.solver.end_tol);
    ProfileInterpolant I(end.profile, end.series);
    return {std::move(spec), std::move(end), std::move(I)};
}

inline double shrinker_floor(const RunConfig& cfg) {
    const double s = std::sqrt(-cfg.flow.t_min);
    return 0.9 * std::min({cfg.flow.z_lo / std::max(1.0, s), cfg.carleman.z_lo, 1.0});
}

inline ProfileCurve sample_profile(const ProfileInterpolant& I, int n, int orientation, double z0, double z1,
                                   std::size_t points) {
    ProfileCurve p;
    p.n = n;
    p.orientation = orientation;
    p.z = num::linspace(z0, z1, points);
    for (double z : p.z) {
        const auto j = I.at(z);
        p.r.push_back(j.f);
        p.r1.push_back(j.f1);
        p.r2.push_back(j.f2);
    }
    return p;
}

inline ProfileCurve cone_profile(const ConeSpec& cone, double z0, double z1, std::size_t points) {
    ProfileCurve p;
    p.n = cone.n;
    p.orientation = cone.orientation;
    p.z = num::linspace(z0, z1, points);
    for (double z : p.z) {
        p.r.push_back(cone.sigma * z);
        p.r1.push_back(cone.sigma);
        p.r2.push_back(0.0);
    }
    return p;
}

inline ExperimentResult run_check_hypothesis(const RunConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    const auto spec = make_spec(cfg);
    const auto rep = check_uniqueness_hypothesis(spec, cfg.cone);
    Json res{{"lambda", rep.lambda},       {"kappa", rep.kappa},       {"bound", rep.bound},
             {"satisfied", rep.satisfied}, {"s_min", rep.s_min},       {"s_max", rep.s_max},
             {"sampling", rep.sampling},   {"kappa_norm", rep.kappa_norm}, {"reason", rep.reason}};
    CheckList checks;
    checks.add("lambda positive and finite", rep.lambda > 0.0 && std::isfinite(rep.lambda), true, rep.lambda);
    checks.add("kappa nonnegative and finite", rep.kappa >= 0.0 && std::isfinite(rep.kappa), true, rep.kappa);
    if (cfg.spec.name == "E1") checks.add("mean curvature satisfies trivially", rep.kappa == 0.0 && rep.satisfied, true);
    if (cfg.spec.name != "E1") {
        const int sign = cfg.spec.name == "E1_plus_eps" ? 1 : -1;
        const auto family = [&](double e) { return eps_family_spec(cfg.cone.n, e, sign, cfg.spec.domain_eps); };
        const auto es = max_admissible_epsilon(family, cfg.cone, 1e-6, 0.0, 1e-2);
        res["eps_star"] = {{"value", es.eps_star}, {"lower", es.lower}, {"upper", es.upper}};
        checks.add("eps_star positive", es.eps_star > 0.0, false, es.eps_star);
        checks.add("eps_star bracket <= 1e-6", es.upper - es.lower <= 1e-6, false, es.upper - es.lower);
    }
    return finish("check-hypothesis", cfg, res, checks, dir);
}

inline ExperimentResult run_solve_shrinker(const RunConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    const auto spec = make_spec(cfg);
    const auto& sv = cfg.solver;
    ScanOptions o;
    o.z0 = sv.z0;
    o.r_lo = sv.r_lo;
    o.r_hi = sv.r_hi;
    o.r_rows = sv.r_rows;
    o.r1_lo = sv.r1_lo;
    o.r1_hi = sv.r1_hi;
    o.r1_cols = sv.r1_cols;
    o.slope_tols = sv.slope_tols;
    o.shoot.z_far = sv.z_far;
    o.shoot.tol = sv.tol;
    const auto rep = uniqueness_scan(spec, cfg.cone, o);

    CsvWriter table(dir / "shoot_results.csv", {"r", "r1", "horizon", "asymptotic_slope", "slope_residual",
                                                "tail_exponent", "max_equation_residual", "blew_up", "matched"});
    for (const auto& s : rep.separatrix_results)
        table.row({s.initial.r, s.initial.r1, s.horizon, s.asymptotic_slope, s.slope_residual, s.tail_exponent,
                   s.max_equation_residual, s.blew_up ? 1.0 : 0.0, s.matched ? 1.0 : 0.0});

    Json clusters = Json::array();
    for (std::size_t c = 0; c < rep.clusters.size(); ++c) {
        const auto& cl = rep.clusters[c];
        clusters.push_back({{"r", cl.representative.r},
                            {"r1", cl.representative.r1},
                            {"asymptotic_slope", cl.asymptotic_slope},
                            {"slope_residual", cl.slope_residual},
                            {"members", cl.members}});
        // The matched trajectory closest to the representative carries the profile.
        const ShootResult* best = nullptr;
        for (const auto& s : rep.separatrix_results)
            if (s.matched && (!best || std::abs(s.initial.r - cl.representative.r) <
                                           std::abs(best->initial.r - cl.representative.r)))
                best = &s;
        if (best) write_profile_csv(best->profile, (dir / ("profile_" + std::to_string(c) + ".csv")).string());
    }
    Json counts = Json::array();
    bool monotone = true;
    std::size_t prev = std::numeric_limits<std::size_t>::max();
    for (auto [tol, count] : rep.count_by_tol) {
        counts.push_back({{"slope_tol", tol}, {"clusters", count}});
        monotone = monotone && count <= prev;
        prev = count;
    }
    Json res{{"initial_conditions", rep.initial_conditions},
             {"trajectories", rep.trajectories},
             {"separatrices", rep.separatrices},
             {"clusters", clusters},
             {"count_by_tol", counts},
             {"hypothesis", {{"lambda", rep.hypothesis.lambda}, {"kappa", rep.hypothesis.kappa},
                             {"satisfied", rep.hypothesis.satisfied}}}};
    CheckList checks;
    checks.add("cluster count non-increasing under tightening", monotone, true);
    checks.add("exactly one matched cluster", rep.clusters.size() == 1, false, static_cast<double>(rep.clusters.size()));
    return finish("solve-shrinker", cfg, res, checks, dir);
}

namespace detail {

inline FlowPatch round_sphere_cap(int n, double R0, double t, std::size_t points, double x_max) {
    FlowPatch p;
    p.mode = GraphMode::radial;
    p.n = n;
    p.orientation = -1;
    p.t = t;
    p.x = num::linspace(0.0, x_max, points);
    const double R = sphere_radius(n, R0, t);
    for (double x : p.x) {
        const double u = std::sqrt(R * R - x * x);
        p.u.push_back(u);
        p.u1.push_back(-x / u);
        p.u2.push_back(-R * R / (u * u * u));
    }
    return p;
}

inline std::size_t cells(double lo, double hi, double dx) {
    return static_cast<std::size_t>(std::llround((hi - lo) / dx));
}

}  // namespace detail

inline ExperimentResult run_simulate_flow(const RunConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    const auto& fc = cfg.flow;
    const int n = cfg.cone.n;
    const double span = fc.t_max - fc.t_min;
    const double snap_dt = span / (fc.snapshots - 1);
    CheckList checks;
    Json res;

    // Shrinking sphere against its closed form.
    {
        const double R0 = 2.0, x_max = 0.7 * sphere_radius(n, R0, fc.t_max);
        const std::size_t N = detail::cells(0.0, x_max, fc.dx / 2.0) + 1;
        EvolveOptions eo;
        eo.cfl_max = fc.cfl_max;
        eo.snapshot_dt = snap_dt;
        eo.boundary = [n, R0](double x, double t) {
            const double R = sphere_radius(n, R0, t);
            return std::sqrt(R * R - x * x);
        };
        const auto run = evolve(mean_curvature_spec(n), detail::round_sphere_cap(n, R0, fc.t_min, N, x_max), fc.t_max, eo);
        double err = 0.0;
        for (const auto& p : run.snapshots) {
            const double R = sphere_radius(n, R0, p.t);
            for (std::size_t i = 0; i < p.size(); ++i) err = std::max(err, std::abs(p.u[i] - std::sqrt(R * R - p.x[i] * p.x[i])));
        }
        res["sphere"] = {{"R0", R0}, {"points", N}, {"max_error", err}, {"steps", run.steps}};
        checks.add("sphere closed form within 1e-5", err <= 1e-5, false, err);
    }

    const auto model = build_shrinker(cfg, shrinker_floor(cfg));
    const auto& I = model.shrinker;
    const double sigma = cfg.cone.sigma;
    const int o = cfg.cone.orientation;

    // Rescaled self-similar flow: error at t_max against the exact slice, three refinements.
    Json levels = Json::array();
    std::vector<double> errs;
    FlowRun coarse;
    for (int k = 0; k < 3; ++k) {
        const double dx = fc.dx / (1 << k);
        const auto x = num::linspace(fc.z_lo, fc.z_hi, detail::cells(fc.z_lo, fc.z_hi, dx) + 1);
        EvolveOptions eo;
        eo.cfl_max = fc.cfl_max;
        eo.snapshot_dt = snap_dt;
        eo.boundary = self_similar_boundary(I);
        auto run = evolve(model.spec, self_similar_patch(I, sigma, n, o, x, fc.t_min), fc.t_max, eo);
        double e = 0.0;
        const auto exact = self_similar_patch(I, sigma, n, o, x, fc.t_max);
        for (std::size_t i = 0; i < x.size(); ++i) e = std::max(e, std::abs(run.snapshots.back().u[i] - exact.u[i]));
        errs.push_back(e);
        levels.push_back({{"dx", dx}, {"points", x.size()}, {"steps", run.steps}, {"max_error", e}});
        if (k == 0) coarse = std::move(run);
    }
    res["self_similar"] = {{"levels", levels}};
    bool halves = true;
    for (std::size_t k = 1; k < errs.size(); ++k) halves = halves && errs[k - 1] >= 2.0 * errs[k];
    checks.add("self-similar error halves per refinement", halves, false, errs.back());
    checks.add("self-similar errors finite", std::all_of(errs.begin(), errs.end(), [](double e) { return std::isfinite(e); }),
               true);

    CsvWriter series(dir / "flow_series.csv", {"t", "sup_error", "sup_deviation_from_cone"});
    for (std::size_t k = 0; k < coarse.size(); ++k) {
        const auto& p = coarse[k];
        const auto exact = self_similar_patch(I, sigma, n, o, p.x, p.t);
        double e = 0.0, d = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            e = std::max(e, std::abs(p.u[i] - exact.u[i]));
            d = std::max(d, std::abs(p.u[i] - sigma * p.x[i]));
        }
        series.row({p.t, e, d});
        char name[32];
        std::snprintf(name, sizeof name, "snapshot_%03zu.csv", k);
        CsvWriter snap(dir / name, {"x", "u", "exact"});
        for (std::size_t i = 0; i < p.size(); ++i) snap.row({p.x[i], p.u[i], exact.u[i]});
    }
    const auto fit = rescaled_decay_fit(coarse);
    res["decay_fit"] = {{"C", fit.C}, {"slope", fit.slope}, {"fit_residual", fit.fit_residual}};

    // Evolution residuals of the simulated flow after a burn-in.
    Json ev = Json::array();
    std::vector<double> shape, metric;
    for (int k = 0; k < 3; ++k) {
        const double dx = fc.dx / (1 << k);
        const auto x = num::linspace(fc.z_lo, fc.z_hi, detail::cells(fc.z_lo, fc.z_hi, dx) + 1);
        EvolveOptions eo;
        eo.cfl_max = fc.cfl_max;
        eo.boundary = self_similar_boundary(I);
        auto burn = evolve(model.spec, self_similar_patch(I, sigma, n, o, x, fc.t_min), fc.t_min + 0.03, eo);
        eo.snapshot_dt = 0.004 / (1 << k);
        auto run = evolve(model.spec, burn.snapshots.back(), burn.snapshots.back().t + 10 * eo.snapshot_dt, eo);
        const auto r = shape_evolution_check(model.spec, run, 3u << k);
        shape.push_back(r.shape_rel);
        metric.push_back(r.metric_rel);
        ev.push_back({{"dx", dx}, {"shape_rel", r.shape_rel}, {"metric_rel", r.metric_rel}, {"samples", r.samples}});
    }
    res["evolution_residuals"] = ev;
    bool conv = true;
    for (std::size_t k = 1; k < shape.size(); ++k)
        conv = conv && shape[k - 1] >= 2.0 * shape[k] && metric[k - 1] >= 2.0 * metric[k];
    checks.add("evolution residuals converge at scheme order", conv, false, shape.back());
    return finish("simulate-flow", cfg, res, checks, dir);
}

inline ExperimentResult run_deviation_decay(const RunConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    const auto model = build_shrinker(cfg, shrinker_floor(cfg));
    const auto& I = model.shrinker;
    const int n = cfg.cone.n, o = cfg.cone.orientation;
    CheckList checks;
    Json res;

    const auto base = sample_profile(I, n, o, 1.0, 60.0, 5901);
    const ProfileInterpolant cone(cone_profile(cfg.cone, 0.1, 80.0, 7991));

    // Identical shrinkers: the deviation and both residuals vanish exactly.
    {
        const auto self = deviation_field(base, ProfileInterpolant(base));
        const auto er = deviation_elliptic_residual(model.spec, self);
        const SelfSimilarPair pair(model.spec, self);
        const auto pr = parabolic_deviation_residual(pair, {cfg.flow.t_min, 0.5 * cfg.flow.t_min, 0.1 * cfg.flow.t_min});
        double pmax = 0.0;
        for (const auto& s : pr.slices) pmax = std::max(pmax, s.max_abs);
        const bool zero = self.sup_abs() == 0.0 && er.max_abs == 0.0 && pr.exact_zero && pmax == 0.0;
        res["self_pair"] = {{"sup_h", self.sup_abs()}, {"elliptic_max", er.max_abs}, {"parabolic_max", pmax}};
        checks.add("identical shrinkers give zero deviation", zero, true);
    }

    // Shrinker flow against the cone flow.
    const SelfSimilarPair pair(model.spec, deviation_field(base, cone));
    std::vector<double> times;
    for (double f : {1.0, 0.5, 0.25, 0.1, 0.05, 0.02}) times.push_back(f * cfg.flow.t_min);
    const auto rep = parabolic_deviation_residual(pair, times);
    CsvWriter series(dir / "deviation_series.csv", {"t", "sup_h", "fitted_C", "max_abs", "scaling_mismatch"});
    bool monotone = true;
    for (std::size_t k = 0; k < rep.slices.size(); ++k) {
        const auto& s = rep.slices[k];
        series.row({s.t, s.sup_h, s.fitted_C, s.max_abs, s.scaling_mismatch});
        if (k > 0) monotone = monotone && s.sup_h < rep.slices[k - 1].sup_h;
    }
    res["parabolic"] = {{"decay_slope", rep.decay_slope}, {"terminal_sup", rep.terminal_sup}, {"slices", rep.slices.size()}};
    checks.add("sup|h_t| decays at least linearly", rep.decay_slope >= 0.9, false, rep.decay_slope);
    checks.add("sup|h_t| decreases monotonically", monotone, false);

    // Pointwise decay in time at fixed |X| and its exponential fit.
    std::vector<double> X, t, v;
    CsvWriter pw(dir / "pointwise_decay.csv", {"X", "t", "deviation"});
    for (double x : {2.0, 3.0, 4.0})
        for (double s : num::geomspace(0.5, 0.05, 8)) {
            const double val = pair_deviation_at(pair, x, -s);
            X.push_back(x);
            t.push_back(-s);
            v.push_back(val);
            pw.row({x, -s, val});
        }
    const auto ef = exponential_decay_fit(X, t, v);
    res["exponential_fit"] = {{"Lambda", ef.Lambda}, {"r2", ef.r2}, {"used", ef.used}, {"masked", ef.masked}};
    checks.add("pointwise deviation finite", std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }),
               true);
    return finish("deviation-decay", cfg, res, checks, dir);
}


inline ExperimentResult run_verify_carleman(const RunConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    const auto& kc = cfg.carleman;
    const auto model = build_shrinker(cfg, shrinker_floor(cfg));
    const auto& I = model.shrinker;
    const int n = cfg.cone.n, o = cfg.cone.orientation;
    const double sigma = cfg.cone.sigma;
    const double lambda = std::min(1.0, ellipticity_lambda(model.spec, cfg.cone));
    CheckList checks;
    Json res{{"lambda", lambda}};
    const auto x = num::linspace(kc.z_lo, kc.z_hi, static_cast<std::size_t>(kc.points));

    auto params = [&](double M, double tau) {
        CarlemanParams p;
        p.M = M;
        p.tau = tau;
        p.lambda = lambda;
        return p;
    };

    Json cert = Json::array();
    bool all_ok = true, psi_ok = true;
    double worst_slack = std::numeric_limits<double>::infinity();
    CsvWriter margins(dir / "carleman_margins.csv", {"M", "tau", "t", "eig_worst", "scalar_worst"});
    CsvWriter slack(dir / "global_slack.csv", {"M", "tau", "draw", "center", "width", "slack", "lhs", "rhs"});
    for (double tau : kc.tau)
        for (double M : kc.M) {
            const auto run = self_similar_run(I, sigma, n, o, x, -tau, 0.0, static_cast<std::size_t>(kc.slices));
            const auto sl = carleman_slices(model.spec, run, params(M, tau), kc.nodes);
            const auto rep = verify_pointwise_inequalities(sl, kc.R);
            Json per_t = Json::array();
            for (const auto& s : sl) {
                if (s.t >= 0.0) continue;
                double we = std::numeric_limits<double>::infinity(), ws = we;
                for (std::size_t i = 4; i + 4 < s.size(); ++i) {
                    const double Xi = s.geo.position_norm[i];
                    if (Xi < kc.R) continue;
                    we = std::min(we, s.margin_eig[i] / (Xi * Xi));
                    ws = std::min(ws, s.margin_scalar[i] / (Xi * Xi));
                }
                per_t.push_back({{"t", s.t}, {"eig", we}, {"scalar", ws}});
                margins.row({M, tau, s.t, we, ws});
            }
            all_ok = all_ok && rep.ok() && rep.failures == 0;
            psi_ok = psi_ok && rep.psi.value >= 0.0;

            // Global inequality over seeded random bumps outside the ball of radius R.
            const auto [Xlo, Xhi] = common_radius_range(sl);
            num::Rng rng(cfg.seed);
            double ws = std::numeric_limits<double>::infinity();
            for (int d = 0; d < kc.draws; ++d) {
                const double w = rng.uniform(0.5, 2.5);
                const double c_lo = std::max(Xlo, kc.R) + w + 0.5, c_hi = Xhi - w - 2.0;
                if (!(c_hi > c_lo)) throw std::runtime_error("verify-carleman: patch too narrow for random bumps");
                const double c = rng.uniform(c_lo, c_hi);
                std::vector<double> ramp{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
                const auto g = global_carleman_check(sl, bump_test_function(c, w, ramp, -tau), lambda);
                ws = std::min(ws, g.slack);
                slack.row({M, tau, static_cast<double>(d), c, w, g.slack, g.lhs,
                           g.rhs_source + g.rhs_initial + g.rhs_final});
            }
            worst_slack = std::min(worst_slack, ws);
            cert.push_back({{"M", M},
                            {"tau", tau},
                            {"samples", rep.samples},
                            {"failures", rep.failures},
                            {"eig_worst", worst_json(rep.eig)},
                            {"scalar_worst", worst_json(rep.scalar)},
                            {"psi_min", worst_json(rep.psi)},
                            {"empirical_R", rep.empirical_R},
                            {"shrinker_identity", rep.shrinker_identity},
                            {"worst_slack", ws},
                            {"per_t", per_t}});
        }
    res["certification"] = cert;
    checks.add("eigenvalue and scalar margins >= -1e-6 |X|^2", all_ok, false);
    checks.add("auxiliary function nonnegative", psi_ok, false);
    checks.add("global slack >= -1e-8", worst_slack >= -1e-8, false, worst_slack);

    // Identity residual under joint (dx, dt) refinement, and exactness for u = 0. Space starts two levels
    // finer than time: the weight's steep time dependence makes the time error dominant.
    Json ident = Json::array();
    bool halves = true, zero_exact = true;
    for (double tau : kc.tau)
        for (double M : kc.M) {
            std::vector<double> rel;
            for (int k = 1; k <= kc.levels; ++k) {
                const std::size_t N = 80 * (4u << k) + 1, S = 20 * (1u << k) + 1;
                const auto run = self_similar_run(I, sigma, n, o, num::linspace(kc.id_z_lo, kc.id_z_hi, N), -0.6 * tau,
                                                  -0.5 * tau, S);
                const auto sl = carleman_slices(model.spec, run, params(M, tau), kc.nodes);
                const auto [Xlo, Xhi] = common_radius_range(sl);
                const double c = Xlo + 0.4 * (Xhi - Xlo), w = 0.2 * (Xhi - Xlo);
                const auto r = carleman_identity_check(sl, bump_test_function(c, w, {0.3, 1.0, -0.5}, -0.6 * tau));
                rel.push_back(r.scale > 0.0 ? std::abs(r.residual) / r.scale : 0.0);
                if (k == 1) {
                    const auto z = carleman_identity_check(sl, zero_test_function());
                    zero_exact = zero_exact && z.residual == 0.0 && z.bulk == 0.0 && z.flux == 0.0;
                }
            }
            for (std::size_t k = 1; k < rel.size(); ++k) halves = halves && rel[k - 1] >= 2.0 * rel[k];
            ident.push_back({{"M", M}, {"tau", tau}, {"relative_residual", rel}});
        }
    res["identity"] = ident;
    checks.add("identity residual halves per refinement", halves, false);
    checks.add("zero test function gives exactly zero", zero_exact, true);
    return finish("verify-carleman", cfg, res, checks, dir);
}

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"check-hypothesis", "solve-shrinker", "simulate-flow", "deviation-decay",
                                                "verify-carleman"};
    return names;
}

inline ExperimentResult run_experiment(const std::string& name, const RunConfig& cfg, const fs::path& dir) {
    if (name == "check-hypothesis") return run_check_hypothesis(cfg, dir);
    if (name == "solve-shrinker") return run_solve_shrinker(cfg, dir);
    if (name == "simulate-flow") return run_simulate_flow(cfg, dir);
    if (name == "deviation-decay") return run_deviation_decay(cfg, dir);
    if (name == "verify-carleman") return run_verify_carleman(cfg, dir);
    throw std::invalid_argument("unknown experiment " + name);
}

// Every experiment in its own subdirectory, plus a combined summary. An experiment that throws is recorded
// as a hard failure and the rest still run.
inline ExperimentResult run_all(const RunConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    Json parts = Json::object();
    bool hard = false;
    for (const auto& name : experiment_names()) {
        try {
            auto r = run_experiment(name, cfg, dir / name);
            parts[name] = {{"all_checks_passed", r.summary["all_checks_passed"]}, {"hard_failure", r.hard_failed},
                           {"results", r.summary["results"]}, {"checks", r.summary["checks"]}};
            hard = hard || r.hard_failed;
        } catch (const std::exception& e) {
            parts[name] = {{"hard_failure", true}, {"error", e.what()}};
            hard = true;
        }
    }
    Json s{{"experiment", "all"},
           {"config", config_to_json(cfg)},
           {"versions", module_versions()},
           {"experiments", parts},
           {"hard_failure", hard}};
    write_json(s, dir / "summary.json");
    return {s, hard};
}

}  // namespace fshrink
