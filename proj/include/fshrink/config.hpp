#pragma once

#include "curvature.hpp"
#include "cone.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fshrink {

using Json = nlohmann::ordered_json;

inline Json module_versions() {
    return Json{{"curvature", "1.0.0"}, {"cone", "1.0.0"},     {"revolution", "1.0.0"}, {"shrinker", "1.0.0"},
                {"flow", "1.0.0"},      {"carleman", "1.0.0"}, {"cli", "1.0.0"}};
}

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& field, const std::string& what)
        : std::runtime_error("config field '" + field + "': " + what), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct SpecConfig {
    std::string name = "E1";
    double eps = 0.0;           // used by the E1 +- eps En/En-1 families
    double domain_eps = 1e-9;

    bool operator==(const SpecConfig&) const = default;
};

struct SolverConfig {
    double tol = 1e-10;
    double z_far = 40.0;
    double z0 = 1.0;
    double r_lo = 1.0, r_hi = 2.5;
    int r_rows = 201;
    double r1_lo = -1.0, r1_hi = 3.0;
    int r1_cols = 41;
    std::vector<double> slope_tols{1e-3, 1e-4, 1e-5};
    double end_tol = 1e-13;  // inward integration of the conical end
    double z_join = 200.0;

    bool operator==(const SolverConfig&) const = default;
};

struct FlowConfig {
    double dx = 0.1;
    double cfl_max = 0.2;
    double t_min = -1.0;
    double t_max = -0.5;
    int snapshots = 11;
    double z_lo = 1.0, z_hi = 6.0;  // simulated patch in profile height

    bool operator==(const FlowConfig&) const = default;
};

struct CarlemanConfig {
    std::vector<double> M{1.0, 4.0, 16.0};
    std::vector<double> tau{0.25, 1.0};
    double R = 10.0;
    int nodes = 8;
    double z_lo = 6.0, z_hi = 20.0;
    int points = 281;
    int slices = 41;
    int draws = 100;
    int levels = 3;  // identity refinement levels
    double id_z_lo = 2.0, id_z_hi = 10.0;  // identity patch in profile height

    bool operator==(const CarlemanConfig&) const = default;
};

struct RunConfig {
    SpecConfig spec;
    ConeSpec cone;
    SolverConfig solver;
    FlowConfig flow;
    CarlemanConfig carleman;
    std::string output_dir = "out";
    std::uint64_t seed = 20240611;

    bool operator==(const RunConfig& o) const {
        return spec == o.spec && cone.n == o.cone.n && cone.sigma == o.cone.sigma &&
               cone.orientation == o.cone.orientation && solver == o.solver && flow == o.flow &&
               carleman == o.carleman && output_dir == o.output_dir && seed == o.seed;
    }
};

namespace detail {

inline void reject_unknown(const Json& j, const std::string& where, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(where.empty() ? "<root>" : where, "expected an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError(where.empty() ? k : where + "." + k, "unknown key");
}

inline std::string join(const std::string& where, const char* key) { return where.empty() ? key : where + "." + key; }

inline double get_number(const Json& j, const std::string& where, const char* key, double def) {
    if (!j.contains(key)) return def;
    const auto& v = j.at(key);
    if (!v.is_number()) throw ConfigError(join(where, key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(join(where, key), "must be finite");
    return x;
}

inline int get_int(const Json& j, const std::string& where, const char* key, int def) {
    if (!j.contains(key)) return def;
    const auto& v = j.at(key);
    if (!v.is_number_integer()) throw ConfigError(join(where, key), "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
        throw ConfigError(join(where, key), "integer out of range");
    return static_cast<int>(x);
}

inline std::vector<double> get_list(const Json& j, const std::string& where, const char* key, std::vector<double> def) {
    if (!j.contains(key)) return def;
    const auto& v = j.at(key);
    if (!v.is_array() || v.empty()) throw ConfigError(join(where, key), "expected a non-empty array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError(join(where, key), "expected a non-empty array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

inline void get_pair(const Json& j, const std::string& where, const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto v = get_list(j, where, key, {});
    if (v.size() != 2) throw ConfigError(join(where, key), "expected [lo, hi]");
    lo = v[0];
    hi = v[1];
}

inline void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ConfigError(field, what);
}

}  // namespace detail

inline void validate(const RunConfig& c) {
    using detail::require;
    const auto& s = c.spec;
    require(s.name == "E1" || s.name == "E1_plus_eps" || s.name == "E1_minus_eps", "spec.name",
            "must be E1, E1_plus_eps or E1_minus_eps");
    if (s.name == "E1") require(s.eps == 0.0, "spec.params.eps", "not a parameter of E1");
    else require(s.eps > 0.0 && s.eps <= 1.0, "spec.params.eps", "must lie in (0, 1]");
    require(s.domain_eps > 0.0 && s.domain_eps < 1.0, "spec.params.domain_eps", "must lie in (0, 1)");
    require(c.cone.n >= 2 && c.cone.n <= 8, "cone.n", "must lie in [2, 8]");
    require(c.cone.sigma > 0.0 && c.cone.sigma <= 100.0, "cone.sigma", "must lie in (0, 100]");
    require(c.cone.orientation == 1 || c.cone.orientation == -1, "cone.orientation", "must be 1 or -1");
    const auto& v = c.solver;
    require(v.tol >= 1e-14 && v.tol <= 1e-4, "solver.tol", "must lie in [1e-14, 1e-4]");
    require(v.end_tol >= 1e-14 && v.end_tol <= 1e-4, "solver.end_tol", "must lie in [1e-14, 1e-4]");
    require(v.z0 > 0.0, "solver.z0", "must be > 0");
    require(v.z_far > 2.0 * v.z0, "solver.z_far", "must exceed 2 z0");
    require(v.z_join > v.z_far, "solver.z_join", "must exceed z_far");
    require(v.r_lo > 0.0 && v.r_hi > v.r_lo, "solver.r_bracket", "must satisfy 0 < lo < hi");
    require(v.r1_hi > v.r1_lo, "solver.r1_bracket", "must satisfy lo < hi");
    require(v.r_rows >= 2 && v.r_rows <= 100000, "solver.r_rows", "must lie in [2, 100000]");
    require(v.r1_cols >= 2 && v.r1_cols <= 100000, "solver.r1_cols", "must lie in [2, 100000]");
    for (double t : v.slope_tols) require(t > 0.0 && t < 1.0, "solver.slope_tols", "entries must lie in (0, 1)");
    const auto& f = c.flow;
    require(f.dx > 0.0 && f.dx <= 1.0, "flow.dx", "must lie in (0, 1]");
    require(f.cfl_max > 0.0 && f.cfl_max <= 0.5, "flow.cfl_max", "must lie in (0, 0.5]");
    require(f.t_min < 0.0, "flow.t_min", "must be < 0");
    require(f.t_max > f.t_min && f.t_max < 0.0, "flow.t_max", "must lie in (t_min, 0)");
    require(f.snapshots >= 3 && f.snapshots <= 10000, "flow.snapshots", "must lie in [3, 10000]");
    require(f.z_lo > 0.0 && f.z_hi > f.z_lo + 10.0 * f.dx, "flow.z_range", "must hold at least 10 cells above 0");
    const auto& k = c.carleman;
    for (double M : k.M) require(M >= 1.0, "carleman.M", "entries must be >= 1");
    for (double t : k.tau) require(t > 0.0 && t <= 1.0, "carleman.tau", "entries must lie in (0, 1]");
    require(k.R > 0.0, "carleman.R", "must be > 0");
    require(k.nodes == 4 || k.nodes == 8 || k.nodes == 16 || k.nodes == 32, "carleman.nodes", "must be 4, 8, 16 or 32");
    require(k.z_lo > 0.0 && k.z_hi > k.z_lo, "carleman.z_range", "must satisfy 0 < lo < hi");
    require(k.points >= 21 && k.points <= 100001, "carleman.points", "must lie in [21, 100001]");
    require(k.slices >= 3 && k.slices <= 10001, "carleman.slices", "must lie in [3, 10001]");
    require(k.draws >= 0 && k.draws <= 100000, "carleman.draws", "must lie in [0, 100000]");
    require(k.levels >= 2 && k.levels <= 5, "carleman.levels", "must lie in [2, 5]");
    require(k.id_z_lo > 0.0 && k.id_z_hi > k.id_z_lo, "carleman.identity_z_range", "must satisfy 0 < lo < hi");
    require(!c.output_dir.empty(), "output_dir", "must be non-empty");
}

inline RunConfig config_from_json(const Json& j) {
    using namespace detail;
    reject_unknown(j, "", {"spec", "cone", "solver", "flow", "carleman", "output_dir", "seed"});
    RunConfig c;
    if (!j.contains("spec")) throw ConfigError("spec", "required");
    const auto& js = j.at("spec");
    if (js.is_string()) {
        c.spec.name = js.get<std::string>();
    } else {
        reject_unknown(js, "spec", {"name", "params"});
        if (!js.contains("name") || !js.at("name").is_string()) throw ConfigError("spec.name", "required string");
        c.spec.name = js.at("name").get<std::string>();
        if (js.contains("params")) {
            const auto& p = js.at("params");
            reject_unknown(p, "spec.params", {"eps", "domain_eps"});
            c.spec.eps = get_number(p, "spec.params", "eps", c.spec.eps);
            c.spec.domain_eps = get_number(p, "spec.params", "domain_eps", c.spec.domain_eps);
        }
    }
    if (!j.contains("cone")) throw ConfigError("cone", "required");
    const auto& jc = j.at("cone");
    reject_unknown(jc, "cone", {"n", "sigma", "orientation"});
    if (!jc.contains("n")) throw ConfigError("cone.n", "required");
    if (!jc.contains("sigma")) throw ConfigError("cone.sigma", "required");
    c.cone.n = get_int(jc, "cone", "n", 2);
    c.cone.sigma = get_number(jc, "cone", "sigma", 1.0);
    c.cone.orientation = get_int(jc, "cone", "orientation", 1);
    if (j.contains("solver")) {
        const auto& v = j.at("solver");
        reject_unknown(v, "solver",
                       {"tol", "z_far", "z0", "r_bracket", "r_rows", "r1_bracket", "r1_cols", "slope_tols", "end_tol",
                        "z_join"});
        auto& s = c.solver;
        s.tol = get_number(v, "solver", "tol", s.tol);
        s.z_far = get_number(v, "solver", "z_far", s.z_far);
        s.z0 = get_number(v, "solver", "z0", s.z0);
        get_pair(v, "solver", "r_bracket", s.r_lo, s.r_hi);
        s.r_rows = get_int(v, "solver", "r_rows", s.r_rows);
        get_pair(v, "solver", "r1_bracket", s.r1_lo, s.r1_hi);
        s.r1_cols = get_int(v, "solver", "r1_cols", s.r1_cols);
        s.slope_tols = get_list(v, "solver", "slope_tols", s.slope_tols);
        s.end_tol = get_number(v, "solver", "end_tol", s.end_tol);
        s.z_join = get_number(v, "solver", "z_join", s.z_join);
    }
    if (j.contains("flow")) {
        const auto& v = j.at("flow");
        reject_unknown(v, "flow", {"dx", "cfl_max", "t_min", "t_max", "snapshots", "z_range"});
        auto& f = c.flow;
        f.dx = get_number(v, "flow", "dx", f.dx);
        f.cfl_max = get_number(v, "flow", "cfl_max", f.cfl_max);
        f.t_min = get_number(v, "flow", "t_min", f.t_min);
        f.t_max = get_number(v, "flow", "t_max", f.t_max);
        f.snapshots = get_int(v, "flow", "snapshots", f.snapshots);
        get_pair(v, "flow", "z_range", f.z_lo, f.z_hi);
    }
    if (j.contains("carleman")) {
        const auto& v = j.at("carleman");
        reject_unknown(v, "carleman", {"M", "tau", "R", "nodes", "z_range", "points", "slices", "draws", "levels",
                                             "identity_z_range"});
        auto& k = c.carleman;
        k.M = get_list(v, "carleman", "M", k.M);
        k.tau = get_list(v, "carleman", "tau", k.tau);
        k.R = get_number(v, "carleman", "R", k.R);
        k.nodes = get_int(v, "carleman", "nodes", k.nodes);
        get_pair(v, "carleman", "z_range", k.z_lo, k.z_hi);
        k.points = get_int(v, "carleman", "points", k.points);
        k.slices = get_int(v, "carleman", "slices", k.slices);
        k.draws = get_int(v, "carleman", "draws", k.draws);
        k.levels = get_int(v, "carleman", "levels", k.levels);
        get_pair(v, "carleman", "identity_z_range", k.id_z_lo, k.id_z_hi);
    }
    if (j.contains("output_dir")) {
        if (!j.at("output_dir").is_string()) throw ConfigError("output_dir", "expected a string");
        c.output_dir = j.at("output_dir").get<std::string>();
    }
    if (j.contains("seed")) {
        const auto& v = j.at("seed");
        if (!v.is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
        c.seed = v.get<std::uint64_t>();
    }
    validate(c);
    return c;
}

inline Json config_to_json(const RunConfig& c) {
    Json spec{{"name", c.spec.name}, {"params", Json::object()}};
    if (c.spec.name != "E1") spec["params"]["eps"] = c.spec.eps;
    spec["params"]["domain_eps"] = c.spec.domain_eps;
    const auto& s = c.solver;
    const auto& f = c.flow;
    const auto& k = c.carleman;
    return Json{
        {"spec", spec},
        {"cone", {{"n", c.cone.n}, {"sigma", c.cone.sigma}, {"orientation", c.cone.orientation}}},
        {"solver",
         {{"tol", s.tol},
          {"z_far", s.z_far},
          {"z0", s.z0},
          {"r_bracket", {s.r_lo, s.r_hi}},
          {"r_rows", s.r_rows},
          {"r1_bracket", {s.r1_lo, s.r1_hi}},
          {"r1_cols", s.r1_cols},
          {"slope_tols", s.slope_tols},
          {"end_tol", s.end_tol},
          {"z_join", s.z_join}}},
        {"flow",
         {{"dx", f.dx},
          {"cfl_max", f.cfl_max},
          {"t_min", f.t_min},
          {"t_max", f.t_max},
          {"snapshots", f.snapshots},
          {"z_range", {f.z_lo, f.z_hi}}}},
        {"carleman",
         {{"M", k.M},
          {"tau", k.tau},
          {"R", k.R},
          {"nodes", k.nodes},
          {"z_range", {k.z_lo, k.z_hi}},
          {"points", k.points},
          {"slices", k.slices},
          {"draws", k.draws},
          {"levels", k.levels},
          {"identity_z_range", {k.id_z_lo, k.id_z_hi}}}},
        {"output_dir", c.output_dir},
        {"seed", c.seed}};
}

inline Json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError("<root>", origin + " is not valid JSON: " + e.what());
    }
}

// Throws std::ios_base::failure for an unreadable file and ConfigError for schema violations.
inline RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(parse_json_text(ss.str(), path.string()));
}

inline void write_config_echo(const RunConfig& c, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "config.json");
    if (!out) throw std::ios_base::failure("cannot write " + (dir / "config.json").string());
    out << config_to_json(c).dump(2) << "\n";
}

inline CurvatureSpec make_spec(const RunConfig& c) {
    if (c.spec.name == "E1") return mean_curvature_spec(c.cone.n);
    return eps_family_spec(c.cone.n, c.spec.eps, c.spec.name == "E1_plus_eps" ? 1 : -1, c.spec.domain_eps);
}

}  // namespace fshrink
