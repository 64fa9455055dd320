#include "mfl/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mfl {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

double to_double(const std::string& v, const std::string& where) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(where + ": invalid number '" + v + "'");
    }
}

std::size_t to_size(const std::string& v, const std::string& where) {
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size() || x < 0) throw std::invalid_argument("bad");
        return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
        throw ConfigError(where + ": invalid non-negative integer '" + v + "'");
    }
}

std::uint64_t to_u64(const std::string& v, const std::string& where) {
    try {
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("bad");
        return static_cast<std::uint64_t>(x);
    } catch (const std::exception&) {
        throw ConfigError(where + ": invalid 64-bit unsigned value '" + v + "'");
    }
}

bool to_bool(const std::string& v, const std::string& where) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(where + ": invalid boolean '" + v + "'");
}

} // namespace

std::vector<double> parse_double_list(const std::string& s, const char* what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError(std::string(what) + ": empty list entry");
        out.push_back(to_double(item, what));
    }
    if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& s, const char* what) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError(std::string(what) + ": empty list entry");
        out.push_back(to_size(item, what));
    }
    if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
    return out;
}

SchemeConfig parse_config_text(const std::string& text, const std::string& origin) {
    SchemeConfig cfg;
    std::set<std::string> seen;
    std::string section;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;

    auto fail = [&](const std::string& msg) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + msg);
    };

    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']') fail("malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            static const std::set<std::string> known = {"spectrum", "noise", "drift", "measure", "run"};
            if (!known.count(section)) fail("unknown section [" + section + "]");
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) fail("expected 'key = value'");
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (key.empty()) fail("empty key");
        if (section.empty()) fail("key '" + key + "' outside any section");
        const std::string full = section + "." + key;
        if (!seen.insert(full).second) fail("duplicate key '" + full + "'");
        const std::string where = origin + ":" + std::to_string(lineno) + " " + full;

        if (full == "spectrum.dim") cfg.dim = to_size(val, where);
        else if (full == "spectrum.lambda") cfg.lambda_spec = val;
        else if (full == "spectrum.kappa") cfg.kappa = to_double(val, where);
        else if (full == "noise.B") cfg.b_spec = val;
        else if (full == "noise.Q") cfg.q_spec = val;
        else if (full == "drift.name") cfg.drift_name = val;
        else if (full == "drift.v") cfg.drift_v = val;
        else if (full == "drift.w") cfg.drift_w = val;
        else if (full == "drift.bump") cfg.drift_bump = to_double(val, where);
        else if (full == "measure.atoms") cfg.measure_atoms = val;
        else if (full == "measure.weights") cfg.measure_weights = val;
        else if (full == "run.scheme") cfg.scheme = val;
        else if (full == "run.dt") cfg.dt = to_double(val, where);
        else if (full == "run.T") cfg.horizon = to_double(val, where);
        else if (full == "run.particles") cfg.particles = to_size(val, where);
        else if (full == "run.seed") cfg.seed = to_u64(val, where);
        else if (full == "run.quad_order") cfg.quad_order = to_size(val, where);
        else if (full == "run.out") cfg.out_dir = val;
        else if (full == "run.functional") cfg.functional = val;
        else if (full == "run.levels") cfg.levels = val;
        else if (full == "run.diverge_n") cfg.diverge_n = val;
        else if (full == "run.dt_list") cfg.dt_list = val;
        else if (full == "run.reps") cfg.reps = to_size(val, where);
        else if (full == "run.fd_eps") cfg.fd_eps = to_double(val, where);
        else if (full == "run.gamma") cfg.gamma = to_double(val, where);
        else if (full == "run.delta") cfg.delta = to_double(val, where);
        else if (full == "run.initial") cfg.initial = val;
        else if (full == "run.initial_scale") cfg.initial_scale = to_double(val, where);
        else if (full == "run.initial_mean1") cfg.initial_mean1 = to_double(val, where);
        else if (full == "run.observe_w2") cfg.observe_w2 = to_bool(val, where);
        else if (full == "run.verify") cfg.verify = val;
        else if (full == "run.fd_fallback") cfg.fd_fallback = to_bool(val, where);
        else fail("unknown key '" + full + "'");
    }
    return cfg;
}

SchemeConfig parse_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str(), path);
}

void apply_overrides(SchemeConfig& cfg, const CliOverrides& ov) {
    if (!ov.dt.empty()) cfg.dt = to_double(ov.dt, "--dt");
    if (!ov.particles.empty()) cfg.particles = to_size(ov.particles, "--particles");
    if (!ov.seed.empty()) cfg.seed = to_u64(ov.seed, "--seed");
    if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
}

Spectrum build_spectrum(const SchemeConfig& cfg) {
    if (cfg.dim == 0) throw ConfigError("spectrum.dim must be positive");
    if (cfg.lambda_spec == "dirichlet") return Spectrum::dirichlet(cfg.dim, cfg.kappa);
    std::vector<double> lam = parse_double_list(cfg.lambda_spec, "spectrum.lambda");
    if (lam.size() != cfg.dim) throw ConfigError("spectrum.lambda length does not match dim");
    return Spectrum(std::move(lam), cfg.kappa);
}

DiagOperator build_diag(const std::string& spec, std::size_t dim, const char* what) {
    std::vector<double> vals = parse_double_list(spec, what);
    if (vals.size() == 1) return DiagOperator::constant(dim, vals[0]);
    if (vals.size() != dim) throw ConfigError(std::string(what) + " length does not match dim");
    return DiagOperator(std::move(vals));
}

MfSpdeProblem build_problem(const SchemeConfig& cfg) {
    MfSpdeProblem prob;
    prob.spectrum = build_spectrum(cfg);
    prob.b_op = build_diag(cfg.b_spec, cfg.dim, "noise.B");
    prob.q_op = build_diag(cfg.q_spec, cfg.dim, "noise.Q");
    if (cfg.drift_name != "tanh-bump") throw ConfigError("unknown drift fixture: " + cfg.drift_name);
    prob.drift = MeanFieldDrift::tanh_bump(cfg.dim);
    if (cfg.drift_v != "default") {
        prob.drift.v = parse_double_list(cfg.drift_v, "drift.v");
        if (prob.drift.v.size() != cfg.dim) throw ConfigError("drift.v length does not match dim");
    }
    if (cfg.drift_w != "default") {
        prob.drift.w = parse_double_list(cfg.drift_w, "drift.w");
        if (prob.drift.w.size() != cfg.dim) throw ConfigError("drift.w length does not match dim");
    }
    if (cfg.drift_bump != 2.0) prob.drift.psi = ScalarC2::gauss_bump(cfg.drift_bump);
    prob.horizon = cfg.horizon;
    prob.gamma = cfg.gamma;
    prob.delta = cfg.delta;
    if (cfg.initial == "zero") prob.init.kind = InitialCondition::Kind::Zero;
    else if (cfg.initial == "stationary") prob.init.kind = InitialCondition::Kind::Stationary;
    else if (cfg.initial == "gauss") prob.init.kind = InitialCondition::Kind::Gauss;
    else throw ConfigError("unknown initial condition: " + cfg.initial);
    prob.init.scale = cfg.initial_scale;
    prob.init.mean1 = cfg.initial_mean1;
    return prob;
}

bool has_measure(const SchemeConfig& cfg) { return !cfg.measure_atoms.empty(); }

DiscreteMeasure build_measure(const SchemeConfig& cfg) {
    if (!has_measure(cfg)) throw ConfigError("missing [measure] atoms");
    std::vector<std::vector<double>> atoms;
    std::stringstream ss(cfg.measure_atoms);
    std::string item;
    while (std::getline(ss, item, ';')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("measure.atoms: empty atom");
        atoms.push_back(parse_double_list(item, "measure.atoms"));
    }
    std::vector<double> w;
    if (cfg.measure_weights.empty()) {
        w.assign(atoms.size(), 1.0 / static_cast<double>(atoms.size()));
    } else {
        w = parse_double_list(cfg.measure_weights, "measure.weights");
    }
    return DiscreteMeasure(std::move(atoms), std::move(w));
}

} // namespace mfl
