#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfl/measure.hpp"
#include "mfl/sde.hpp"
#include "mfl/spectral.hpp"

namespace mfl {

// Strict `key = value` config under `[section]` headers. Unknown sections or
// keys, duplicate keys and lines without `=` are fatal, with line numbers.
// `#` starts a comment line.
struct SchemeConfig {
    // [spectrum]
    std::size_t dim = 1;
    std::string lambda_spec = "dirichlet"; // or comma list
    double kappa = 0.0;

    // [noise]
    std::string b_spec = "1";
    std::string q_spec = "1";

    // [drift]
    std::string drift_name = "tanh-bump";
    std::string drift_v = "default";
    std::string drift_w = "default";
    double drift_bump = 2.0;

    // [measure]
    std::string measure_atoms; // "a,b;c,d" atoms separated by ';'
    std::string measure_weights;

    // [run]
    std::string scheme = "exp-euler";
    double dt = 0.01;
    double horizon = 1.0;
    std::size_t particles = 256;
    std::uint64_t seed = 12345;
    std::size_t quad_order = 4;
    std::string out_dir = ".";
    std::string functional = "linear:square";
    std::string levels = "1,2,4,8,16,32,64";
    std::string diverge_n = "4,16,64,256";
    std::string dt_list; // empty = subcommand default
    std::size_t reps = 8;
    double fd_eps = 1e-4;
    double gamma = 0.25;
    double delta = 0.25;
    std::string initial = "stationary"; // zero | stationary | gauss
    double initial_scale = 1.0;
    double initial_mean1 = 0.0;
    bool observe_w2 = true;
    std::string verify = "mild"; // flow | mild
    bool fd_fallback = false;
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

SchemeConfig parse_config(const std::string& path);
SchemeConfig parse_config_text(const std::string& text, const std::string& origin = "<memory>");

// command-line values override file values; empty strings leave the config alone
struct CliOverrides {
    std::string dt;
    std::string particles;
    std::string seed;
    std::string out_dir;
};

void apply_overrides(SchemeConfig& cfg, const CliOverrides& ov);

std::vector<double> parse_double_list(const std::string& s, const char* what);
std::vector<std::size_t> parse_size_list(const std::string& s, const char* what);

Spectrum build_spectrum(const SchemeConfig& cfg);
DiagOperator build_diag(const std::string& spec, std::size_t dim, const char* what);
MfSpdeProblem build_problem(const SchemeConfig& cfg);
DiscreteMeasure build_measure(const SchemeConfig& cfg);
bool has_measure(const SchemeConfig& cfg);

} // namespace mfl
