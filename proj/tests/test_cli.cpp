// CLI contract checks driven through the installed binary (argv[1]).
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mfl/config.hpp"

namespace {

std::string g_tool;
std::filesystem::path g_dir;

int run(const std::string& cmdline) {
    const int rc = std::system(cmdline.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write(const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p);
    f << text;
}

} // namespace

TEST_CASE("flag overrides beat file values") {
    mfl::SchemeConfig cfg = mfl::parse_config_text("[run]\ndt = 0.1\nseed = 9\n");
    mfl::apply_overrides(cfg, {"0.01", "", "77", ""});
    CHECK(cfg.dt == doctest::Approx(0.01));
    CHECK(cfg.seed == 77);
    CHECK(cfg.particles == 256); // unset override leaves the file/default value

    CHECK_THROWS_AS(mfl::apply_overrides(cfg, {"abc", "", "", ""}), mfl::ConfigError);
}

TEST_CASE("exit codes and outputs") {
    const auto cfg_bad = g_dir / "bad.ini";
    write(cfg_bad, "[run]\nnot_a_key = 1\n");
    CHECK(run(g_tool + " simulate --config " + cfg_bad.string() + " 2>/dev/null") == 2);

    CHECK(run(g_tool + " frobnicate 2>/dev/null") == 2);

    const auto cfg_ok = g_dir / "ok.ini";
    write(cfg_ok, "[spectrum]\ndim = 2\n\n[run]\ndt = 0.1\nT = 0.25\nparticles = 16\nseed = 5\n");
    // dt = 0.1 does not divide T = 0.25: config error from the simulator
    CHECK(run(g_tool + " simulate --config " + cfg_ok.string() + " --out " + (g_dir / "o0").string() +
              " 2>/dev/null") == 2);

    // the --dt flag overrides the file and makes the run valid; 8 steps + initial row + header
    CHECK(run(g_tool + " simulate --config " + cfg_ok.string() + " --dt 0.03125 --out " +
              (g_dir / "o1").string() + " >/dev/null 2>&1") == 0);
    const std::string csv = slurp(g_dir / "o1" / "simulate.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);
    CHECK(csv.rfind("step,t,mean_mode_0,mean_mode_1,mean_sq_norm,w2_to_init", 0) == 0);

    // diverge writes the documented table and exits 0 on a passing bound
    const auto cfg_div = g_dir / "div.ini";
    write(cfg_div, "[run]\ndiverge_n = 4, 16\n");
    CHECK(run(g_tool + " diverge --config " + cfg_div.string() + " --out " + (g_dir / "o2").string() +
              " >/dev/null 2>&1") == 0);
    const std::string div = slurp(g_dir / "o2" / "diverge.csv");
    CHECK(div.rfind("n,S_n,sqrt_ln_n,pass", 0) == 0);
}

TEST_CASE("lderiv emits the per-atom table") {
    const auto cfg = g_dir / "lderiv.ini";
    write(cfg,
          "[measure]\natoms = 0.2; 0.5; 0.8\nweights = 0.25, 0.5, 0.25\n\n"
          "[run]\nfunctional = gausscdf\n");
    CHECK(run(g_tool + " lderiv --config " + cfg.string() + " --out " + (g_dir / "o3").string() +
              " >/dev/null 2>&1") == 0);
    const std::string csv = slurp(g_dir / "o3" / "lderiv.csv");
    CHECK(csv.rfind("atom_id,coord_0,op_norm,closedform_norm,abs_err", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: test_cli <path-to-mfspde>\n");
        return 1;
    }
    g_tool = argv[1];
    g_dir = std::filesystem::temp_directory_path() / "mfspde_cli_test";
    std::filesystem::remove_all(g_dir);
    std::filesystem::create_directories(g_dir);
    doctest::Context ctx;
    return ctx.run();
}
