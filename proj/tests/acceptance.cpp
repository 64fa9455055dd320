// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exit code 0 iff all pass.
// argv[1] (optional) is the path to the mfspde binary for the determinism
// criterion; without it that criterion is exercised at the library level.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mfl/csv.hpp"
#include "mfl/ito.hpp"
#include "mfl/lions.hpp"
#include "mfl/measure.hpp"
#include "mfl/rng.hpp"
#include "mfl/sde.hpp"
#include "mfl/spectral.hpp"
#include "mfl/zoo.hpp"

using namespace mfl;

namespace {

int g_failures = 0;

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

void report(const char* id, bool pass, const std::string& detail, double seconds) {
    std::printf("[%s] %s %s (%.1fs)\n", pass ? "PASS" : "FAIL", id, detail.c_str(), seconds);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

// random discrete measure with rationalizable weights and well-separated atoms
DiscreteMeasure random_measure(RngStream& rng, std::size_t dim, double lo, double hi) {
    const std::size_t n_atoms = 2 + rng.next_u64() % 9; // 2..10
    std::vector<std::vector<double>> atoms;
    while (atoms.size() < n_atoms) {
        std::vector<double> a(dim);
        for (double& c : a) c = lo + (hi - lo) * rng.next_uniform();
        bool ok = true;
        for (const auto& b : atoms) {
            double gap = 0.0;
            for (std::size_t k = 0; k < dim; ++k) gap = std::max(gap, std::abs(a[k] - b[k]));
            if (gap < 0.02) ok = false;
        }
        if (dim == 1 && (std::abs(a[0]) < 1e-3 || std::abs(a[0] - 1.0) < 1e-3)) ok = false;
        if (ok) atoms.push_back(a);
    }
    std::vector<std::size_t> counts(n_atoms);
    std::size_t total = 0;
    for (auto& c : counts) {
        c = 1 + rng.next_u64() % 8;
        total += c;
    }
    std::vector<double> w(n_atoms);
    for (std::size_t k = 0; k < n_atoms; ++k)
        w[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
    return DiscreteMeasure(atoms, w);
}

Ensemble realize(const DiscreteMeasure& mu, std::size_t target) {
    std::vector<std::size_t> counts = rationalize_weights(mu.weights);
    std::size_t den = 0;
    for (std::size_t c : counts) den += c;
    const std::size_t mult = std::max<std::size_t>(1, target / den);
    for (std::size_t& c : counts) c *= mult;
    return Ensemble::from_measure_counts(mu, counts);
}

// -------------------------------------------------------------------------
// criterion 1: factorization identity
// -------------------------------------------------------------------------
void criterion1() {
    Timer timer;
    RngStream rng = spawn_stream(101, 0);
    const FDParams p;
    double worst = 0.0;

    auto run = [&](const LiftFunctional& f, std::size_t dim, double lo, double hi, int measures) {
        for (int m = 0; m < measures; ++m) {
            const DiscreteMeasure mu = random_measure(rng, dim, lo, hi);
            const Ensemble x = realize(mu, 512);
            std::vector<std::vector<double>> ys;
            for (int t = 0; t < 3; ++t) {
                std::vector<double> y(x.particles.size());
                for (double& c : y) c = rng.next_normal();
                ys.push_back(std::move(y));
            }
            worst = std::max(worst, factorization_check(f, x, ys, p));
        }
    };
    run(make_linear_functional("square", 1), 1, -1.2, 2.2, 20);
    run(GaussCdf{}.functional(), 1, -1.2, 2.2, 20);
    run(MeanFieldDrift::tanh_bump(3).functional(), 3, -1.0, 1.0, 20);

    report("C1 factorization-identity", worst < 1e-4,
           "max residual " + fmt(worst) + " < 1e-4 on 60 random measures", timer.seconds());
}

// -------------------------------------------------------------------------
// criterion 2: disintegration / conditional scaling
// -------------------------------------------------------------------------
void criterion2() {
    Timer timer;
    RngStream rng = spawn_stream(202, 0);
    const FDParams p;
    double worst = 0.0;
    double worst_half = 0.0;
    int pairs = 0;

    std::vector<LiftFunctional> fs;
    fs.push_back(make_linear_functional("square", 1));
    fs.push_back(make_linear_functional("tanh", 1));
    fs.push_back(GaussCdf{}.functional());
    fs.push_back(MeanFieldDrift::tanh_bump(2).functional());

    while (pairs < 50) {
        const LiftFunctional& f = fs[pairs % fs.size()];
        const std::size_t dim = f.dim_h;
        const DiscreteMeasure mu = random_measure(rng, dim, dim == 1 ? -1.2 : -1.0, dim == 1 ? 2.2 : 1.0);
        const Ensemble x = realize(mu, 64);

        // half-atom event: first half of the particles of atom 0
        std::vector<std::size_t> atom0;
        for (std::size_t j = 0; j < x.n; ++j)
            if (x.atom_index[j] == 0) atom0.push_back(j);
        if (atom0.size() >= 2) {
            std::vector<std::size_t> half(atom0.begin(),
                                          atom0.begin() + static_cast<std::ptrdiff_t>(atom0.size() / 2));
            const OperatorSample ma = event_operator(f, x, half, p);
            const OperatorSample mfull = event_operator(f, x, atom0, p);
            const double frac = static_cast<double>(half.size()) / static_cast<double>(atom0.size());
            worst_half = std::max(worst_half, u_operator_norm(f, ma - frac * mfull));
            worst = std::max(worst, disintegration_check(f, x, half, p).residual);
            ++pairs;
        }

        // random event across atoms
        std::vector<std::size_t> ev;
        for (std::size_t j = 0; j < x.n; ++j)
            if (rng.next_u64() % 2 == 0) ev.push_back(j);
        worst = std::max(worst, disintegration_check(f, x, ev, p).residual);
        ++pairs;
    }

    const bool pass = worst < 1e-5 && worst_half < 1e-5;
    report("C2 disintegration", pass,
           "max residual " + fmt(worst) + ", half-atom gap " + fmt(worst_half) + " < 1e-5 on 50 pairs",
           timer.seconds());
}

// -------------------------------------------------------------------------
// criterion 3: norm identity via the 2-variation estimate
// -------------------------------------------------------------------------
void criterion3() {
    Timer timer;
    RngStream rng = spawn_stream(303, 0);
    std::vector<double> flat(512);
    for (double& c : flat) c = rng.next_uniform();
    const Ensemble x(1, flat);
    const LiftFunctional f = make_linear_functional("square", 1);
    const auto est = two_variation_estimate(f, x, {64}, FDParams{});

    double target = 0.0;
    for (double c : flat) target += 4.0 * c * c;
    target = std::sqrt(target / 512.0);

    const double lb = est[0].lower_bound;
    const bool pass = lb > 0.95 * target && lb < target + 1e-6;
    report("C3 norm-identity", pass,
           "two-variation bound " + fmt(lb) + " within 5% of " + fmt(target) + " and never above",
           timer.seconds());
}

// -------------------------------------------------------------------------
// criterion 4: counterexample divergence
// -------------------------------------------------------------------------
void criterion4() {
    Timer timer;
    const DivergenceResult res = divergence_diagnostic({4, 16, 64, 256});
    bool pass = true;
    for (const auto& row : res.rows) pass = pass && row.pass;
    for (std::size_t i = 0; i + 1 < res.rows.size(); ++i)
        pass = pass && res.rows[i + 1].s_n >= res.rows[i].s_n;

    RngStream rng = spawn_stream(404, 0);
    double worst_quad = 0.0;
    for (int t = 0; t < 100; ++t) {
        const double x = rng.next_normal();
        double u = 0.01 + 2.1 * rng.next_uniform();
        if (std::abs(u - 1.0) < 1e-6) u += 1e-3;
        worst_quad = std::max(worst_quad,
                              std::abs(prodmaj_kernel(x, x + u) - prodmaj_unsigned_quad(x, x + u)));
    }
    pass = pass && worst_quad < 1e-5;

    const double pi = 3.14159265358979323846;
    const double lim_lo = prodmaj_kernel(0.0, 1.0 - 1e-14);
    const double lim_hi = prodmaj_kernel(0.0, 1.0 + 1e-14);
    pass = pass && std::abs(lim_lo - pi) < 1e-6 && std::abs(lim_hi - pi) < 1e-6;

    std::string detail = "S_n >= sqrt(ln n):";
    for (const auto& row : res.rows) detail += " " + fmt(row.s_n) + ">=" + fmt(row.sqrt_log_n);
    detail += ", kernel-vs-quadrature " + fmt(worst_quad);
    report("C4 counterexample-divergence", pass, detail, timer.seconds());
}

// -------------------------------------------------------------------------
// criterion 5: closed-form derivative oracles vs FD
// -------------------------------------------------------------------------
void criterion5() {
    Timer timer;
    RngStream rng = spawn_stream(505, 0);
    const FDParams p;
    double worst = 0.0;

    GaussCdf gc;
    const LiftFunctional fg = gc.functional();
    for (int m = 0; m < 20; ++m) {
        const DiscreteMeasure mu = random_measure(rng, 1, -1.2, 2.2);
        const RnEstimate est = discrete_rn(fg, mu, p);
        for (std::size_t k = 0; k < est.mu.size(); ++k) {
            const double cf = gc.deriv(est.mu, est.mu.atoms[k][0]);
            const double rel = std::abs(est.rn[k](0, 0) - cf) / std::max(0.01, std::abs(cf));
            worst = std::max(worst, rel);
        }
    }

    const MeanFieldDrift drift = MeanFieldDrift::tanh_bump(3);
    const LiftFunctional fd = drift.functional();
    for (int m = 0; m < 20; ++m) {
        const DiscreteMeasure mu = random_measure(rng, 3, -1.0, 1.0);
        const RnEstimate est = discrete_rn(fd, mu, p);
        const double s = drift.mean_psi_measure(mu);
        for (std::size_t k = 0; k < est.mu.size(); ++k) {
            const OperatorSample cf = drift.dmu(s, est.mu.atoms[k].data());
            const double rel = frobenius_norm(est.rn[k] - cf) / std::max(0.01, frobenius_norm(cf));
            worst = std::max(worst, rel);
        }
    }

    report("C5 closed-form-oracles", worst < 1e-4,
           "max relative FD gap " + fmt(worst) + " < 1e-4 at 40 random measures", timer.seconds());
}

// -------------------------------------------------------------------------
// criterion 6: Ito residual convergence
// -------------------------------------------------------------------------
void criterion6() {
    Timer timer;
    const std::vector<double> dts{1.0 / 128, 1.0 / 256, 1.0 / 512, 1.0 / 1024};
    const std::size_t n = 512, reps = 24;

    TestFunctional122 flow_f;
    flow_f.alpha = 1.0;
    flow_f.phi = ScalarC2::constant(1.0);
    PiecewiseProcess proc;
    proc.breakpoints = {0.0, 0.125};
    proc.b_values = {std::vector<double>(8, 0.4), std::vector<double>(8, -0.2)};
    proc.sigma_values = {std::vector<double>(8, 0.5), std::vector<double>(8, 0.8)};
    proc.q_diag.assign(8, 1.0);
    const ItoStudyResult flow = flow_ito_study(proc, flow_f, 0.25, dts, n, reps, 606);

    MfSpdeProblem prob;
    prob.spectrum = Spectrum::dirichlet(8, 0.0);
    prob.b_op = DiagOperator::constant(8, 1.0);
    prob.q_op = DiagOperator::constant(8, 1.0);
    prob.drift = MeanFieldDrift::tanh_bump(8);
    prob.init.mean1 = 0.7;
    prob.horizon = 0.25;
    TestFunctional122 mild_f;
    mild_f.alpha = 1.0;
    const ItoStudyResult mild = mild_ito_study(prob, mild_f, 0.25, dts, n, reps, 606);

    auto monotone = [&](const ItoStudyResult& st) {
        for (std::size_t i = 0; i + 1 < st.rows.size(); ++i) {
            const double se =
                (st.rows[i].sd_residual + st.rows[i + 1].sd_residual) / std::sqrt(double(reps));
            if (st.rows[i + 1].mean_residual > st.rows[i].mean_residual + 2.0 * se) return false;
        }
        return true;
    };
    const bool pass = flow.fitted_rate >= 0.7 && mild.fitted_rate >= 0.7 && monotone(flow) &&
                      monotone(mild);
    report("C6 ito-residuals", pass,
           "flow rate " + fmt(flow.fitted_rate) + ", mild rate " + fmt(mild.fitted_rate) +
               " >= 0.7, monotone within 2 se",
           timer.seconds());
}

// -------------------------------------------------------------------------
// criterion 7: second-order Taylor scheme order
// -------------------------------------------------------------------------
void criterion7() {
    Timer timer;
    MfSpdeProblem prob;
    prob.spectrum = Spectrum::dirichlet(16, 0.0);
    prob.b_op = DiagOperator::constant(16, 1.0);
    prob.q_op = DiagOperator::constant(16, 1.0);
    prob.drift = MeanFieldDrift::tanh_bump(16);
    prob.drift.v[0] = 5.0;
    prob.drift.psi = ScalarC2::gauss_bump(2.5);
    prob.init.mean1 = 0.7;
    prob.horizon = 1.0;
    prob.gamma = 0.25;

    // declared (gamma, delta) come from the (R0) quadrature check
    const R0Report r0 = r0_check(prob.spectrum, prob.b_op, prob.gamma, 1.0);
    prob.delta = r0.delta_hat;
    const double threshold = 2.0 + std::min(r0.delta_hat, prob.gamma) - 0.3;

    const std::vector<double> dts{0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625};
    const StudyResult res = local_error_study(prob, dts, 1024, 32, 4, 42);

    const bool pass = res.slope_taylor2 >= threshold && res.slope_taylor2 > res.slope_euler;
    report("C7 taylor-scheme-order", pass,
           "taylor slope " + fmt(res.slope_taylor2) + " >= " + fmt(threshold) + " (delta_hat " +
               fmt(r0.delta_hat) + ") and > euler slope " + fmt(res.slope_euler),
           timer.seconds());
}

// -------------------------------------------------------------------------
// criterion 8: byte-identical determinism across thread counts
// -------------------------------------------------------------------------
std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void criterion8(const char* tool) {
    Timer timer;
    if (!tool) {
        report("C8 determinism", false, "mfspde binary path not supplied", timer.seconds());
        return;
    }
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "mfspde_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const fs::path cfg = dir / "run.ini";
    {
        std::ofstream f(cfg);
        f << "[spectrum]\ndim = 6\n\n[run]\ndt = 0.03125\nT = 0.25\nparticles = 96\nseed = 2024\n"
          << "levels = 1, 2, 4, 8\nfunctional = linear:square\ndiverge_n = 4, 16\n";
    }

    bool pass = true;
    std::string detail;
    for (const char* sub : {"simulate", "twovar", "diverge"}) {
        const fs::path out1 = dir / (std::string(sub) + "_t1");
        const fs::path out2 = dir / (std::string(sub) + "_t4");
        const std::string base = std::string(tool) + " " + sub + " --config " + cfg.string();
        const std::string c1 = "MFSPDE_THREADS=1 " + base + " --out " + out1.string() + " >/dev/null 2>&1";
        const std::string c2 = "MFSPDE_THREADS=4 " + base + " --out " + out2.string() + " >/dev/null 2>&1";
        const int r1 = std::system(c1.c_str());
        const int r2 = std::system(c2.c_str());
        const std::string csv_name = std::string(sub) + ".csv";
        const std::string b1 = slurp((out1 / csv_name).string());
        const std::string b2 = slurp((out2 / csv_name).string());
        const bool same = r1 == r2 && !b1.empty() && b1 == b2;
        if (!same) {
            pass = false;
            detail += std::string(" [") + sub + " differs]";
        }
    }
    report("C8 determinism", pass, "simulate/twovar/diverge byte-identical across MFSPDE_THREADS" + detail,
           timer.seconds());
}

} // namespace

int main(int argc, char** argv) {
    const char* tool = argc > 1 ? argv[1] : nullptr;
    try {
        criterion1();
        criterion2();
        criterion3();
        criterion4();
        criterion5();
        criterion6();
        criterion7();
        criterion8(tool);
    } catch (const std::exception& e) {
        std::printf("[FAIL] acceptance aborted: %s\n", e.what());
        return 1;
    }
    if (g_failures == 0) {
        std::printf("acceptance: all criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criteria FAILED\n", g_failures);
    return 1;
}
