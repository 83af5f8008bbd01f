// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Usage: acceptance [work_dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "marsnav/cli.hpp"
#include "marsnav/filters/covariance_matching.hpp"
#include "marsnav/filters/unscented.hpp"
#include "marsnav/filters/uskf_nn.hpp"

using namespace marsnav;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// ---- pinned tolerances ----------------------------------------------------
constexpr double kC1MinFracBelow1Pct = 0.95;
constexpr double kC1MaxSeconds = 600.0;
constexpr double kC2MaxNnRmspePct = 5.0;
constexpr double kC2MinAcOverNn = 5.0;
constexpr double kC2MaxSeconds = 1800.0;
constexpr double kC4MinCoverage = 0.90;
constexpr double kC5MaxRelError = 1e-6;
constexpr int kC5Trials = 10;
constexpr double kC6AffineTol = 1e-10;
constexpr double kC6WeightSumTol = 1e-14;
constexpr double kC8Tol = 1e-10;
constexpr double kC9RelTol = 0.5;
constexpr int kC9Steps = 2000;
constexpr int kC10Runs = 3;

struct Outcome {
    int id;
    bool pass;
    std::string detail;
};
std::vector<Outcome> g_results;

void report(int id, bool pass, const std::string& detail) {
    g_results.push_back({id, pass, detail});
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << detail << std::endl;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int cli_run(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"marsnav"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data(), std::cout, std::cerr);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Default configuration with paths redirected into the work directory.
fs::path write_config(const fs::path& work, const fs::path& name, const json& overrides = json::object()) {
    json cfg = json::parse(slurp(fs::path(MARSNAV_SOURCE_DIR) / "config" / "default.json"));
    cfg["paths"]["atmosphere_dir"] = (work / "atmos").string();
    cfg["paths"]["network"] = (work / "network.json").string();
    cfg["paths"]["output_dir"] = (work / "out").string();
    cfg.merge_patch(overrides);
    const fs::path p = work / name;
    std::ofstream(p) << cfg.dump(2) << '\n';
    return p;
}

// ---- criteria 1-4, 7 ------------------------------------------------------

void pipeline(const fs::path& work, const fs::path& cfg) {
    if (cli_run({"gen-atmos", "--config", cfg.string()}) != 0) {
        report(1, false, "gen-atmos failed");
        return;
    }

    auto t0 = std::chrono::steady_clock::now();
    const int rc_train = cli_run({"train", "--config", cfg.string()});
    const double t_train = seconds_since(t0);
    if (rc_train != 0) {
        report(1, false, "train exited with " + std::to_string(rc_train));
    } else {
        const json rep = json::parse(slurp(work / "network_report.json"));
        const double frac = rep["validation_frac_below_1pct"].get<double>();
        report(1, frac >= kC1MinFracBelow1Pct && t_train < kC1MaxSeconds,
               fmt("validation samples below 1%% error = %.4f (need >= %.2f); train time %.1f s (need < %.0f s)",
                   frac, kC1MinFracBelow1Pct, t_train, kC1MaxSeconds));
    }

    t0 = std::chrono::steady_clock::now();
    const int rc_mc = cli_run({"montecarlo", "--config", cfg.string()});
    const double t_mc = seconds_since(t0);
    const fs::path sp = work / "out" / "summary.json";
    if (!fs::is_regular_file(sp)) {
        for (int id : {2, 3, 4, 7}) report(id, false, "montecarlo produced no summary (exit " + std::to_string(rc_mc) + ")");
        return;
    }
    const json s = json::parse(slurp(sp));
    const json& f = s["filters"];
    const int n_runs = s["n_runs"].get<int>();

    const double nn = f["uskf_nn"]["rmspe_pct"].get<double>();
    const double ac = f["ukf_ac"]["rmspe_pct"].get<double>();
    const double cm = f["ukf_cm"]["rmspe_pct"].get<double>();
    report(2, nn < kC2MaxNnRmspePct && ac >= kC2MinAcOverNn * nn && t_mc < kC2MaxSeconds && n_runs == 100,
           fmt("%.0f runs: RMSPE USKF-NN %.4f%% (need < 5%%), UKF-AC %.4f%%, UKF-CM %.4f%%; ", n_runs, nn, ac, cm) +
               fmt("AC/NN ratio %.2f (need >= %.0f); ", ac / nn, kC2MinAcOverNn) +
               fmt("runtime %.1f s (need < %.0f s)", t_mc, kC2MaxSeconds));

    bool ordered = true;
    std::string d3;
    for (const char* k : {"r_m", "theta_deg", "v_ms", "gamma_deg"}) {
        const double a = f["uskf_nn"]["rmse"][k].get<double>();
        const double b = f["ukf_ac"]["rmse"][k].get<double>();
        const double c = f["ukf_cm"]["rmse"][k].get<double>();
        ordered = ordered && a < b && a < c;
        d3 += std::string(k) + fmt(" nn=%.4g ac=%.4g cm=%.4g; ", a, b, c);
    }
    report(3, ordered, "time-averaged RMSE " + d3);

    const double cv = f["uskf_nn"]["coverage_3sigma"]["v_ms"].get<double>();
    const double cb = f["uskf_nn"]["coverage_3sigma"]["B_m2kg"].get<double>();
    report(4, cv >= kC4MinCoverage && cb >= kC4MinCoverage,
           fmt("USKF-NN 3-sigma coverage v = %.4f, B = %.4f (need >= %.2f)", cv, cb, kC4MinCoverage));

    const long viol = f["uskf_nn"]["consider_violations"].get<long>();
    const int ok = f["uskf_nn"]["runs_ok"].get<int>();
    report(7, viol == 0 && ok == n_runs,
           fmt("consider violations (c_hat != 1 or P_c changed by an update) = %.0f over %.0f/%.0f completed runs",
               static_cast<double>(viol), ok, n_runs));
}

// ---- criterion 5 ----------------------------------------------------------

MlpDensityNet perturbed(const MlpDensityNet& base, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 0.05);
    ParamVec p = base.params();
    for (int i = 0; i < kNumParams; ++i) p[i] += g(rng);
    MlpDensityNet n = base;
    n.set_params(p);
    return n;
}

template <class F>
ParamVec central_diff(const MlpDensityNet& n, F f) {
    const ParamVec p = n.params();
    ParamVec out;
    for (int i = 0; i < kNumParams; ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(p[i]));
        MlpDensityNet a = n, b = n;
        ParamVec pa = p, pb = p;
        pa[i] += h;
        pb[i] -= h;
        a.set_params(pa);
        b.set_params(pb);
        out[i] = (f(a) - f(b)) / (2.0 * h);
    }
    return out;
}

void criterion5(const fs::path& work) {
    MlpDensityNet base;
    if (fs::is_regular_file(work / "network.json")) {
        base = load_network(work / "network.json");
    } else {
        std::mt19937_64 init(1);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int j = 0; j < kHidden; ++j) base.w_in[j] = u(init), base.b_in[j] = u(init), base.w_out[j] = 0.1 * u(init);
        base.r_mean = kMarsRadius + 60e3;
        base.r_std = 40e3;
        base.varrho_mean = 2.0;
        base.varrho_std = 0.5;
    }
    const VehicleConfig veh;
    const Eigen::Matrix3d tvb = velocity_to_body(veh);
    const ExpModel nom;
    auto rho_nom = [&nom](double r) { return exp_density(nom, r); };
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> t_pre(40.0, 250.0), scale(0.6, 1.6);
    double worst_rho = 0.0, worst_loss = 0.0;
    for (int trial = 0; trial < kC5Trials; ++trial) {
        const MlpDensityNet n = perturbed(base, rng);
        const StateVec x = propagate(EntryDistribution{}.mean.vec(), t_pre(rng), 200, rho_nom, veh);
        const double r = x[ix::r];
        const DensityGradient dg = density_gradient(n, r);
        const ParamVec fd_rho = central_diff(n, [r](const MlpDensityNet& m) { return density_forward(m, r); });
        worst_rho = std::max(worst_rho, (fd_rho - dg.grad).norm() / dg.grad.norm());

        const MeasVec y = measure_vec(x, scale(rng) * dg.rho, veh, tvb);
        const MeasMat Ri = build_R(y, NoiseSpec{}).inverse();
        const filters::LossGradient lg = filters::mlo_loss_gradient(n, x, y, Ri, veh, tvb);
        const ParamVec fd_loss =
            central_diff(n, [&](const MlpDensityNet& m) { return filters::mlo_loss(m, x, y, Ri, veh, tvb); });
        worst_loss = std::max(worst_loss, (fd_loss - lg.grad).norm() / lg.grad.norm());
    }
    report(5, worst_rho < kC5MaxRelError && worst_loss < kC5MaxRelError,
           fmt("%.0f random nets/states: max relative error density gradient %.3g, MLO loss gradient %.3g (need < %.0e)",
               kC5Trials, worst_rho, worst_loss, kC5MaxRelError));
}

// ---- criterion 6 ----------------------------------------------------------

void criterion6() {
    using namespace filters;
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g;
    double worst_mean = 0.0, worst_cov = 0.0, worst_sum = 0.0;
    for (int L = 1; L <= 12; ++L) {
        worst_sum = std::max(worst_sum, std::abs(sigma_weights(L, UtConfig{}).wm.sum() - 1.0));
        const int M = 4;
        Eigen::MatrixXd A(M, L), S(L, L);
        Eigen::VectorXd b(M), x(L);
        for (int i = 0; i < M; ++i) {
            b[i] = g(rng);
            for (int j = 0; j < L; ++j) A(i, j) = g(rng);
        }
        for (int i = 0; i < L; ++i) {
            x[i] = g(rng);
            for (int j = 0; j < L; ++j) S(i, j) = g(rng);
        }
        const Eigen::MatrixXd P = S * S.transpose() + 0.1 * Eigen::MatrixXd::Identity(L, L);
        const SigmaSet s = sigma_points(x, P, UtConfig{});
        Eigen::MatrixXd Y(M, s.points.cols());
        for (Eigen::Index i = 0; i < s.points.cols(); ++i) Y.col(i) = A * s.points.col(i) + b;
        const Eigen::VectorXd ym = weighted_mean(Y, s.w.wm);
        const Eigen::MatrixXd Pyy = weighted_cross(Y, ym, Y, ym, s.w.wc);
        worst_mean = std::max(worst_mean, (ym - (A * x + b)).cwiseAbs().maxCoeff());
        worst_cov = std::max(worst_cov, (Pyy - A * P * A.transpose()).cwiseAbs().maxCoeff());
    }
    const SigmaWeights w9 = sigma_weights(9, UtConfig{});
    bool consts = w9.wm[0] == -2.0 && w9.wc[0] == 0.0;
    for (int i = 1; i < 19; ++i) consts = consts && std::abs(w9.wm[i] - 1.0 / 6.0) < 1e-15;
    report(6, worst_mean < kC6AffineTol && worst_cov < kC6AffineTol && worst_sum < kC6WeightSumTol && consts,
           fmt("affine UT max error mean %.3g, cov %.3g (need < 1e-10); |sum w_m - 1| max %.3g (need < 1e-14); ",
               worst_mean, worst_cov, worst_sum) +
               fmt("L=9: w_m0 = %g, w_c0 = %g, w_i = %.17g", w9.wm[0], w9.wc[0], w9.wm[1]));
}

// ---- criterion 8 ----------------------------------------------------------

void criterion8() {
    Eigen::VectorXd theta(1), grad(1);
    theta << 1.0;
    grad << 2.0;
    AdamState st;
    st.beta1 = 0.1;
    st.beta2 = 0.9;
    st.eps = 1e-8;
    st.prime(grad);
    const bool init_ok = st.m[0] == 0.0 && st.v[0] == 4.0;
    adam_step(theta, grad, st, 0.01);
    const double expected = 1.0 - 0.01 * 1.8 / (std::sqrt(4.0) + 1e-8);
    const bool ok = init_ok && theta[0] == expected && std::abs(theta[0] - 0.991) < kC8Tol &&
                    std::abs(st.m[0] - 1.8) < 1e-15 && st.v[0] == 4.0;
    report(8, ok,
           std::string("first use sets m = 0, v = g^2 = 4: ") + (init_ok ? "yes" : "no") +
               fmt("; theta' = %.15f (hand value 1 - 0.01*1.8/(2+1e-8) = %.15f, |theta' - 0.991| < 1e-10)", theta[0],
                   expected));
}

// ---- criterion 9 ----------------------------------------------------------

void criterion9() {
    const double q_true = 0.04, r_meas = 0.01;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    filters::ProcessNoiseMatcher m(10);
    double x = 0.0, xh = 0.0, P = 1.0, Q = 1.0, sum = 0.0;
    int n = 0;
    for (int k = 0; k < kC9Steps; ++k) {
        x += std::sqrt(q_true) * g(rng);
        const double y = x + std::sqrt(r_meas) * g(rng);
        const double xp = xh, Pp = P + Q;
        const double K = Pp / (Pp + r_meas);
        xh = xp + K * (y - xp);
        P = (1.0 - K) * Pp;
        m.push(Eigen::VectorXd::Constant(1, xp), Eigen::VectorXd::Constant(1, xh), Eigen::MatrixXd::Constant(1, 1, Pp),
               Eigen::MatrixXd::Constant(1, 1, Q), Eigen::MatrixXd::Constant(1, 1, P));
        if (auto q = m.estimate()) {
            Q = (*q)(0, 0);
            sum += Q;
            ++n;
        }
    }
    const double avg = sum / n;
    report(9, std::abs(avg - q_true) <= kC9RelTol * q_true,
           fmt("1-D linear system, %.0f steps, window 10: time-averaged Q_hat = %.5f vs true %.2f (relative error %.3f, need <= 0.5)",
               kC9Steps, avg, q_true, std::abs(avg - q_true) / q_true));
}

// ---- criterion 10 ---------------------------------------------------------

void criterion10(const fs::path& work) {
    const fs::path cfg = write_config(work, "config_det.json",
                                      {{"training", {{"trajectories", 20}, {"epochs", 20}, {"duration_s", 100}}}});
    std::vector<std::string> diffs;
    auto same = [&](const fs::path& a, const fs::path& b, const std::string& what) {
        if (!fs::is_regular_file(a) || slurp(a) != slurp(b)) diffs.push_back(what);
    };
    const fs::path d = work / "det";
    fs::remove_all(d);
    for (const char* run : {"1", "2"}) {
        const fs::path o = d / run;
        cli_run({"gen-atmos", "--config", cfg.string(), "--out", (o / "atmos").string()});
        cli_run({"fit-exp", "--config", cfg.string(), "--out", (o / "exp_fit.json").string()});
        cli_run({"train", "--config", cfg.string(), "--out", (o / "net.json").string()});
        cli_run({"montecarlo", "--config", cfg.string(), "--runs", std::to_string(kC10Runs), "--seed", "42", "--out",
                 (o / "mc").string()});
        cli_run({"simulate", "--config", cfg.string(), "--seed", "42", "--out", (o / "sim").string()});
    }
    same(d / "1" / "atmos" / "manifest.json", d / "2" / "atmos" / "manifest.json", "gen-atmos manifest");
    same(d / "1" / "atmos" / cli::profile_name(7, 0), d / "2" / "atmos" / cli::profile_name(7, 0), "gen-atmos profile");
    same(d / "1" / "exp_fit.json", d / "2" / "exp_fit.json", "fit-exp");
    same(d / "1" / "net.json", d / "2" / "net.json", "train network");
    same(d / "1" / "net_report.json", d / "2" / "net_report.json", "train report");
    same(d / "1" / "mc" / "summary.json", d / "2" / "mc" / "summary.json", "montecarlo summary");
    same(d / "1" / "mc" / "rmse_series.csv", d / "2" / "mc" / "rmse_series.csv", "montecarlo series");
    same(d / "1" / "sim" / "summary.json", d / "2" / "sim" / "summary.json", "simulate summary");
    std::string detail = "reran gen-atmos, fit-exp, train, montecarlo (" + std::to_string(kC10Runs) +
                         " runs), simulate with identical config+seed: ";
    if (diffs.empty()) {
        detail += "all outputs byte-identical";
    } else {
        detail += "differences in";
        for (const auto& s : diffs) detail += " [" + s + "]";
    }
    report(10, diffs.empty(), detail);
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "marsnav_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);
    const fs::path cfg = write_config(work, "config.json");

    const auto t0 = std::chrono::steady_clock::now();
    pipeline(work, cfg);
    criterion5(work);
    criterion6();
    criterion8();
    criterion9();
    criterion10(work);

    std::sort(g_results.begin(), g_results.end(), [](const Outcome& a, const Outcome& b) { return a.id < b.id; });
    int failed = 0;
    json out = json::array();
    std::cout << "\n==== acceptance summary (" << fmt("%.0f s", seconds_since(t0)) << ") ====\n";
    for (const auto& r : g_results) {
        std::cout << (r.pass ? "PASS" : "FAIL") << " criterion " << r.id << ": " << r.detail << '\n';
        failed += r.pass ? 0 : 1;
        out.push_back({{"criterion", r.id}, {"pass", r.pass}, {"detail", r.detail}});
    }
    std::ofstream(work / "acceptance.json") << out.dump(2) << '\n';
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
