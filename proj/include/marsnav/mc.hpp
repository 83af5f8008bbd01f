#ifndef MARSNAV_MC_HPP
#define MARSNAV_MC_HPP

// Monte Carlo harness: per-run truth and measurement synthesis, the three
// filters on a shared measurement stream, and error statistics.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "marsnav/atmos.hpp"
#include "marsnav/dynamics.hpp"
#include "marsnav/error.hpp"
#include "marsnav/filters/ukf_ac.hpp"
#include "marsnav/filters/ukf_cm.hpp"
#include "marsnav/filters/unscented.hpp"
#include "marsnav/filters/uskf_nn.hpp"
#include "marsnav/net.hpp"
#include "marsnav/random.hpp"
#include "marsnav/sensors.hpp"

namespace marsnav {

enum class FilterId { ukf_cm = 0, ukf_ac = 1, uskf_nn = 2 };
inline constexpr int kNumFilters = 3;
inline constexpr const char* kFilterNames[kNumFilters] = {"ukf_cm", "ukf_ac", "uskf_nn"};

/// Keys and reporting scale (SI, angles in degrees) of each state.
inline constexpr const char* kStateKeys[kStateDim] = {"r_m",       "phi_deg", "theta_deg", "v_ms",
                                                       "gamma_deg", "psi_deg", "B_m2kg",    "LoD"};
inline StateVec report_scale() {
    const double d = rad2deg(1.0);
    return (StateVec() << 1.0, d, d, 1.0, d, d, 1.0, 1.0).finished();
}

/// Filter selection from names such as {"ukf_cm", "uskf_nn"}.
inline std::array<bool, kNumFilters> parse_filter_list(const std::vector<std::string>& names) {
    std::array<bool, kNumFilters> on{false, false, false};
    for (const auto& n : names) {
        bool found = false;
        for (int f = 0; f < kNumFilters; ++f)
            if (n == kFilterNames[f]) on[f] = found = true;
        if (!found) throw ConfigError("unknown filter '" + n + "' (expected ukf_cm, ukf_ac, uskf_nn)");
    }
    if (!on[0] && !on[1] && !on[2]) throw ConfigError("at least one filter must be selected");
    return on;
}

/// Index offset separating test-atmosphere seeds from training ones.
inline constexpr std::uint64_t kTestAtmosphereIndex = std::uint64_t{1} << 32;

enum class TruthModel { surrogate, nominal };

struct McConfig {
    int n_runs = 100;
    double t_end = 350.0;      ///< s
    double sensor_hz = 4.0;
    double truth_dt = 0.05;    ///< s
    int filter_substeps = 5;   ///< RK4 steps per filter propagation
    std::uint64_t seed = 42;
    int threads = 0;           ///< 0: hardware concurrency

    EntryDistribution entry;
    bool disperse_aero_truth = false;  ///< also disperse truth B and L/D
    /// Process noise, 3-sigma per sensor interval.
    StateVec q_sigma3 = (StateVec() << 0.0, 0.0, 0.0, 0.3, deg2rad(2e-3), deg2rad(2e-4), 1e-5, 3e-5)
                            .finished();
    bool truth_process_noise = true;
    NoiseSpec noise;
    bool measurement_noise = true;
    TruthModel truth_model = TruthModel::surrogate;
    AtmosphereGenConfig atmosphere;
    VehicleConfig vehicle;

    std::array<bool, kNumFilters> enabled{true, true, true};
    filters::UtConfig ut;
    filters::MloConfig mlo;
    filters::EcrvConfig ecrv;
    filters::AcConfig ac;
    std::size_t cm_window = 10;
    bool cm_keep_off_diagonal = false;

    double epoch_dt() const { return 1.0 / sensor_hz; }
    int n_epochs() const { return static_cast<int>(std::llround(t_end * sensor_hz)); }
    int truth_steps_per_epoch() const { return static_cast<int>(std::llround(epoch_dt() / truth_dt)); }
    StateMat Q() const { return (q_sigma3 / 3.0).array().square().matrix().asDiagonal(); }

    void validate() const {
        if (n_runs < 1) throw ConfigError("montecarlo: n_runs must be >= 1");
        if (!(sensor_hz > 0.0)) throw ConfigError("montecarlo: sensor_hz must be positive");
        if (!(t_end > 0.0)) throw ConfigError("montecarlo: t_end must be positive");
        if (!(truth_dt > 0.0) || truth_dt > epoch_dt()) throw ConfigError("montecarlo: bad truth_dt");
        if (std::abs(epoch_dt() / truth_dt - truth_steps_per_epoch()) > 1e-9)
            throw ConfigError("montecarlo: sensor interval must be a multiple of truth_dt");
        if (filter_substeps < 1) throw ConfigError("montecarlo: filter_substeps must be >= 1");
        if (threads < 0) throw ConfigError("montecarlo: threads must be >= 0");
        if ((q_sigma3.array() < 0.0).any() || (entry.sigma3.array() < 0.0).any())
            throw ConfigError("montecarlo: standard deviations must be >= 0");
        if (noise.sigma_accel < 0.0 || noise.frac_q < 0.0 || noise.frac_qdot < 0.0)
            throw ConfigError("montecarlo: measurement noise must be >= 0");
        if (cm_window < 2) throw ConfigError("montecarlo: cm_window must be >= 2");
        if (mlo.p_max < 1 || mlo.max_iters < 0 || !(mlo.lr0 > 0.0))
            throw ConfigError("montecarlo: invalid MLO settings");
        if (ac.q_k < 0.0 || ac.p_k0 < 0.0) throw ConfigError("montecarlo: invalid AC settings");
        ecrv.validate();
        validate_atmosphere();
    }
    void validate_atmosphere() const { marsnav::validate(atmosphere); }
};

/// Onboard models shared by every run.
struct McModels {
    ExpModel nominal;       ///< exponential fit used by UKF-CM and UKF-AC
    MlpDensityNet network;  ///< trained network used by USKF-NN
};

struct InitialState {
    StateVec truth;
    StateVec estimate;
    StateMat P0;
};

/// Truth drawn around the entry means, filter estimate drawn around the
/// truth with the diagonal P0 of the entry distribution.
inline InitialState sample_initial_state(const McConfig& cfg, Rng& rng) {
    StateVec mask = StateVec::Ones();
    if (!cfg.disperse_aero_truth) mask[ix::B] = mask[ix::LoD] = 0.0;
    InitialState s;
    s.truth = cfg.entry.sample(rng, mask);
    s.estimate = cfg.entry.sample_around(s.truth, rng);
    s.P0 = cfg.entry.sigma().array().square().matrix().asDiagonal();
    return s;
}

struct EpochLog {
    double t = 0.0;
    StateVec x_hat = StateVec::Zero();
    StateVec sigma = StateVec::Zero();
    double rho_hat = 0.0;
    double loss_pre = std::numeric_limits<double>::quiet_NaN();
    double loss_post = std::numeric_limits<double>::quiet_NaN();
    int mlo_iters = 0;
};

struct FilterTrace {
    bool enabled = false;
    bool ok = false;
    std::string error;
    std::vector<EpochLog> epochs;
    long skipped_updates = 0;
    long mlo_aborts = 0;
    long consider_violations = 0;  ///< updates where c_hat != 1 or P_c changed
    long updates = 0;
};

struct RunResult {
    int index = 0;
    std::uint64_t seed = 0;
    bool truth_ok = false;
    std::string error;
    std::vector<TruthSample> truth;  ///< t = 0 followed by each epoch
    std::vector<MeasurementSample> measurements;
    std::array<FilterTrace, kNumFilters> filters;
};

inline std::uint64_t run_seed(const McConfig& cfg, int index) {
    return derive_seed(cfg.seed, 0, static_cast<std::uint64_t>(index));
}

namespace detail {

inline StateVec sqrt_diag(const StateMat& P) { return P.diagonal().cwiseMax(0.0).cwiseSqrt(); }

template <class Step>
void run_filter(FilterTrace& tr, const RunResult& run, double dt, Step&& step) {
    tr.enabled = true;
    tr.epochs.reserve(run.measurements.size());
    try {
        for (std::size_t k = 0; k < run.measurements.size(); ++k) {
            EpochLog e;
            e.t = run.measurements[k].t;
            step(run.measurements[k].y, dt, e);
            if (!e.x_hat.allFinite() || !e.sigma.allFinite() || !std::isfinite(e.rho_hat))
                throw Error("non-finite estimate at t = " + std::to_string(e.t));
            tr.epochs.push_back(e);
        }
        tr.ok = true;
    } catch (const std::exception& ex) {
        tr.ok = false;
        tr.error = ex.what();
    }
}

}  // namespace detail

/// One Monte Carlo case. Deterministic in (cfg, models, index).
inline RunResult run_case(const McConfig& cfg, const McModels& models, int index) {
    RunResult run;
    run.index = index;
    run.seed = run_seed(cfg, index);
    const VehicleConfig& veh = cfg.vehicle;

    Rng ic_rng(derive_seed(run.seed, stream::kInitialState));
    const InitialState init = sample_initial_state(cfg, ic_rng);

    TabulatedProfile profile;
    if (cfg.truth_model == TruthModel::surrogate) {
        profile = sample_truth_atmosphere(
            derive_seed(run.seed, stream::kAtmosphere, kTestAtmosphereIndex), cfg.atmosphere);
    } else {
        // Nominal model tabulated on the generator grid.
        std::vector<double> r, d;
        for (double alt = cfg.atmosphere.alt_min; alt <= cfg.atmosphere.alt_max + 1e-9;
             alt += cfg.atmosphere.spacing) {
            r.push_back(cfg.atmosphere.r0 + alt);
            d.push_back(exp_density(models.nominal, r.back()));
        }
        profile = TabulatedProfile(std::move(r), std::move(d));
    }

    TruthPropagation tp;
    tp.dt = cfg.truth_dt;
    tp.steps_per_epoch = cfg.truth_steps_per_epoch();
    tp.t_end = cfg.n_epochs() * cfg.epoch_dt();
    if (cfg.truth_process_noise) tp.q_sigma = cfg.q_sigma3 / 3.0;
    try {
        run.truth = propagate_truth(EntryState::from(init.truth), profile, veh, tp,
                                    derive_seed(run.seed, stream::kProcessNoise));
    } catch (const std::exception& ex) {
        run.error = std::string("truth: ") + ex.what();
        return run;
    }
    run.truth_ok = true;

    Rng meas_rng(derive_seed(run.seed, stream::kMeasurementNoise));
    const NoiseSpec& noise = cfg.noise;
    run.measurements.reserve(run.truth.size() - 1);
    for (std::size_t k = 1; k < run.truth.size(); ++k) {
        const auto& ts = run.truth[k];
        const EntryState s = EntryState::from(ts.x);
        const Measurement m = cfg.measurement_noise ? measure_noisy(s, ts.rho, veh, noise, meas_rng)
                                                    : measure_ideal(s, ts.rho, veh);
        run.measurements.push_back({ts.t, m.vec()});
    }

    const double dt = cfg.epoch_dt();
    const int sub = cfg.filter_substeps;
    const StateMat Q = cfg.Q();

    if (cfg.enabled[0]) {
        auto st = filters::make_cm_state(init.estimate, init.P0, Q, models.nominal, cfg.cm_window,
                                           cfg.cm_keep_off_diagonal);
        auto& tr = run.filters[0];
        detail::run_filter(tr, run, dt, [&](const MeasVec& y, double h, EpochLog& e) {
            const auto res = filters::ukf_cm_step(st, y, h, sub, noise, cfg.ut, veh);
            tr.skipped_updates += res.applied ? 0 : 1;
            e.x_hat = st.x_hat();
            e.sigma = detail::sqrt_diag(st.P());
            e.rho_hat = st.density_estimate();
        });
    }
    if (cfg.enabled[1]) {
        const double k0 = run.truth.front().rho / exp_density(models.nominal, init.truth[ix::r]);
        auto st = filters::make_ac_state(init.estimate, init.P0, k0, models.nominal, cfg.ac);
        auto& tr = run.filters[1];
        detail::run_filter(tr, run, dt, [&](const MeasVec& y, double h, EpochLog& e) {
            const auto res = filters::ukf_ac_step(st, y, h, sub, Q, noise, cfg.ut, cfg.ac, veh);
            tr.skipped_updates += res.applied ? 0 : 1;
            e.x_hat = st.x_hat();
            e.sigma = detail::sqrt_diag(st.P());
            e.rho_hat = st.density_estimate();
        });
    }
    if (cfg.enabled[2]) {
        auto st = filters::make_consider_state(init.estimate, init.P0, models.network, cfg.ecrv, cfg.mlo);
        auto& tr = run.filters[2];
        detail::run_filter(tr, run, dt, [&](const MeasVec& y, double h, EpochLog& e) {
            const auto log =
                filters::uskf_nn_step(st, y, h, sub, Q, noise, cfg.ecrv, cfg.ut, cfg.mlo, veh);
            ++tr.updates;
            tr.skipped_updates += log.update.applied ? 0 : 1;
            tr.mlo_aborts += log.mlo.aborted ? 1 : 0;
            if (st.c_hat != 1.0 || std::memcmp(&st.P_c, &log.P_c_prior, sizeof(double)) != 0)
                ++tr.consider_violations;
            e.x_hat = st.x_hat;
            e.sigma = detail::sqrt_diag(st.P);
            e.rho_hat = st.density_estimate();
            e.loss_pre = log.mlo.loss_pre;
            e.loss_post = log.mlo.loss_post;
            e.mlo_iters = log.mlo.iterations;
        });
    }
    return run;
}

// ---- metrics ----------------------------------------------------------------

/// Literal time-averaged RMSE: per epoch the mean over runs of |x - x_hat|,
/// then the mean over epochs. Inputs are [run][epoch].
struct StateErrorStats {
    std::vector<StateVec> series;
    StateVec average = StateVec::Zero();
};

inline StateErrorStats compute_rmse(const std::vector<std::vector<StateVec>>& truth,
                                    const std::vector<std::vector<StateVec>>& estimate) {
    if (truth.size() != estimate.size() || truth.empty())
        throw Error("compute_rmse: run count mismatch or empty");
    const std::size_t nk = truth.front().size();
    for (std::size_t j = 0; j < truth.size(); ++j)
        if (truth[j].size() != nk || estimate[j].size() != nk)
            throw Error("compute_rmse: epoch count mismatch");
    StateErrorStats out;
    out.series.assign(nk, StateVec::Zero());
    for (std::size_t k = 0; k < nk; ++k) {
        for (std::size_t j = 0; j < truth.size(); ++j)
            out.series[k] += (truth[j][k] - estimate[j][k]).cwiseAbs();
        out.series[k] /= static_cast<double>(truth.size());
        out.average += out.series[k];
    }
    if (nk > 0) out.average /= static_cast<double>(nk);
    return out;
}

struct ScalarErrorStats {
    std::vector<double> series;
    double average = 0.0;
};

/// Time-averaged RMSPE in percent, evaluated literally.
inline ScalarErrorStats compute_rmspe(const std::vector<std::vector<double>>& rho_true,
                                      const std::vector<std::vector<double>>& rho_hat) {
    if (rho_true.size() != rho_hat.size() || rho_true.empty())
        throw Error("compute_rmspe: run count mismatch or empty");
    const std::size_t nk = rho_true.front().size();
    ScalarErrorStats out;
    out.series.assign(nk, 0.0);
    for (std::size_t j = 0; j < rho_true.size(); ++j) {
        if (rho_true[j].size() != nk || rho_hat[j].size() != nk)
            throw Error("compute_rmspe: epoch count mismatch");
        for (std::size_t k = 0; k < nk; ++k) {
            if (!(rho_true[j][k] > 0.0)) throw Error("compute_rmspe: true density must be positive");
            out.series[k] += std::abs((rho_true[j][k] - rho_hat[j][k]) / rho_true[j][k]);
        }
    }
    for (auto& s : out.series) {
        s *= 100.0 / static_cast<double>(rho_true.size());
        out.average += s;
    }
    if (nk > 0) out.average /= static_cast<double>(nk);
    return out;
}

/// Fraction of (run, epoch) pairs with |error| <= 3 sigma, per state.
inline StateVec coverage_3sigma(const std::vector<std::vector<StateVec>>& errors,
                                const std::vector<std::vector<StateVec>>& sigmas) {
    if (errors.size() != sigmas.size()) throw Error("coverage_3sigma: run count mismatch");
    StateVec hits = StateVec::Zero();
    double n = 0.0;
    for (std::size_t j = 0; j < errors.size(); ++j) {
        if (errors[j].size() != sigmas[j].size()) throw Error("coverage_3sigma: epoch count mismatch");
        for (std::size_t k = 0; k < errors[j].size(); ++k) {
            hits += (errors[j][k].cwiseAbs().array() <= 3.0 * sigmas[j][k].array()).cast<double>().matrix();
            n += 1.0;
        }
    }
    if (n == 0.0) throw Error("coverage_3sigma: no samples");
    return hits / n;
}

// ---- report -----------------------------------------------------------------

struct FilterSummary {
    bool enabled = false;
    int runs_ok = 0;
    int runs_failed = 0;
    StateErrorStats rmse;
    ScalarErrorStats rmspe;
    StateVec coverage = StateVec::Zero();
    long consider_violations = 0;
    long skipped_updates = 0;
    std::vector<std::string> failures;  ///< "run N: message"
};

struct McReport {
    int n_runs = 0;
    std::uint64_t seed = 0;
    int truth_failures = 0;
    std::vector<double> t;  ///< epoch times
    std::array<FilterSummary, kNumFilters> filters;
    std::vector<RunResult> runs;
};

/// Statistics of each enabled filter over the runs it completed.
inline McReport summarize(const McConfig& cfg, std::vector<RunResult> runs) {
    McReport rep;
    rep.n_runs = static_cast<int>(runs.size());
    rep.seed = cfg.seed;
    for (const auto& r : runs) {
        if (!r.truth_ok) ++rep.truth_failures;
        else if (rep.t.empty())
            for (const auto& m : r.measurements) rep.t.push_back(m.t);
    }
    for (int f = 0; f < kNumFilters; ++f) {
        FilterSummary& fs = rep.filters[f];
        fs.enabled = cfg.enabled[f];
        if (!fs.enabled) continue;
        std::vector<std::vector<StateVec>> truth, est, err, sig;
        std::vector<std::vector<double>> rt, rh;
        for (const auto& r : runs) {
            const FilterTrace& tr = r.filters[f];
            if (!r.truth_ok || !tr.ok) {
                ++fs.runs_failed;
                fs.failures.push_back("run " + std::to_string(r.index) + ": " +
                                      (r.truth_ok ? tr.error : r.error));
                continue;
            }
            ++fs.runs_ok;
            fs.consider_violations += tr.consider_violations;
            fs.skipped_updates += tr.skipped_updates;
            auto& T = truth.emplace_back();
            auto& E = est.emplace_back();
            auto& Er = err.emplace_back();
            auto& S = sig.emplace_back();
            auto& RT = rt.emplace_back();
            auto& RH = rh.emplace_back();
            for (std::size_t k = 0; k < tr.epochs.size(); ++k) {
                const TruthSample& ts = r.truth[k + 1];
                T.push_back(ts.x);
                E.push_back(tr.epochs[k].x_hat);
                Er.push_back(ts.x - tr.epochs[k].x_hat);
                S.push_back(tr.epochs[k].sigma);
                RT.push_back(ts.rho);
                RH.push_back(tr.epochs[k].rho_hat);
            }
        }
        if (fs.runs_ok > 0) {
            fs.rmse = compute_rmse(truth, est);
            fs.rmspe = compute_rmspe(rt, rh);
            fs.coverage = coverage_3sigma(err, sig);
        }
    }
    rep.runs = std::move(runs);
    return rep;
}

/// Runs every case on a worker pool; results are placed by run index so the
/// reduction order is fixed.
inline McReport run_montecarlo(const McConfig& cfg, const McModels& models) {
    cfg.validate();
    std::vector<RunResult> runs(static_cast<std::size_t>(cfg.n_runs));
    unsigned n_threads = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                                         : std::max(1u, std::thread::hardware_concurrency());
    n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(cfg.n_runs));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < cfg.n_runs; i = next++) runs[static_cast<std::size_t>(i)] = run_case(cfg, models, i);
    };
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return summarize(cfg, std::move(runs));
}

inline nlohmann::ordered_json state_json(const StateVec& v) {
    const StateVec s = v.cwiseProduct(report_scale());
    nlohmann::ordered_json j;
    for (int i = 0; i < kStateDim; ++i) j[kStateKeys[i]] = s[i];
    return j;
}

/// Summary JSON; contains no timings so reruns are byte-identical.
inline std::string summary_json(const McReport& rep) {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["n_runs"] = rep.n_runs;
    j["seed"] = rep.seed;
    j["truth_failures"] = rep.truth_failures;
    j["epochs"] = rep.t.size();
    nlohmann::ordered_json fj = nlohmann::ordered_json::object();
    std::vector<std::pair<double, std::string>> order;
    for (int f = 0; f < kNumFilters; ++f) {
        const FilterSummary& fs = rep.filters[f];
        if (!fs.enabled) continue;
        nlohmann::ordered_json e;
        e["runs_ok"] = fs.runs_ok;
        e["runs_failed"] = fs.runs_failed;
        if (fs.runs_ok > 0) {
            e["rmse"] = state_json(fs.rmse.average);
            e["rmspe_pct"] = fs.rmspe.average;
            nlohmann::ordered_json cov;
            for (int i = 0; i < kStateDim; ++i) cov[kStateKeys[i]] = fs.coverage[i];
            e["coverage_3sigma"] = cov;
            order.emplace_back(fs.rmspe.average, kFilterNames[f]);
        }
        e["skipped_updates"] = fs.skipped_updates;
        if (f == static_cast<int>(FilterId::uskf_nn)) e["consider_violations"] = fs.consider_violations;
        e["failures"] = fs.failures;
        fj[kFilterNames[f]] = e;
    }
    j["filters"] = fj;
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::string> names;
    for (const auto& o : order) names.push_back(o.second);
    j["ranking_by_rmspe"] = names;
    return j.dump(2) + "\n";
}

namespace detail {
inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p);
    if (!f) throw IoError("cannot write " + p.string());
    f.precision(10);
    return f;
}
}  // namespace detail

/// Long-format per-epoch RMSE: `t_s,state,ukf_cm,ukf_ac,uskf_nn`.
inline void write_rmse_series_csv(const McReport& rep, const std::filesystem::path& path) {
    auto f = detail::open_out(path);
    f << "t_s,state,ukf_cm,ukf_ac,uskf_nn\n";
    const StateVec scale = report_scale();
    for (std::size_t k = 0; k < rep.t.size(); ++k) {
        for (int i = 0; i <= kStateDim; ++i) {
            f << rep.t[k] << ',' << (i < kStateDim ? kStateKeys[i] : "rho_pct");
            for (const auto& fs : rep.filters) {
                f << ',';
                if (!fs.enabled || fs.runs_ok == 0) continue;
                f << (i < kStateDim ? fs.rmse.series[k][i] * scale[i] : fs.rmspe.series[k]);
            }
            f << '\n';
        }
    }
}

/// Per-run density traces: `run,t_s,rho_true,rho_hat_ac,rho_hat_nn`.
inline void write_density_runs_csv(const McReport& rep, const std::filesystem::path& path) {
    auto f = detail::open_out(path);
    f << "run,t_s,rho_true,rho_hat_ac,rho_hat_nn\n";
    for (const auto& r : rep.runs) {
        if (!r.truth_ok) continue;
        const auto& ac = r.filters[static_cast<int>(FilterId::ukf_ac)];
        const auto& nn = r.filters[static_cast<int>(FilterId::uskf_nn)];
        for (std::size_t k = 0; k < r.measurements.size(); ++k) {
            f << r.index << ',' << r.measurements[k].t << ',' << r.truth[k + 1].rho << ',';
            if (ac.enabled && k < ac.epochs.size()) f << ac.epochs[k].rho_hat;
            f << ',';
            if (nn.enabled && k < nn.epochs.size()) f << nn.epochs[k].rho_hat;
            f << '\n';
        }
    }
}

/// Per-epoch filter log:
/// `t_s, x_hat[8], sigma[8], rho_hat, rho_true, loss_pre, loss_post, mlo_iters`.
inline void write_filter_log_csv(const RunResult& run, const FilterTrace& tr,
                                 const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f.precision(17);
    f << "t_s";
    for (int i = 0; i < kStateDim; ++i) f << ",x_hat_" << i;
    for (int i = 0; i < kStateDim; ++i) f << ",sigma_" << i;
    f << ",rho_hat,rho_true,loss_pre,loss_post,mlo_iters\n";
    for (std::size_t k = 0; k < tr.epochs.size(); ++k) {
        const EpochLog& e = tr.epochs[k];
        f << e.t;
        for (int i = 0; i < kStateDim; ++i) f << ',' << e.x_hat[i];
        for (int i = 0; i < kStateDim; ++i) f << ',' << e.sigma[i];
        f << ',' << e.rho_hat << ',' << run.truth[k + 1].rho << ',' << e.loss_pre << ','
          << e.loss_post << ',' << e.mlo_iters << '\n';
    }
}

}  // namespace marsnav

#endif  // MARSNAV_MC_HPP
