#ifndef MARSNAV_CONFIG_HPP
#define MARSNAV_CONFIG_HPP

// Versioned JSON run configuration. Every key is optional and defaults to the
// values of the library structs; unknown keys and out-of-range values are
// rejected. Angles are given in degrees.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "marsnav/atmos.hpp"
#include "marsnav/dynamics.hpp"
#include "marsnav/error.hpp"
#include "marsnav/mc.hpp"
#include "marsnav/train.hpp"

namespace marsnav {

inline constexpr int kConfigVersion = 1;

struct RunConfig {
    struct Paths {
        std::filesystem::path atmosphere_dir = "data/atmos";
        std::filesystem::path network = "data/network.json";
        std::filesystem::path output_dir = "out";
    } paths;
    std::string log_level = "info";  ///< quiet | info | debug

    int atmosphere_count = 20;
    std::uint64_t atmosphere_seed = 7;
    std::uint64_t training_seed = 11;
    TrainingConfig training;
    McConfig mc;  ///< also carries entry, vehicle and atmosphere settings

    void validate() const {
        if (atmosphere_count < 0) throw ConfigError("atmosphere.count must be >= 0");
        if (log_level != "quiet" && log_level != "info" && log_level != "debug")
            throw ConfigError("log_level must be quiet, info or debug");
        marsnav::validate(training);
        mc.validate();
    }
};

namespace detail {

using json = nlohmann::json;

/// Reads keys from one JSON object and remembers which were consumed.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    bool has(const char* key) const { return j_.contains(key); }

    template <class T>
    void opt(const char* key, T& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!j_.at(key).is_number()) throw ConfigError(where(key) + ": expected a number");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!j_.at(key).is_boolean()) throw ConfigError(where(key) + ": expected a boolean");
            } else if constexpr (std::is_integral_v<T>) {
                if (!j_.at(key).is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
                if constexpr (std::is_unsigned_v<T>)
                    if (j_.at(key).is_number_integer() && !j_.at(key).is_number_unsigned())
                        throw ConfigError(where(key) + ": expected a non-negative integer");
            }
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where(key) + ": " + e.what());
        }
    }

    /// Degrees in the file, radians in `out`.
    void opt_deg(const char* key, double& out) {
        if (!j_.contains(key)) return;
        double d = rad2deg(out);
        opt(key, d);
        out = deg2rad(d);
    }

    ObjectReader child(const char* key) {
        if (!j_.contains(key)) return ObjectReader(empty(), where(key));
        seen_.insert(key);
        return ObjectReader(j_.at(key), where(key));
    }

    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("unknown key: " + where(it.key()));
    }

    std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    static const json& empty() {
        static const json e = json::object();
        return e;
    }
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void read_state(ObjectReader r, StateVec& v) {
    r.opt("r_m", v[ix::r]);
    r.opt_deg("phi_deg", v[ix::phi]);
    r.opt_deg("theta_deg", v[ix::theta]);
    r.opt("v_ms", v[ix::v]);
    r.opt_deg("gamma_deg", v[ix::gamma]);
    r.opt_deg("psi_deg", v[ix::psi]);
    r.opt("B_m2kg", v[ix::B]);
    r.opt("LoD", v[ix::LoD]);
    r.finish();
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path q(p);
    return q.is_absolute() || base.empty() ? q : base / q;
}

}  // namespace detail

/// Parses configuration text; relative paths are resolved against `base_dir`.
inline RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {}) {
    using detail::ObjectReader;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    ObjectReader root(j, "");
    int version = -1;
    root.opt("version", version);
    if (version != kConfigVersion)
        throw ConfigError("config version must be " + std::to_string(kConfigVersion));
    root.opt("log_level", c.log_level);

    {
        auto p = root.child("paths");
        std::string s;
        if (p.has("atmosphere_dir")) { p.opt("atmosphere_dir", s); c.paths.atmosphere_dir = detail::resolve(base_dir, s); }
        else c.paths.atmosphere_dir = detail::resolve(base_dir, c.paths.atmosphere_dir.string());
        if (p.has("network")) { p.opt("network", s); c.paths.network = detail::resolve(base_dir, s); }
        else c.paths.network = detail::resolve(base_dir, c.paths.network.string());
        if (p.has("output_dir")) { p.opt("output_dir", s); c.paths.output_dir = detail::resolve(base_dir, s); }
        else c.paths.output_dir = detail::resolve(base_dir, c.paths.output_dir.string());
        p.finish();
    }
    {
        auto a = root.child("atmosphere");
        AtmosphereGenConfig& g = c.mc.atmosphere;
        a.opt("count", c.atmosphere_count);
        a.opt("seed", c.atmosphere_seed);
        a.opt("alt_min_m", g.alt_min);
        a.opt("alt_max_m", g.alt_max);
        a.opt("spacing_m", g.spacing);
        a.opt("sigma_low", g.sigma_low);
        a.opt("sigma_high", g.sigma_high);
        a.opt("corr_length_m", g.corr_length);
        a.opt("rho0_kgm3", g.rho0);
        a.opt("hs_m", g.hs);
        a.opt("rho0_log_sd", g.rho0_log_sd);
        a.opt("hs_frac_sd", g.hs_frac_sd);
        a.opt("wave_amp_sd", g.wave_amp_sd);
        a.opt("wavelength_min_m", g.wavelength_min);
        a.opt("wavelength_max_m", g.wavelength_max);
        a.opt("r0_m", g.r0);
        a.finish();
    }
    {
        auto v = root.child("vehicle");
        VehicleConfig& veh = c.mc.vehicle;
        v.opt("mu_m3s2", veh.mu);
        v.opt_deg("bank_deg", veh.sigma);
        v.opt_deg("alpha_deg", veh.alpha_att);
        v.opt("nose_radius_m", veh.Rn);
        v.finish();
    }
    {
        auto e = root.child("entry");
        StateVec mean = c.mc.entry.mean.vec();
        if (e.has("mean")) detail::read_state(e.child("mean"), mean);
        c.mc.entry.mean = EntryState::from(mean);
        if (e.has("sigma3")) detail::read_state(e.child("sigma3"), c.mc.entry.sigma3);
        e.opt("disperse_aero_truth", c.mc.disperse_aero_truth);
        e.finish();
    }
    {
        auto t = root.child("training");
        TrainingConfig& tc = c.training;
        t.opt("seed", c.training_seed);
        t.opt("trajectories", tc.trajectories);
        t.opt("duration_s", tc.duration);
        t.opt("sample_interval_s", tc.sample_interval);
        t.opt("dt_s", tc.dt);
        t.opt("epochs", tc.epochs);
        t.opt("lr_min", tc.lr_min);
        t.opt("lr_max", tc.lr_max);
        t.opt("warmup_fraction", tc.warmup_fraction);
        t.opt("validation_fraction", tc.validation_fraction);
        t.opt("batch_size", tc.batch_size);
        t.finish();
        if (tc.batch_size < 0) throw ConfigError("training.batch_size must be >= 0");
    }
    {
        auto m = root.child("montecarlo");
        McConfig& mc = c.mc;
        m.opt("seed", mc.seed);
        m.opt("runs", mc.n_runs);
        m.opt("t_end_s", mc.t_end);
        m.opt("sensor_hz", mc.sensor_hz);
        m.opt("truth_dt_s", mc.truth_dt);
        m.opt("filter_substeps", mc.filter_substeps);
        m.opt("threads", mc.threads);
        m.opt("truth_process_noise", mc.truth_process_noise);
        m.opt("measurement_noise", mc.measurement_noise);
        if (m.has("truth_model")) {
            std::string s;
            m.opt("truth_model", s);
            if (s == "surrogate") mc.truth_model = TruthModel::surrogate;
            else if (s == "nominal") mc.truth_model = TruthModel::nominal;
            else throw ConfigError("montecarlo.truth_model must be surrogate or nominal");
        }
        if (m.has("filters")) {
            std::vector<std::string> names;
            m.opt("filters", names);
            mc.enabled = parse_filter_list(names);
        }
        m.finish();
    }
    {
        auto q = root.child("process_noise_3sigma");
        detail::read_state(std::move(q), c.mc.q_sigma3);
    }
    {
        auto n = root.child("measurement_noise_3sigma");
        double accel_ug = c.mc.noise.sigma_accel * 3.0 / kG0 * 1e6;
        double q_pct = c.mc.noise.frac_q * 300.0;
        double qdot_pct = c.mc.noise.frac_qdot * 300.0;
        n.opt("accel_ug", accel_ug);
        n.opt("q_pct", q_pct);
        n.opt("qdot_pct", qdot_pct);
        n.finish();
        if (n.has("accel_ug")) c.mc.noise.sigma_accel = accel_ug * 1e-6 * kG0 / 3.0;
        if (n.has("q_pct")) c.mc.noise.frac_q = q_pct / 300.0;
        if (n.has("qdot_pct")) c.mc.noise.frac_qdot = qdot_pct / 300.0;
    }
    {
        auto f = root.child("filters");
        {
            auto u = f.child("ut");
            u.opt("alpha", c.mc.ut.alpha);
            u.opt("beta", c.mc.ut.beta);
            if (u.has("kappa")) {
                const auto& k = u.raw("kappa");
                if (k.is_string() && k.get<std::string>() == "3-L") c.mc.ut.kappa.reset();
                else if (k.is_number()) c.mc.ut.kappa = k.get<double>();
                else throw ConfigError("filters.ut.kappa must be a number or \"3-L\"");
            }
            u.finish();
        }
        {
            auto m = f.child("mlo");
            filters::MloConfig& o = c.mc.mlo;
            m.opt("lr0", o.lr0);
            m.opt("beta1", o.beta1);
            m.opt("beta2", o.beta2);
            m.opt("eps", o.eps);
            m.opt("p_max", o.p_max);
            if (m.has("threshold")) {
                const auto& t = m.raw("threshold");
                if (t.is_null()) o.threshold = std::numeric_limits<double>::infinity();
                else if (t.is_number()) o.threshold = t.get<double>();
                else throw ConfigError("filters.mlo.threshold must be a number or null (disabled)");
            }
            m.opt("max_iters", o.max_iters);
            m.finish();
            if (!(o.beta1 >= 0.0 && o.beta1 < 1.0 && o.beta2 >= 0.0 && o.beta2 < 1.0) || !(o.eps > 0.0))
                throw ConfigError("filters.mlo: beta1, beta2 must lie in [0, 1) and eps > 0");
        }
        {
            auto e = f.child("ecrv");
            e.opt("tau_s", c.mc.ecrv.tau);
            e.opt("p_ss", c.mc.ecrv.p_ss);
            e.opt("p_c0", c.mc.ecrv.p_c0);
            e.finish();
        }
        {
            auto a = f.child("ukf_ac");
            a.opt("q_k", c.mc.ac.q_k);
            a.opt("p_k0", c.mc.ac.p_k0);
            a.finish();
        }
        {
            auto m = f.child("ukf_cm");
            m.opt("window", c.mc.cm_window);
            m.opt("keep_off_diagonal", c.mc.cm_keep_off_diagonal);
            m.finish();
        }
        f.finish();
    }
    root.finish();

    c.training.entry = c.mc.entry;
    c.training.vehicle = c.mc.vehicle;
    c.validate();
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

}  // namespace marsnav

#endif  // MARSNAV_CONFIG_HPP
