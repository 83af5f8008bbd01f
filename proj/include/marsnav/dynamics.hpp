#ifndef MARSNAV_DYNAMICS_HPP
#define MARSNAV_DYNAMICS_HPP

// Point-mass 3-DOF entry dynamics over a non-rotating planet with inverse
// square gravity, plus fixed-step RK4 propagation.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "marsnav/atmos.hpp"
#include "marsnav/error.hpp"
#include "marsnav/random.hpp"

namespace marsnav {

inline constexpr int kStateDim = 8;
using StateVec = Eigen::Matrix<double, kStateDim, 1>;
using StateMat = Eigen::Matrix<double, kStateDim, kStateDim>;

/// Index of each component inside StateVec.
namespace ix {
inline constexpr int r = 0, phi = 1, theta = 2, v = 3, gamma = 4, psi = 5, B = 6, LoD = 7;
}

inline constexpr double deg2rad(double d) noexcept { return d * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double r) noexcept { return r * 180.0 / std::numbers::pi; }

struct EntryState {
    double r = 0.0;      ///< planet-centric radius, m
    double phi = 0.0;    ///< latitude, rad
    double theta = 0.0;  ///< longitude, rad
    double v = 0.0;      ///< speed, m/s
    double gamma = 0.0;  ///< flight-path angle, rad (negative down)
    double psi = 0.0;    ///< heading azimuth, rad (0 north, pi/2 east)
    double B = 0.0;      ///< inverse ballistic coefficient Cd*S/m, m^2/kg
    double LoD = 0.0;    ///< lift-to-drag ratio

    StateVec vec() const {
        StateVec x;
        x << r, phi, theta, v, gamma, psi, B, LoD;
        return x;
    }
    static EntryState from(const StateVec& x) {
        return {x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7]};
    }
    double altitude() const noexcept { return r - kMarsRadius; }
};

struct VehicleConfig {
    double mu = 4.282837e13;          ///< m^3/s^2
    double sigma = 0.0;               ///< bank angle, rad
    double alpha_att = deg2rad(-17);  ///< angle of attack, rad
    double Rn = 1.125;                ///< nose radius, m
};

struct AeroAccel {
    double drag;  ///< m/s^2
    double lift;  ///< m/s^2
};

/// Drag and lift accelerations with v_inf ~= v; Cl*S/m is B * L/D.
inline AeroAccel accel_drag_lift(const StateVec& x, double rho) noexcept {
    const double drag = 0.5 * rho * x[ix::v] * x[ix::v] * x[ix::B];
    return {drag, drag * x[ix::LoD]};
}
inline AeroAccel accel_drag_lift(const EntryState& s, double rho) noexcept {
    return accel_drag_lift(s.vec(), rho);
}

inline constexpr double kSingularCos = 1e-9;

inline StateVec state_derivative(const StateVec& x, double rho, const VehicleConfig& cfg) {
    const double r = x[ix::r], phi = x[ix::phi], v = x[ix::v], gam = x[ix::gamma],
                 psi = x[ix::psi];
    const double cg = std::cos(gam), sg = std::sin(gam);
    const double cp = std::cos(phi);
    if (std::abs(cg) < kSingularCos || std::abs(cp) < kSingularCos)
        throw SingularityError("state_derivative: cos(gamma) or cos(phi) vanishes");
    const double cpsi = std::cos(psi), spsi = std::sin(psi);
    const double g = cfg.mu / (r * r);
    const auto [D, L] = accel_drag_lift(x, rho);

    StateVec dx;
    dx[ix::r] = v * sg;
    dx[ix::phi] = v * cg * cpsi / r;
    dx[ix::theta] = v * cg * spsi / (r * cp);
    dx[ix::v] = -D - g * sg;
    dx[ix::gamma] = (L * std::cos(cfg.sigma) - g * cg + v * v / r * cg) / v;
    dx[ix::psi] = (L * std::sin(cfg.sigma) / cg + v * v / r * cg * spsi * std::tan(phi)) / v;
    dx[ix::B] = 0.0;
    dx[ix::LoD] = 0.0;
    return dx;
}

inline EntryState state_derivative(const EntryState& s, double rho, const VehicleConfig& cfg) {
    return EntryState::from(state_derivative(s.vec(), rho, cfg));
}

/// One classical RK4 step. `density` maps radius (m) to kg/m^3 and is
/// re-evaluated at every stage.
template <class Density>
StateVec rk4_step(const StateVec& x, double dt, Density&& density, const VehicleConfig& cfg) {
    const StateVec k1 = state_derivative(x, density(x[ix::r]), cfg);
    const StateVec x2 = x + 0.5 * dt * k1;
    const StateVec k2 = state_derivative(x2, density(x2[ix::r]), cfg);
    const StateVec x3 = x + 0.5 * dt * k2;
    const StateVec k3 = state_derivative(x3, density(x3[ix::r]), cfg);
    const StateVec x4 = x + dt * k3;
    const StateVec k4 = state_derivative(x4, density(x4[ix::r]), cfg);
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

template <class Density>
EntryState rk4_step(const EntryState& s, double dt, Density&& density, const VehicleConfig& cfg) {
    return EntryState::from(rk4_step(s.vec(), dt, std::forward<Density>(density), cfg));
}

/// `substeps` RK4 steps covering `interval` seconds.
template <class Density>
StateVec propagate(StateVec x, double interval, int substeps, Density&& density,
                   const VehicleConfig& cfg) {
    const double h = interval / substeps;
    for (int i = 0; i < substeps; ++i) x = rk4_step(x, h, density, cfg);
    return x;
}

/// Gaussian entry-condition distribution: mean state and per-state 3-sigma.
struct EntryDistribution {
    EntryState mean{3.5222e6,         deg2rad(-3.919),  deg2rad(126.72), 6.0833e3,
                    deg2rad(-15.489), deg2rad(93.206),  7.1e-3,          0.24};
    StateVec sigma3 = (StateVec() << 3.2066e1, deg2rad(7.81e-4), deg2rad(3.67e-4), 2.6059e-2,
                       deg2rad(4.0e-4), deg2rad(2.68e-4), 4.8e-3, 1.5178e-1)
                          .finished();

    StateVec sigma() const { return sigma3 / 3.0; }

    /// Draw around `center`, scaling each state's 1-sigma by `mask`
    /// (0 pins the component). B is redrawn until positive.
    StateVec sample_around(const StateVec& center, Rng& rng,
                           const StateVec& mask = StateVec::Ones()) const {
        const StateVec s = sigma().cwiseProduct(mask);
        StateVec x;
        for (int i = 0; i < kStateDim; ++i) {
            do {
                x[i] = center[i] + s[i] * standard_normal(rng);
            } while (i == ix::B && s[i] > 0.0 && !(x[i] > 0.0));
        }
        return x;
    }
    StateVec sample(Rng& rng, const StateVec& mask = StateVec::Ones()) const {
        return sample_around(mean.vec(), rng, mask);
    }
};

struct TruthSample {
    double t;
    StateVec x;
    double rho;
};

struct TruthPropagation {
    double dt = 0.05;               ///< integrator step, s
    int steps_per_epoch = 5;        ///< integrator steps per sensor epoch
    double t_end = 350.0;           ///< s
    StateVec q_sigma = StateVec::Zero();  ///< 1-sigma noise added per epoch
};

/// Truth trajectory through a tabulated atmosphere. Gaussian process noise is
/// added once per sensor epoch, after the RK4 substeps of that epoch. The
/// returned series holds t = 0 followed by every epoch.
inline std::vector<TruthSample> propagate_truth(const EntryState& s0,
                                                const TabulatedProfile& profile,
                                                const VehicleConfig& cfg,
                                                const TruthPropagation& tp,
                                                std::uint64_t seed) {
    if (!(tp.t_end > 0.0) || !(tp.dt > 0.0) || tp.steps_per_epoch < 1)
        throw Error("propagate_truth: invalid timing");
    Rng rng(seed);
    const double epoch_dt = tp.dt * tp.steps_per_epoch;
    const auto n_epochs = static_cast<int>(std::llround(tp.t_end / epoch_dt));
    auto rho = [&profile](double r) { return profile(r); };

    std::vector<TruthSample> out;
    out.reserve(static_cast<std::size_t>(n_epochs) + 1);
    StateVec x = s0.vec();
    out.push_back({0.0, x, rho(x[ix::r])});
    for (int k = 1; k <= n_epochs; ++k) {
        x = propagate(x, epoch_dt, tp.steps_per_epoch, rho, cfg);
        for (int i = 0; i < kStateDim; ++i)
            if (tp.q_sigma[i] > 0.0) x[i] += tp.q_sigma[i] * standard_normal(rng);
        out.push_back({k * epoch_dt, x, rho(x[ix::r])});
    }
    return out;
}

inline void write_truth_csv(const std::vector<TruthSample>& traj, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << "t_s,r_m,phi_rad,theta_rad,v_ms,gamma_rad,psi_rad,B_m2kg,LoD,rho_true\n";
    f.precision(17);
    for (const auto& s : traj) {
        f << s.t;
        for (int i = 0; i < kStateDim; ++i) f << ',' << s.x[i];
        f << ',' << s.rho << '\n';
    }
}

}  // namespace marsnav

#endif  // MARSNAV_DYNAMICS_HPP
