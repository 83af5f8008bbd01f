#ifndef MARSNAV_SENSORS_HPP
#define MARSNAV_SENSORS_HPP

// IMU specific force, aggregated dynamic pressure and Sutton-Graves
// convective heating, as functions of state and density.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <Eigen/Dense>

#include "marsnav/dynamics.hpp"
#include "marsnav/random.hpp"

namespace marsnav {

inline constexpr int kMeasDim = 5;
using MeasVec = Eigen::Matrix<double, kMeasDim, 1>;
using MeasMat = Eigen::Matrix<double, kMeasDim, kMeasDim>;

/// Sutton-Graves constant for Mars, kg^0.5 / m.
inline constexpr double kSuttonGraves = 1.9027e-4;
/// Standard gravity used to convert micro-g sensor specs.
inline constexpr double kG0 = 9.80665;

struct Measurement {
    Eigen::Vector3d a_body = Eigen::Vector3d::Zero();  ///< m/s^2
    double q_dyn = 0.0;                                ///< Pa
    double qdot_s = 0.0;                               ///< W/m^2

    MeasVec vec() const {
        MeasVec y;
        y << a_body, q_dyn, qdot_s;
        return y;
    }
    static Measurement from(const MeasVec& y) { return {y.head<3>(), y[3], y[4]}; }
};

/// 1-sigma noise levels.
struct NoiseSpec {
    double sigma_accel = 300e-6 * kG0 / 3.0;  ///< m/s^2 per axis
    double frac_q = 0.01 / 3.0;               ///< fraction of reading
    double frac_qdot = 0.01 / 3.0;            ///< fraction of reading
};

/// Velocity-to-body rotation: pitch by the angle of attack about the
/// velocity-frame y axis.
inline Eigen::Matrix3d velocity_to_body(const VehicleConfig& cfg) {
    return Eigen::AngleAxisd(cfg.alpha_att, Eigen::Vector3d::UnitY()).toRotationMatrix();
}

/// Noise-free measurement as a 5-vector [a_b (3), q, Qdot].
inline MeasVec measure_vec(const StateVec& x, double rho, const VehicleConfig& cfg,
                           const Eigen::Matrix3d& tvb) {
    const auto [D, L] = accel_drag_lift(x, rho);
    const Eigen::Vector3d a_v(-D, L * std::sin(cfg.sigma), L * std::cos(cfg.sigma));
    const double v = x[ix::v];
    MeasVec y;
    y.head<3>() = tvb * a_v;
    y[3] = 0.5 * rho * v * v;
    y[4] = kSuttonGraves * std::sqrt(std::max(rho, 0.0) / cfg.Rn) * v * v * v;
    return y;
}

inline MeasVec measure_vec(const StateVec& x, double rho, const VehicleConfig& cfg) {
    return measure_vec(x, rho, cfg, velocity_to_body(cfg));
}

/// d h / d rho at fixed state; used by the likelihood gradient.
inline MeasVec measure_drho(const StateVec& x, double rho, const VehicleConfig& cfg,
                            const Eigen::Matrix3d& tvb) {
    const double v = x[ix::v];
    const double dD = 0.5 * v * v * x[ix::B];
    const double dL = dD * x[ix::LoD];
    const Eigen::Vector3d da_v(-dD, dL * std::sin(cfg.sigma), dL * std::cos(cfg.sigma));
    MeasVec d;
    d.head<3>() = tvb * da_v;
    d[3] = 0.5 * v * v;
    d[4] = rho > 0.0 ? kSuttonGraves * v * v * v / (2.0 * std::sqrt(rho * cfg.Rn)) : 0.0;
    return d;
}

inline Measurement measure_ideal(const EntryState& s, double rho, const VehicleConfig& cfg) {
    return Measurement::from(measure_vec(s.vec(), rho, cfg));
}

inline Measurement measure_noisy(const EntryState& s, double rho, const VehicleConfig& cfg,
                                 const NoiseSpec& noise, Rng& rng) {
    Measurement m = measure_ideal(s, rho, cfg);
    for (int i = 0; i < 3; ++i) m.a_body[i] += noise.sigma_accel * standard_normal(rng);
    m.q_dyn += noise.frac_q * m.q_dyn * standard_normal(rng);
    m.qdot_s += noise.frac_qdot * m.qdot_s * standard_normal(rng);
    return m;
}

inline constexpr double kRFloor = 1e-20;

/// Diagonal measurement covariance from a predicted (noise-free) reading.
inline MeasMat build_R(const MeasVec& predicted, const NoiseSpec& noise) {
    MeasVec d;
    const double sa = noise.sigma_accel * noise.sigma_accel;
    d << sa, sa, sa, std::pow(noise.frac_q * predicted[3], 2),
        std::pow(noise.frac_qdot * predicted[4], 2);
    return d.cwiseMax(kRFloor).asDiagonal();
}

inline MeasMat build_R(const Measurement& predicted, const NoiseSpec& noise) {
    return build_R(predicted.vec(), noise);
}

struct MeasurementSample {
    double t;
    MeasVec y;
};

inline void write_measurements_csv(const std::vector<MeasurementSample>& ms,
                                   const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << "t_s,ax,ay,az,q_pa,qdot_wm2\n";
    f.precision(17);
    for (const auto& m : ms) {
        f << m.t;
        for (int i = 0; i < kMeasDim; ++i) f << ',' << m.y[i];
        f << '\n';
    }
}

}  // namespace marsnav

#endif  // MARSNAV_SENSORS_HPP
