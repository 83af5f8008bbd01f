#ifndef MARSNAV_FILTERS_USKF_NN_HPP
#define MARSNAV_FILTERS_USKF_NN_HPP

// Unscented Schmidt (consider) filter whose density model is a network
// adapted online by maximum-likelihood optimisation of the measurement
// innovation.

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "marsnav/dynamics.hpp"
#include "marsnav/error.hpp"
#include "marsnav/filters/unscented.hpp"
#include "marsnav/net.hpp"
#include "marsnav/sensors.hpp"

namespace marsnav::filters {

inline constexpr int kAugDim = kStateDim + 1;
using AugVec = Eigen::Matrix<double, kAugDim, 1>;
using AugMat = Eigen::Matrix<double, kAugDim, kAugDim>;

/// Exponentially correlated random variable centred at one.
struct EcrvConfig {
    double tau = 5.0;     ///< s
    double p_ss = 1e-3;   ///< steady-state variance
    double p_c0 = 1e-10;  ///< initial variance

    void validate() const {
        if (!(tau > 0.0)) throw ConfigError("ecrv: tau must be positive");
        if (!(p_ss >= p_c0 && p_c0 >= 0.0)) throw ConfigError("ecrv: need p_ss >= p_c0 >= 0");
    }
    double decay(double dt) const { return std::exp(-dt / tau); }
    double q_c(double dt) const { return (1.0 - std::exp(-2.0 * dt / tau)) * p_ss; }
    double flow(double c, double dt) const { return 1.0 + decay(dt) * (c - 1.0); }
};

struct MloConfig {
    double lr0 = 0.01;      ///< step size is lr0 / k
    double beta1 = 0.1;
    double beta2 = 0.9;
    double eps = 1e-8;
    int p_max = 1;
    double threshold = 1.0;  ///< loss gate; +inf disables adaptation
    int max_iters = 100;     ///< hard cap on Adam steps per epoch
};

struct ConsiderFilterState {
    StateVec x_hat = StateVec::Zero();
    double c_hat = 1.0;
    StateMat P = StateMat::Zero();
    StateVec C = StateVec::Zero();
    double P_c = 0.0;
    MlpDensityNet net;
    AdamState adam;
    long k_meas = 0;

    AugVec aug_mean() const {
        AugVec x;
        x << x_hat, c_hat;
        return x;
    }
    AugMat aug_cov() const {
        AugMat Pa;
        Pa.topLeftCorner<kStateDim, kStateDim>() = P;
        Pa.topRightCorner<kStateDim, 1>() = C;
        Pa.bottomLeftCorner<1, kStateDim>() = C.transpose();
        Pa(kStateDim, kStateDim) = P_c;
        return Pa;
    }
    double density_estimate() const { return density_forward(net, x_hat[ix::r]); }
};

inline ConsiderFilterState make_consider_state(const StateVec& x0, const StateMat& P0,
                                               const MlpDensityNet& net, const EcrvConfig& ecrv,
                                               const MloConfig& mlo) {
    ConsiderFilterState st;
    st.x_hat = x0;
    st.P = P0;
    st.P_c = ecrv.p_c0;
    st.net = net;
    st.adam.beta1 = mlo.beta1;
    st.adam.beta2 = mlo.beta2;
    st.adam.eps = mlo.eps;
    return st;
}

/// Sigma-point propagation of the augmented state over `dt` seconds.
inline void uskf_propagate(ConsiderFilterState& st, double dt, int substeps, const StateMat& Q,
                           const EcrvConfig& ecrv, const UtConfig& ut, const VehicleConfig& cfg) {
    const SigmaSet s = sigma_points(st.aug_mean(), st.aug_cov(), ut);
    const MlpDensityNet& net = st.net;
    Eigen::Matrix<double, kAugDim, Eigen::Dynamic> X(kAugDim, s.points.cols());
    for (Eigen::Index i = 0; i < s.points.cols(); ++i) {
        const double c = s.points(kStateDim, i);
        auto rho = [&net, c](double r) { return c * density_forward(net, r); };
        X.col(i).head<kStateDim>() =
            propagate(StateVec(s.points.col(i).head<kStateDim>()), dt, substeps, rho, cfg);
        X(kStateDim, i) = ecrv.flow(c, dt);
    }
    const AugVec mean = X * s.w.wm;
    AugMat Pa = weighted_cross(X, mean, X, mean, s.w.wc);
    Pa.topLeftCorner<kStateDim, kStateDim>() += Q;
    Pa(kStateDim, kStateDim) += ecrv.q_c(dt);
    Pa = 0.5 * (Pa + Pa.transpose()).eval();

    st.x_hat = mean.head<kStateDim>();
    st.c_hat = 1.0;
    st.P = Pa.topLeftCorner<kStateDim, kStateDim>();
    st.C = Pa.topRightCorner<kStateDim, 1>();
    st.P_c = Pa(kStateDim, kStateDim);
}

/// Likelihood loss nu^T R^-1 nu with rho = NN(r) at the prior mean.
inline double mlo_loss(const MlpDensityNet& net, const StateVec& x, const MeasVec& y,
                       const MeasMat& R_inv, const VehicleConfig& cfg, const Eigen::Matrix3d& tvb) {
    const MeasVec nu = y - measure_vec(x, density_forward(net, x[ix::r]), cfg, tvb);
    return nu.dot(R_inv * nu);
}

struct LossGradient {
    double loss;
    ParamVec grad;
};

/// d loss / d params = -2 nu^T R^-1 (dh/drho) (drho/dparams).
inline LossGradient mlo_loss_gradient(const MlpDensityNet& net, const StateVec& x,
                                      const MeasVec& y, const MeasMat& R_inv,
                                      const VehicleConfig& cfg, const Eigen::Matrix3d& tvb) {
    const DensityGradient dg = density_gradient(net, x[ix::r]);
    const MeasVec nu = y - measure_vec(x, dg.rho, cfg, tvb);
    const MeasVec w = R_inv * nu;
    const double dl_drho = -2.0 * w.dot(measure_drho(x, dg.rho, cfg, tvb));
    return {nu.dot(w), dl_drho * dg.grad};
}

struct MloResult {
    double loss_pre = std::numeric_limits<double>::quiet_NaN();
    double loss_post = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;  ///< Adam steps tried
    int accepted = 0;
    bool aborted = false;  ///< non-finite loss or gradient
};

/// Maximum-likelihood adaptation of st.net (and its Adam moments) at the
/// prior mean. Only loss-decreasing steps are kept.
inline MloResult mlo(ConsiderFilterState& st, const MeasVec& y, const MeasMat& R,
                     const MloConfig& opt, const VehicleConfig& cfg) {
    if (st.k_meas < 1) throw Error("mlo: measurement counter must be >= 1");
    const MeasMat R_inv = R.inverse();
    const Eigen::Matrix3d tvb = velocity_to_body(cfg);
    MloResult res;
    double loss = mlo_loss(st.net, st.x_hat, y, R_inv, cfg, tvb);
    res.loss_pre = loss;
    res.loss_post = loss;
    if (!std::isfinite(loss)) {
        res.aborted = true;
        return res;
    }
    const double lr = opt.lr0 / static_cast<double>(st.k_meas);
    int patience = 0;
    ParamVec params = st.net.params();
    while (loss > opt.threshold && res.iterations < opt.max_iters) {
        MlpDensityNet trial_net = st.net;
        const LossGradient lg = mlo_loss_gradient(st.net, st.x_hat, y, R_inv, cfg, tvb);
        if (!lg.grad.allFinite()) {
            res.aborted = true;
            break;
        }
        const Eigen::VectorXd g = lg.grad;
        if (!st.adam.initialized) st.adam.prime(g);
        AdamState trial_adam = st.adam;
        ParamVec trial = params;
        adam_step(trial, g, trial_adam, lr);
        trial_net.set_params(trial);
        const double trial_loss = mlo_loss(trial_net, st.x_hat, y, R_inv, cfg, tvb);
        ++res.iterations;
        if (std::isfinite(trial_loss) && trial_loss < loss) {
            params = trial;
            st.net = trial_net;
            st.adam = trial_adam;
            loss = trial_loss;
            ++res.accepted;
        } else {
            ++patience;
        }
        if (patience >= opt.p_max) break;
    }
    res.loss_post = loss;
    return res;
}

struct ConsiderUpdateInfo {
    MeasVec innovation = MeasVec::Zero();
    MeasMat Pyy = MeasMat::Zero();
    bool applied = false;
};

/// Consider measurement update: only the state rows of the gain act, the
/// consider variance is carried over unchanged.
inline ConsiderUpdateInfo uskf_update(ConsiderFilterState& st, const MeasVec& y, const MeasMat& R,
                                      const UtConfig& ut, const VehicleConfig& cfg) {
    const SigmaSet s = sigma_points(st.aug_mean(), st.aug_cov(), ut);
    const Eigen::Matrix3d tvb = velocity_to_body(cfg);
    Eigen::Matrix<double, kMeasDim, Eigen::Dynamic> Y(kMeasDim, s.points.cols());
    for (Eigen::Index i = 0; i < s.points.cols(); ++i) {
        const StateVec xi = s.points.col(i).head<kStateDim>();
        const double rho = s.points(kStateDim, i) * density_forward(st.net, xi[ix::r]);
        Y.col(i) = measure_vec(xi, rho, cfg, tvb);
    }
    const MeasVec y_hat = Y * s.w.wm;
    ConsiderUpdateInfo info;
    info.innovation = y - y_hat;
    info.Pyy = weighted_cross(Y, y_hat, Y, y_hat, s.w.wc) + R;
    info.Pyy = 0.5 * (info.Pyy + info.Pyy.transpose()).eval();
    const Eigen::Matrix<double, kAugDim, kMeasDim> Pxy =
        weighted_cross(s.points, st.aug_mean(), Y, y_hat, s.w.wc);

    Eigen::LLT<MeasMat> llt(info.Pyy);
    if (llt.info() != Eigen::Success) return info;
    const Eigen::Matrix<double, kAugDim, kMeasDim> K = llt.solve(Pxy.transpose()).transpose();
    const Eigen::Matrix<double, kStateDim, kMeasDim> Kx = K.topRows<kStateDim>();
    const Eigen::Matrix<double, 1, kMeasDim> Kc = K.bottomRows<1>();

    st.x_hat += Kx * info.innovation;
    StateMat P = st.P - Kx * info.Pyy * Kx.transpose();
    st.P = 0.5 * (P + P.transpose());
    st.C -= Kx * info.Pyy * Kc.transpose();
    info.applied = true;
    return info;
}

struct UskfStepLog {
    MloResult mlo;
    ConsiderUpdateInfo update;
    double P_c_prior = 0.0;  ///< consider variance entering the update
};

/// R from the noise-free reading predicted at the prior mean.
inline MeasMat predicted_R(const ConsiderFilterState& st, const NoiseSpec& noise,
                           const VehicleConfig& cfg) {
    return build_R(measure_vec(st.x_hat, st.c_hat * density_forward(st.net, st.x_hat[ix::r]), cfg), noise);
}

/// One filter epoch: propagate, adapt the network, update. R is built once
/// from the prior prediction and shared by the adaptation and the update.
inline UskfStepLog uskf_nn_step(ConsiderFilterState& st, const MeasVec& y, double dt, int substeps,
                                const StateMat& Q, const NoiseSpec& noise, const EcrvConfig& ecrv,
                                const UtConfig& ut, const MloConfig& opt, const VehicleConfig& cfg) {
    uskf_propagate(st, dt, substeps, Q, ecrv, ut, cfg);
    ++st.k_meas;
    const MeasMat R = predicted_R(st, noise, cfg);
    UskfStepLog log;
    log.mlo = mlo(st, y, R, opt, cfg);
    log.P_c_prior = st.P_c;
    log.update = uskf_update(st, y, R, ut, cfg);
    return log;
}

}  // namespace marsnav::filters

#endif  // MARSNAV_FILTERS_USKF_NN_HPP
