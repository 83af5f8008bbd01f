#ifndef MARSNAV_FILTERS_UKF_AC_HPP
#define MARSNAV_FILTERS_UKF_AC_HPP

// UKF over [x; K] where K scales a nominal exponential density and follows
// a random walk.

#include <Eigen/Dense>

#include "marsnav/atmos.hpp"
#include "marsnav/dynamics.hpp"
#include "marsnav/filters/unscented.hpp"
#include "marsnav/sensors.hpp"

namespace marsnav::filters {

struct AcConfig {
    double q_k = 1e-7;    ///< random-walk variance per epoch
    double p_k0 = 1e-10;  ///< initial variance
};

struct AcFilterState {
    Gaussian g;  ///< 9-vector [x; K]
    ExpModel nominal;

    StateVec x_hat() const { return g.x.head<kStateDim>(); }
    StateMat P() const { return g.P.topLeftCorner<kStateDim, kStateDim>(); }
    double correction() const { return g.x[kStateDim]; }
    double density_estimate() const { return correction() * exp_density(nominal, g.x[ix::r]); }
};

inline AcFilterState make_ac_state(const StateVec& x0, const StateMat& P0, double k0,
                                   const ExpModel& nominal, const AcConfig& ac) {
    AcFilterState st;
    st.nominal = nominal;
    st.g.x.resize(kStateDim + 1);
    st.g.x << x0, k0;
    st.g.P = Eigen::MatrixXd::Zero(kStateDim + 1, kStateDim + 1);
    st.g.P.topLeftCorner<kStateDim, kStateDim>() = P0;
    st.g.P(kStateDim, kStateDim) = ac.p_k0;
    return st;
}

/// Returns the measurement update result (innovation, P_yy). R comes from
/// the reading predicted at the prior mean.
inline UpdateResult ukf_ac_step(AcFilterState& st, const MeasVec& y, double dt, int substeps,
                                const StateMat& Q, const NoiseSpec& noise, const UtConfig& ut,
                                const AcConfig& ac, const VehicleConfig& cfg) {
    const ExpModel nom = st.nominal;
    Eigen::MatrixXd Qa = Eigen::MatrixXd::Zero(kStateDim + 1, kStateDim + 1);
    Qa.topLeftCorner<kStateDim, kStateDim>() = Q;
    Qa(kStateDim, kStateDim) = ac.q_k;

    const Gaussian prior = ut_predict(st.g, Qa, ut, [&](const Eigen::VectorXd& xa) {
        const double k = xa[kStateDim];
        auto rho = [&nom, k](double r) { return k * exp_density(nom, r); };
        Eigen::VectorXd out(kStateDim + 1);
        out << propagate(StateVec(xa.head<kStateDim>()), dt, substeps, rho, cfg), k;
        return out;
    });
    const Eigen::Matrix3d tvb = velocity_to_body(cfg);
    const StateVec xm = prior.x.head<kStateDim>();
    const MeasMat R = build_R(measure_vec(xm, prior.x[kStateDim] * exp_density(nom, xm[ix::r]), cfg, tvb), noise);
    UpdateResult res = ut_update(prior, y, R, ut, [&](const Eigen::VectorXd& xa) {
        const StateVec x = xa.head<kStateDim>();
        return Eigen::VectorXd(measure_vec(x, xa[kStateDim] * exp_density(nom, x[ix::r]), cfg, tvb));
    });
    st.g = res.posterior;
    return res;
}

}  // namespace marsnav::filters

#endif  // MARSNAV_FILTERS_UKF_AC_HPP
