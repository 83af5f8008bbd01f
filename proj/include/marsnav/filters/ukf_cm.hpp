#ifndef MARSNAV_FILTERS_UKF_CM_HPP
#define MARSNAV_FILTERS_UKF_CM_HPP

// UKF on the exponential density model with process noise estimated by
// windowed covariance matching.

#include <cstddef>

#include <Eigen/Dense>

#include "marsnav/atmos.hpp"
#include "marsnav/dynamics.hpp"
#include "marsnav/filters/covariance_matching.hpp"
#include "marsnav/filters/unscented.hpp"
#include "marsnav/sensors.hpp"

namespace marsnav::filters {

struct CmFilterState {
    Gaussian g;
    Eigen::MatrixXd Q;  ///< process noise in use (initial value, then Q_hat)
    ProcessNoiseMatcher matcher;
    ExpModel nominal;

    StateVec x_hat() const { return g.x; }
    StateMat P() const { return g.P; }
    double density_estimate() const { return exp_density(nominal, g.x[ix::r]); }
};

inline CmFilterState make_cm_state(const StateVec& x0, const StateMat& P0, const StateMat& Q0,
                                   const ExpModel& nominal, std::size_t window = 10,
                                   bool keep_off_diagonal = false) {
    return {Gaussian{x0, P0}, Q0, ProcessNoiseMatcher(window, keep_off_diagonal), nominal};
}

inline UpdateResult ukf_cm_step(CmFilterState& st, const MeasVec& y, double dt, int substeps,
                                const NoiseSpec& noise, const UtConfig& ut, const VehicleConfig& cfg) {
    const ExpModel nom = st.nominal;
    auto rho = [&nom](double r) { return exp_density(nom, r); };
    const Gaussian prior = ut_predict(st.g, st.Q, ut, [&](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(propagate(StateVec(x), dt, substeps, rho, cfg));
    });
    const Eigen::Matrix3d tvb = velocity_to_body(cfg);
    const StateVec xm = prior.x;
    const MeasMat R = build_R(measure_vec(xm, exp_density(nom, xm[ix::r]), cfg, tvb), noise);
    UpdateResult res = ut_update(prior, y, R, ut, [&](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(measure_vec(StateVec(x), exp_density(nom, x[ix::r]), cfg, tvb));
    });
    st.matcher.push(prior.x, res.posterior.x, prior.P, st.Q, res.posterior.P);
    if (auto q = st.matcher.estimate()) st.Q = *q;
    st.g = res.posterior;
    return res;
}

}  // namespace marsnav::filters

#endif  // MARSNAV_FILTERS_UKF_CM_HPP
