#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "marsnav/filters/covariance_matching.hpp"
#include "marsnav/filters/ukf_ac.hpp"
#include "marsnav/filters/ukf_cm.hpp"
#include "marsnav/filters/uskf_nn.hpp"
#include "test_support.hpp"

using namespace marsnav;
using namespace marsnav::filters;

namespace {

const ExpModel kNom{};
const VehicleConfig kVeh{};
constexpr double kDt = 0.25;
constexpr int kSub = 5;

const MlpDensityNet& nominal_net() {
    static const MlpDensityNet net = test::fit_network_lstsq(kNom);
    return net;
}

StateMat default_P0() { return EntryDistribution{}.sigma().array().square().matrix().asDiagonal(); }
StateMat default_Q() {
    StateVec q3;
    q3 << 0, 0, 0, 0.3, deg2rad(2e-3), deg2rad(2e-4), 1e-5, 3e-5;
    return (q3 / 3.0).array().square().matrix().asDiagonal();
}

/// Entry state after `t_pre` seconds of nominal flight.
StateVec state_after(double t_pre) {
    auto rho = [](double r) { return exp_density(kNom, r); };
    StateVec x = EntryDistribution{}.mean.vec();
    if (t_pre > 0.0) x = propagate(x, t_pre, static_cast<int>(t_pre / 0.05), rho, kVeh);
    return x;
}

struct Arc {
    std::vector<StateVec> x;  // truth at each epoch (x[0] is the start)
    std::vector<MeasVec> y;   // noiseless measurement at epochs 1..n
};

template <class Density>
Arc make_arc(StateVec x, Density rho, int epochs) {
    Arc a;
    a.x.push_back(x);
    a.y.push_back(MeasVec::Zero());
    for (int k = 0; k < epochs; ++k) {
        x = propagate(x, kDt, kSub, rho, kVeh);
        a.x.push_back(x);
        a.y.push_back(measure_vec(x, rho(x[ix::r]), kVeh));
    }
    return a;
}

MlpDensityNet random_net(std::mt19937_64& rng) {
    MlpDensityNet n = nominal_net();
    std::normal_distribution<double> g(0.0, 0.05);
    ParamVec p = n.params();
    for (int i = 0; i < kNumParams; ++i) p[i] += g(rng);
    n.set_params(p);
    return n;
}

}  // namespace

// ---- consider filter ----------------------------------------------------

TEST(Ecrv, ProcessNoiseValue) {
    EcrvConfig e;
    EXPECT_NEAR(e.q_c(0.25), (1.0 - std::exp(-0.1)) * 1e-3, 1e-18);
    EXPECT_NEAR(e.q_c(0.25), 9.5163e-5, 1e-9);
    EXPECT_DOUBLE_EQ(e.flow(1.0, 0.25), 1.0);
    EXPECT_NEAR(e.flow(1.2, 0.25), 1.0 + std::exp(-0.05) * 0.2, 1e-15);
}

TEST(Ecrv, Validation) {
    EXPECT_THROW((EcrvConfig{0.0, 1e-3, 1e-10}.validate()), ConfigError);
    EXPECT_THROW((EcrvConfig{5.0, 1e-10, 1e-3}.validate()), ConfigError);
}

TEST(UskfPropagate, ZeroIntervalAddsProcessNoise) {
    ConsiderFilterState st = make_consider_state(state_after(100), default_P0(), nominal_net(), EcrvConfig{}, MloConfig{});
    st.C = default_P0().diagonal().cwiseSqrt() * 1e-6;
    st.P_c = 1e-4;
    const AugMat Pa = st.aug_cov();
    const StateMat Q = default_Q();
    uskf_propagate(st, 0.0, 1, Q, EcrvConfig{}, UtConfig{}, kVeh);
    AugMat expected = Pa;
    expected.topLeftCorner<kStateDim, kStateDim>() += Q;
    // Compare in correlation units so that every state weighs the same.
    const AugVec s = expected.diagonal().cwiseSqrt();
    const AugMat diff = (st.aug_cov() - expected).array() / (s * s.transpose()).array();
    // sigma points sit at |r| ~ 3.4e6 with sigma ~ 1e2, so roundoff is ~eps * 3e4 per entry
    EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(st.c_hat, 1.0);
}

TEST(UskfPropagate, DegenerateConsiderUsesNetworkDensity) {
    ConsiderFilterState st = make_consider_state(state_after(100), default_P0(), nominal_net(), EcrvConfig{}, MloConfig{});
    st.P_c = 0.0;
    Gaussian g{st.x_hat, st.P};
    const MlpDensityNet& net = nominal_net();
    auto rho = [&net](double r) { return density_forward(net, r); };
    const Gaussian ref = ut_predict(g, default_Q(), UtConfig{}, [&](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(propagate(StateVec(x), kDt, kSub, rho, kVeh));
    });
    uskf_propagate(st, kDt, kSub, default_Q(), EcrvConfig{}, UtConfig{}, kVeh);
    const StateVec s = ref.P.diagonal().cwiseSqrt();
    EXPECT_LT(((st.x_hat - ref.x).array() / s.array()).abs().maxCoeff(), 1e-6);
    EXPECT_LT(((st.P - ref.P).array() / (s * s.transpose()).array()).abs().maxCoeff(), 1e-6);
    EXPECT_NEAR(st.P_c, EcrvConfig{}.q_c(kDt), 1e-15);
}

TEST(UskfUpdate, NoConsiderCouplingEqualsPlainUkf) {
    const MlpDensityNet& net = nominal_net();
    auto rho = [&net](double r) { return density_forward(net, r); };
    const Arc arc = make_arc(state_after(120), rho, 1);
    ConsiderFilterState st = make_consider_state(arc.x[0], default_P0(), net, EcrvConfig{}, MloConfig{});
    st.P_c = 0.0;
    st.C.setZero();
    const MeasVec y = arc.y[1] * 1.01;
    const MeasMat R = build_R(y, NoiseSpec{});
    const UpdateResult ref = ut_update(Gaussian{st.x_hat, st.P}, y, R, UtConfig{}, [&](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(measure_vec(StateVec(x), rho(x[ix::r]), kVeh));
    });
    const ConsiderUpdateInfo info = uskf_update(st, y, R, UtConfig{}, kVeh);
    ASSERT_TRUE(info.applied);
    const StateVec s = default_P0().diagonal().cwiseSqrt();
    EXPECT_LT(((st.x_hat - ref.posterior.x).array() / s.array()).abs().maxCoeff(), 1e-6);
    EXPECT_LT(((st.P - ref.posterior.P).array() / (s * s.transpose()).array()).abs().maxCoeff(), 1e-6);
}

TEST(UskfUpdate, ConsiderBlockBitwiseUnchanged) {
    const MlpDensityNet& net = nominal_net();
    auto truth_rho = [&net](double r) { return 1.2 * density_forward(net, r); };
    const Arc arc = make_arc(state_after(100), truth_rho, 40);
    ConsiderFilterState st = make_consider_state(arc.x[0], default_P0(), net, EcrvConfig{}, MloConfig{});
    for (int k = 1; k <= 40; ++k) {
        uskf_propagate(st, kDt, kSub, default_Q(), EcrvConfig{}, UtConfig{}, kVeh);
        ++st.k_meas;
        const double pc = st.P_c;
        const MeasMat R = predicted_R(st, NoiseSpec{}, kVeh);
        mlo(st, arc.y[k], R, MloConfig{}, kVeh);
        ASSERT_TRUE(uskf_update(st, arc.y[k], R, UtConfig{}, kVeh).applied);
        EXPECT_EQ(std::memcmp(&pc, &st.P_c, sizeof(double)), 0);
        EXPECT_EQ(st.c_hat, 1.0);
        const AugMat Pa = st.aug_cov();
        EXPECT_LT((Pa - Pa.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Mlo, GatedWhenLossBelowThreshold) {
    const MlpDensityNet& net = nominal_net();
    ConsiderFilterState st = make_consider_state(state_after(120), default_P0(), net, EcrvConfig{}, MloConfig{});
    st.k_meas = 1;
    const MeasVec y = measure_vec(st.x_hat, density_forward(net, st.x_hat[ix::r]), kVeh);
    const MloResult r = mlo(st, y, build_R(y, NoiseSpec{}), MloConfig{}, kVeh);
    EXPECT_EQ(r.iterations, 0);
    EXPECT_LE(r.loss_pre, 1.0);
    EXPECT_EQ(st.net.params(), net.params());
    EXPECT_FALSE(st.adam.initialized);
}

TEST(Mlo, DefaultOptimizerSettings) {
    MloConfig m;
    EXPECT_EQ(m.beta1, 0.1);
    EXPECT_EQ(m.beta2, 0.9);
    EXPECT_EQ(m.p_max, 1);
    EXPECT_EQ(m.lr0, 0.01);
    EXPECT_EQ(m.threshold, 1.0);
}

TEST(Mlo, AdaptsTowardScaledDensity) {
    const MlpDensityNet& net = nominal_net();
    ConsiderFilterState st = make_consider_state(state_after(120), default_P0(), net, EcrvConfig{}, MloConfig{});
    // 25 s into the arc at 4 Hz; at k = 1 the first sign-like Adam step overshoots and is rejected
    st.k_meas = 100;
    const double r = st.x_hat[ix::r];
    const double rho_true = 1.3 * density_forward(net, r);
    const MeasVec y = measure_vec(st.x_hat, rho_true, kVeh);
    const double err_pre = std::abs(density_forward(st.net, r) - rho_true) / rho_true;
    const MloResult res = mlo(st, y, build_R(y, NoiseSpec{}), MloConfig{}, kVeh);
    const double err_post = std::abs(density_forward(st.net, r) - rho_true) / rho_true;
    EXPECT_GT(res.accepted, 0);
    EXPECT_LT(err_post, err_pre);
    EXPECT_LE(res.loss_post, res.loss_pre);
}

TEST(Mlo, AcceptedStepsNeverIncreaseLoss) {
    const MlpDensityNet& net = nominal_net();
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> scale(0.7, 1.5);
    ConsiderFilterState st = make_consider_state(state_after(110), default_P0(), net, EcrvConfig{}, MloConfig{});
    for (int k = 1; k <= 20; ++k) {
        st.k_meas = k;
        const MeasVec y = measure_vec(st.x_hat, scale(rng) * density_forward(net, st.x_hat[ix::r]), kVeh);
        const MeasMat R = build_R(y, NoiseSpec{});
        // One iteration at a time so the loss can be checked after every step.
        MloConfig one;
        one.max_iters = 1;
        double prev = mlo_loss(st.net, st.x_hat, y, R.inverse(), kVeh, velocity_to_body(kVeh));
        for (int it = 0; it < 10; ++it) {
            const MloResult r = mlo(st, y, R, one, kVeh);
            EXPECT_LE(r.loss_post, prev);
            EXPECT_NEAR(r.loss_pre, prev, 1e-12 * std::max(1.0, prev));
            prev = r.loss_post;
        }
    }
}

TEST(Mlo, RequiresMeasurementCounter) {
    ConsiderFilterState st = make_consider_state(state_after(0), default_P0(), nominal_net(), EcrvConfig{}, MloConfig{});
    EXPECT_THROW(mlo(st, MeasVec::Ones(), MeasMat::Identity(), MloConfig{}, kVeh), Error);
}

TEST(Mlo, LossGradientFiniteDifferences) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> t_pre(60.0, 200.0), scale(0.6, 1.6);
    const Eigen::Matrix3d tvb = velocity_to_body(kVeh);
    for (int trial = 0; trial < 10; ++trial) {
        const MlpDensityNet n = random_net(rng);
        const StateVec x = state_after(t_pre(rng));
        const MeasVec y = measure_vec(x, scale(rng) * density_forward(n, x[ix::r]), kVeh);
        const MeasMat Ri = build_R(y, NoiseSpec{}).inverse();
        const LossGradient lg = mlo_loss_gradient(n, x, y, Ri, kVeh, tvb);
        EXPECT_NEAR(lg.loss, mlo_loss(n, x, y, Ri, kVeh, tvb), 1e-10 * lg.loss);
        const ParamVec p = n.params();
        ParamVec fd;
        for (int i = 0; i < kNumParams; ++i) {
            const double h = 1e-6 * std::max(1.0, std::abs(p[i]));
            MlpDensityNet a = n, b = n;
            ParamVec pa = p, pb = p;
            pa[i] += h;
            pb[i] -= h;
            a.set_params(pa);
            b.set_params(pb);
            fd[i] = (mlo_loss(a, x, y, Ri, kVeh, tvb) - mlo_loss(b, x, y, Ri, kVeh, tvb)) / (2 * h);
        }
        EXPECT_LT((fd - lg.grad).norm() / lg.grad.norm(), 1e-6) << "trial " << trial;
    }
}

TEST(UskfNnStep, NoiselessMatchedModelIsConsistent) {
    const MlpDensityNet& net = nominal_net();
    auto rho = [&net](double r) { return density_forward(net, r); };
    const int n = 200;  // 50 s
    const Arc arc = make_arc(state_after(100), rho, n);
    const StateMat P0 = default_P0();
    const StateVec s0 = P0.diagonal().cwiseSqrt();
    StateVec x0 = arc.x[0];
    x0 += 0.5 * s0.cwiseProduct((StateVec() << 1, -1, 1, -1, 1, -1, 0.5, -0.5).finished());
    const StateVec err0 = (x0 - arc.x[0]).cwiseAbs();
    ConsiderFilterState st = make_consider_state(x0, P0, net, EcrvConfig{}, MloConfig{});
    const NoiseSpec noise{};
    for (int k = 1; k <= n; ++k) {
        uskf_propagate(st, kDt, kSub, default_Q(), EcrvConfig{}, UtConfig{}, kVeh);
        ++st.k_meas;
        const double prior_trace = (st.P.diagonal().array() / s0.array().square()).sum();
        const MeasMat R = predicted_R(st, noise, kVeh);
        mlo(st, arc.y[k], R, MloConfig{}, kVeh);
        uskf_update(st, arc.y[k], R, UtConfig{}, kVeh);
        const double post_trace = (st.P.diagonal().array() / s0.array().square()).sum();
        EXPECT_LE(post_trace, prior_trace * (1.0 + 1e-12)) << "epoch " << k;
        const StateVec z = ((st.x_hat - arc.x[k]).array() / st.P.diagonal().cwiseSqrt().array()).abs();
        // first updates are overconfident on L/D (precise accel, wide prior), settled by epoch ~5
        if (k > 10) {
            EXPECT_LE(z.maxCoeff(), 3.0) << "epoch " << k;
        }
    }
    const StateVec err = (st.x_hat - arc.x[n]).cwiseAbs();
    EXPECT_LT(err[ix::B], 0.1 * err0[ix::B]);
    EXPECT_LT(err[ix::LoD], 0.1 * err0[ix::LoD]);
}

// ---- UKF-AC ----------------------------------------------------------------

TEST(UkfAc, UnitCorrectionGivesNominalDensity) {
    AcFilterState st = make_ac_state(state_after(100), default_P0(), 1.0, kNom, AcConfig{});
    EXPECT_EQ(st.density_estimate(), exp_density(kNom, st.x_hat()[ix::r]));
    EXPECT_EQ(st.correction(), 1.0);
}

TEST(UkfAc, FrozenCorrectionEqualsPlainUkf) {
    auto rho = [](double r) { return exp_density(kNom, r); };
    const Arc arc = make_arc(state_after(100), rho, 40);
    AcConfig frozen{0.0, 0.0};
    AcFilterState st = make_ac_state(arc.x[0], default_P0(), 1.0, kNom, frozen);
    Gaussian g{arc.x[0], default_P0()};
    const Eigen::Matrix3d tvb = velocity_to_body(kVeh);
    const StateVec s = default_P0().diagonal().cwiseSqrt();
    for (int k = 1; k <= 40; ++k) {
        const MeasVec y = arc.y[k] * (1.0 + 0.002 * std::sin(k));
        ukf_ac_step(st, y, kDt, kSub, default_Q(), NoiseSpec{}, UtConfig{}, frozen, kVeh);
        const Gaussian prior = ut_predict(g, default_Q(), UtConfig{}, [&](const Eigen::VectorXd& x) {
            return Eigen::VectorXd(propagate(StateVec(x), kDt, kSub, rho, kVeh));
        });
        const MeasMat R = build_R(measure_vec(StateVec(prior.x), rho(prior.x[ix::r]), kVeh, tvb), NoiseSpec{});
        g = ut_update(prior, y, R, UtConfig{}, [&](const Eigen::VectorXd& x) {
                return Eigen::VectorXd(measure_vec(StateVec(x), rho(x[ix::r]), kVeh, tvb));
            }).posterior;
        // zero K variance sends the 9x9 factorisation through the jitter path
        EXPECT_LT(((st.x_hat() - g.x).array() / s.array()).abs().maxCoeff(), 1e-6) << k;
        EXPECT_EQ(st.correction(), 1.0);
    }
}

TEST(UkfAc, MatchedNominalStaysWithinBounds) {
    auto rho = [](double r) { return exp_density(kNom, r); };
    const Arc arc = make_arc(state_after(100), rho, 400);
    AcFilterState st = make_ac_state(arc.x[0], default_P0(), 1.0, kNom, AcConfig{});
    for (int k = 1; k <= 400; ++k) {
        ukf_ac_step(st, arc.y[k], kDt, kSub, default_Q(), NoiseSpec{}, UtConfig{}, AcConfig{}, kVeh);
        const double sk = std::sqrt(st.g.P(kStateDim, kStateDim));
        EXPECT_LE(std::abs(st.correction() - 1.0), 3.0 * sk) << k;
    }
}

TEST(UkfAc, StepResponseTowardScaledTruth) {
    auto rho = [](double r) { return 1.5 * exp_density(kNom, r); };
    const int n = 400;
    const Arc arc = make_arc(state_after(100), rho, n);
    AcConfig ac;
    ac.p_k0 = 0.1;
    AcFilterState st = make_ac_state(arc.x[0], default_P0(), 1.0, kNom, ac);
    std::vector<double> err;
    for (int k = 1; k <= n; ++k) {
        ukf_ac_step(st, arc.y[k], kDt, kSub, default_Q(), NoiseSpec{}, UtConfig{}, ac, kVeh);
        if (k % 40 == 0) err.push_back(std::abs(st.correction() - 1.5));
    }
    EXPECT_LT(err.back(), 0.02);
    for (std::size_t i = 2; i < err.size(); ++i) EXPECT_LE(err[i], err[i - 1] + 1e-3) << i;
}

// ---- covariance matching ----------------------------------------------------

TEST(CovarianceMatching, ZeroInnovationsGiveZeroQ) {
    ProcessNoiseMatcher m(10);
    const Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(3, 3) * 0.3;
    const Eigen::MatrixXd Ppost = Eigen::MatrixXd::Identity(3, 3) * 2.0;
    const Eigen::VectorXd x = Eigen::VectorXd::Ones(3);
    for (int i = 0; i < 9; ++i) {
        m.push(x, x, Ppost + Q, Q, Ppost);
        EXPECT_FALSE(m.estimate().has_value());
    }
    m.push(x, x, Ppost + Q, Q, Ppost);
    ASSERT_TRUE(m.full());
    EXPECT_LT(m.estimate()->cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CovarianceMatching, WindowIsTen) {
    ProcessNoiseMatcher m;
    const Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
    for (int i = 0; i < 25; ++i) m.push(x, x, I, I, I);
    EXPECT_EQ(m.size(), 10u);
}

TEST(CovarianceMatching, LinearScalarSystemRecoversQ) {
    // x_{k+1} = x_k + w, w ~ N(0, Q); y = x + v, v ~ N(0, R).
    const double Q_true = 0.04, R = 0.01;
    std::mt19937_64 rng(2025);
    std::normal_distribution<double> g;
    ProcessNoiseMatcher m(10);
    double x = 0.0, xh = 0.0, P = 1.0, Q = 1.0;
    double sum = 0.0;
    int n = 0;
    for (int k = 0; k < 2000; ++k) {
        x += std::sqrt(Q_true) * g(rng);
        const double y = x + std::sqrt(R) * g(rng);
        const double xp = xh, Pp = P + Q;
        const double K = Pp / (Pp + R);
        xh = xp + K * (y - xp);
        P = (1.0 - K) * Pp;
        m.push(Eigen::VectorXd::Constant(1, xp), Eigen::VectorXd::Constant(1, xh),
               Eigen::MatrixXd::Constant(1, 1, Pp), Eigen::MatrixXd::Constant(1, 1, Q),
               Eigen::MatrixXd::Constant(1, 1, P));
        if (auto q = m.estimate()) {
            Q = (*q)(0, 0);
            sum += Q;
            ++n;
        }
    }
    ASSERT_GT(n, 1900);
    EXPECT_NEAR(sum / n, Q_true, 0.5 * Q_true);
}

TEST(CovarianceMatching, RZeroInnovations) {
    const int N = 10;
    std::vector<Eigen::VectorXd> nu(N, Eigen::VectorXd::Zero(2));
    std::vector<Eigen::MatrixXd> hph;
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(2, 2);
    for (int i = 0; i < N; ++i) {
        Eigen::MatrixXd H(2, 2);
        H << 1.0 + i, 0.1 * i, 0.1 * i, 2.0;
        hph.push_back(H);
        mean += H / N;
    }
    const Eigen::MatrixXd R = estimate_R_matching(nu, hph);
        // 1/(N-1) * (N-1)/N * sum = mean
    EXPECT_LT((R + mean).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CovarianceMatching, RWhiteInnovations) {
    Eigen::Matrix2d S;
    S << 2.0, 0.5, 0.5, 1.0;
    const Eigen::Matrix2d L = S.llt().matrixL();
    std::mt19937_64 rng(77);
    std::normal_distribution<double> g;
    const int N = 200;
    std::vector<Eigen::VectorXd> nu;
    std::vector<Eigen::MatrixXd> hph(N, Eigen::MatrixXd::Zero(2, 2));
    for (int i = 0; i < N; ++i) nu.push_back(L * Eigen::Vector2d(g(rng), g(rng)));
    const Eigen::MatrixXd R = estimate_R_matching(nu, hph);
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(R(i, i), S(i, i), 0.3 * S(i, i));
    EXPECT_NEAR(R(0, 1), S(0, 1), 0.3 * std::sqrt(S(0, 0) * S(1, 1)));
}

TEST(CovarianceMatching, SingleSampleIsAnError) {
    std::vector<Eigen::VectorXd> nu(1, Eigen::VectorXd::Zero(2));
    std::vector<Eigen::MatrixXd> hph(1, Eigen::MatrixXd::Zero(2, 2));
    EXPECT_THROW(estimate_R_matching(nu, hph), Error);
    EXPECT_THROW(ProcessNoiseMatcher(1), Error);
}

TEST(UkfCm, AdoptsMatchedQAfterWindow) {
    auto rho = [](double r) { return exp_density(kNom, r); };
    const Arc arc = make_arc(state_after(100), rho, 20);
    CmFilterState st = make_cm_state(arc.x[0], default_P0(), default_Q(), kNom);
    for (int k = 1; k <= 20; ++k) {
        ukf_cm_step(st, arc.y[k], kDt, kSub, NoiseSpec{}, UtConfig{}, kVeh);
        if (k < 10) {
            EXPECT_EQ(st.Q, Eigen::MatrixXd(default_Q()));
        }
    }
    EXPECT_NE(st.Q, Eigen::MatrixXd(default_Q()));
    EXPECT_TRUE((st.Q.diagonal().array() >= 0.0).all());
    EXPECT_EQ((st.Q - Eigen::MatrixXd(st.Q.diagonal().asDiagonal())).cwiseAbs().maxCoeff(), 0.0);
}
