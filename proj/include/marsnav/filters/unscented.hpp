#ifndef MARSNAV_FILTERS_UNSCENTED_HPP
#define MARSNAV_FILTERS_UNSCENTED_HPP

// Sigma-point generation, weights and generic unscented predict/update.

#include <cmath>
#include <optional>

#include <Eigen/Dense>

#include "marsnav/error.hpp"

namespace marsnav::filters {

/// Unscented transform scalars. kappa unset means kappa = 3 - L.
struct UtConfig {
    double alpha = 1.0;
    double beta = 2.0;
    std::optional<double> kappa;

    double kappa_for(int L) const { return kappa ? *kappa : 3.0 - L; }
    double lambda(int L) const { return alpha * alpha * (L + kappa_for(L)) - L; }
};

struct SigmaWeights {
    Eigen::VectorXd wm;
    Eigen::VectorXd wc;
    double lambda = 0.0;
};

inline SigmaWeights sigma_weights(int L, const UtConfig& ut) {
    if (L < 1) throw Error("sigma_weights: dimension must be >= 1");
    const double lam = ut.lambda(L);
    if (!(L + lam > 0.0)) throw Error("sigma_weights: L + lambda must be positive");
    SigmaWeights w;
    w.lambda = lam;
    w.wm = Eigen::VectorXd::Constant(2 * L + 1, 1.0 / (2.0 * (L + lam)));
    w.wc = w.wm;
    w.wm[0] = lam / (L + lam);
    w.wc[0] = w.wm[0] + 1.0 - ut.alpha * ut.alpha + ut.beta;
    return w;
}

/// Lower Cholesky factor of a symmetrised covariance. On failure, retries
/// with a jitter proportional to each diagonal entry, escalating from 1e-12.
inline Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& P) {
    const Eigen::MatrixXd S = 0.5 * (P + P.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    const Eigen::VectorXd d = S.diagonal().cwiseAbs().cwiseMax(1e-300);
    for (double jitter = 1e-12; jitter <= 1e-6; jitter *= 100.0) {
        Eigen::MatrixXd J = S;
        J.diagonal() += jitter * d;
        llt.compute(J);
        if (llt.info() == Eigen::Success) return llt.matrixL();
    }
    throw CovarianceError("covariance is not positive semi-definite");
}

struct SigmaSet {
    Eigen::MatrixXd points;  ///< L x (2L+1), column 0 is the mean
    SigmaWeights w;
};

/// X0 = x; X_i = x +/- column i of chol((L + lambda) P).
inline SigmaSet sigma_points(const Eigen::VectorXd& x, const Eigen::MatrixXd& P, const UtConfig& ut) {
    const auto L = static_cast<int>(x.size());
    if (P.rows() != L || P.cols() != L) throw Error("sigma_points: covariance shape mismatch");
    SigmaSet s;
    s.w = sigma_weights(L, ut);
    const Eigen::MatrixXd S = robust_cholesky((L + s.w.lambda) * P);
    s.points.resize(L, 2 * L + 1);
    s.points.col(0) = x;
    for (int i = 0; i < L; ++i) {
        s.points.col(1 + i) = x + S.col(i);
        s.points.col(1 + L + i) = x - S.col(i);
    }
    return s;
}

inline Eigen::VectorXd weighted_mean(const Eigen::MatrixXd& pts, const Eigen::VectorXd& wm) {
    return pts * wm;
}

/// sum_i wc_i (A_i - a)(B_i - b)^T
inline Eigen::MatrixXd weighted_cross(const Eigen::MatrixXd& A, const Eigen::VectorXd& a,
                                      const Eigen::MatrixXd& B, const Eigen::VectorXd& b,
                                      const Eigen::VectorXd& wc) {
    const Eigen::MatrixXd dA = A.colwise() - a;
    const Eigen::MatrixXd dB = B.colwise() - b;
    return dA * wc.asDiagonal() * dB.transpose();
}

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& P) { return 0.5 * (P + P.transpose()); }

struct Gaussian {
    Eigen::VectorXd x;
    Eigen::MatrixXd P;
};

/// Unscented prediction through `f` (column -> column) plus additive Q.
template <class F>
Gaussian ut_predict(const Gaussian& prior, const Eigen::MatrixXd& Q, const UtConfig& ut, F&& f) {
    const SigmaSet s = sigma_points(prior.x, prior.P, ut);
    Eigen::MatrixXd out(prior.x.size(), s.points.cols());
    for (Eigen::Index i = 0; i < s.points.cols(); ++i) out.col(i) = f(Eigen::VectorXd(s.points.col(i)));
    Gaussian g;
    g.x = weighted_mean(out, s.w.wm);
    g.P = symmetrize(weighted_cross(out, g.x, out, g.x, s.w.wc) + Q);
    return g;
}

struct UpdateResult {
    Gaussian posterior;
    Eigen::VectorXd innovation;  ///< y - y_hat
    Eigen::MatrixXd Pyy;         ///< innovation covariance (includes R)
    bool applied = true;         ///< false when Pyy could not be inverted
};

/// Standard unscented measurement update through `h`.
template <class H>
UpdateResult ut_update(const Gaussian& prior, const Eigen::VectorXd& y, const Eigen::MatrixXd& R,
                       const UtConfig& ut, H&& h) {
    const SigmaSet s = sigma_points(prior.x, prior.P, ut);
    Eigen::MatrixXd Y(y.size(), s.points.cols());
    for (Eigen::Index i = 0; i < s.points.cols(); ++i) Y.col(i) = h(Eigen::VectorXd(s.points.col(i)));
    const Eigen::VectorXd y_hat = weighted_mean(Y, s.w.wm);
    UpdateResult res;
    res.innovation = y - y_hat;
    res.Pyy = symmetrize(weighted_cross(Y, y_hat, Y, y_hat, s.w.wc) + R);
    const Eigen::MatrixXd Pxy = weighted_cross(s.points, prior.x, Y, y_hat, s.w.wc);
    Eigen::LLT<Eigen::MatrixXd> llt(res.Pyy);
    if (llt.info() != Eigen::Success) {
        res.posterior = prior;
        res.applied = false;
        return res;
    }
    const Eigen::MatrixXd K = llt.solve(Pxy.transpose()).transpose();
    res.posterior.x = prior.x + K * res.innovation;
    res.posterior.P = symmetrize(prior.P - K * res.Pyy * K.transpose());
    return res;
}

}  // namespace marsnav::filters

#endif  // MARSNAV_FILTERS_UNSCENTED_HPP
