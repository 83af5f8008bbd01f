#ifndef MARSNAV_FILTERS_COVARIANCE_MATCHING_HPP
#define MARSNAV_FILTERS_COVARIANCE_MATCHING_HPP

// Batch covariance matching (Myers-Tapley) for process and measurement
// noise, over a sliding window of innovations.

#include <cstddef>
#include <deque>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "marsnav/error.hpp"

namespace marsnav::filters {

/// Q_hat = 1/(N-1) sum_i [ (nu_i - nu_bar)(nu_i - nu_bar)^T
///                          - (N-1)/N (Phi P+_{i-1} Phi^T - P+_i) ]
/// `propagated` holds the Phi P+ Phi^T terms, `posteriors` the P+_i.
inline Eigen::MatrixXd estimate_Q_matching(const std::vector<Eigen::VectorXd>& innovations,
                                           const std::vector<Eigen::MatrixXd>& propagated,
                                           const std::vector<Eigen::MatrixXd>& posteriors) {
    const std::size_t N = innovations.size();
    if (N < 2) throw Error("estimate_Q_matching: need at least two innovations");
    if (propagated.size() != N || posteriors.size() != N)
        throw Error("estimate_Q_matching: window length mismatch");
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(innovations.front().size());
    for (const auto& nu : innovations) mean += nu;
    mean /= static_cast<double>(N);
    const double n = static_cast<double>(N);
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(mean.size(), mean.size());
    for (std::size_t i = 0; i < N; ++i) {
        const Eigen::VectorXd d = innovations[i] - mean;
        Q += d * d.transpose() - (n - 1.0) / n * (propagated[i] - posteriors[i]);
    }
    return Q / (n - 1.0);
}

/// R_hat = 1/(N-1) sum_i [ (nu_i - nu_bar)(nu_i - nu_bar)^T - (N-1)/N H P-_i H^T ]
/// with H P- H^T taken from the unscented filter as P_yy - R.
inline Eigen::MatrixXd estimate_R_matching(const std::vector<Eigen::VectorXd>& innovations,
                                           const std::vector<Eigen::MatrixXd>& hph) {
    const std::size_t N = innovations.size();
    if (N < 2) throw Error("estimate_R_matching: need at least two innovations");
    if (hph.size() != N) throw Error("estimate_R_matching: window length mismatch");
    std::vector<Eigen::MatrixXd> zeros(N, Eigen::MatrixXd::Zero(hph.front().rows(), hph.front().cols()));
    return estimate_Q_matching(innovations, hph, zeros);
}

/// Sliding window feeding estimate_Q_matching. For an unscented filter the
/// state innovation is x+_k - x-_k and Phi P+_{k-1} Phi^T ~= P-_k - Q_used.
class ProcessNoiseMatcher {
public:
    explicit ProcessNoiseMatcher(std::size_t window = 10, bool keep_off_diagonal = false)
        : window_(window), keep_off_diagonal_(keep_off_diagonal) {
        if (window_ < 2) throw Error("ProcessNoiseMatcher: window must be >= 2");
    }

    void push(const Eigen::VectorXd& x_prior, const Eigen::VectorXd& x_post,
              const Eigen::MatrixXd& P_prior, const Eigen::MatrixXd& Q_used,
              const Eigen::MatrixXd& P_post) {
        nu_.push_back(x_post - x_prior);
        phi_.push_back(P_prior - Q_used);
        post_.push_back(P_post);
        if (nu_.size() > window_) {
            nu_.pop_front();
            phi_.pop_front();
            post_.pop_front();
        }
    }

    bool full() const noexcept { return nu_.size() == window_; }
    std::size_t size() const noexcept { return nu_.size(); }

    /// Q_hat with its diagonal replaced by absolute values (off-diagonal terms
    /// zeroed unless kept); nullopt while the window is still filling.
    std::optional<Eigen::MatrixXd> estimate() const {
        if (!full()) return std::nullopt;
        Eigen::MatrixXd Q = estimate_Q_matching({nu_.begin(), nu_.end()}, {phi_.begin(), phi_.end()},
                                                {post_.begin(), post_.end()});
        if (!keep_off_diagonal_) return Eigen::MatrixXd(Q.diagonal().cwiseAbs().asDiagonal());
        Q.diagonal() = Q.diagonal().cwiseAbs();
        return Q;
    }

private:
    std::size_t window_;
    bool keep_off_diagonal_;
    std::deque<Eigen::VectorXd> nu_;
    std::deque<Eigen::MatrixXd> phi_;
    std::deque<Eigen::MatrixXd> post_;
};

}  // namespace marsnav::filters

#endif  // MARSNAV_FILTERS_COVARIANCE_MATCHING_HPP
