#ifndef MARSNAV_TRAIN_HPP
#define MARSNAV_TRAIN_HPP

// Offline data generation and training of the density network on an
// exponential atmosphere fit.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "marsnav/atmos.hpp"
#include "marsnav/dynamics.hpp"
#include "marsnav/error.hpp"
#include "marsnav/net.hpp"
#include "marsnav/random.hpp"

namespace marsnav {

struct TrainingConfig {
    int trajectories = 1000;
    double duration = 250.0;         ///< s
    double sample_interval = 0.5;    ///< s
    double dt = 0.05;                ///< integrator step, s
    int epochs = 1000;
    double lr_min = 1e-6;
    double lr_max = 1e-2;
    double warmup_fraction = 0.1;
    double validation_fraction = 0.2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 1024;  ///< samples per Adam step; 0 means full batch
    EntryDistribution entry;
    VehicleConfig vehicle;
};

inline void validate(const TrainingConfig& c) {
    if (c.trajectories < 2) throw ConfigError("training: need at least two trajectories");
    if (!(c.duration > 0.0) || !(c.sample_interval > 0.0) || !(c.dt > 0.0))
        throw ConfigError("training: durations must be positive");
    const double steps = c.sample_interval / c.dt;
    if (std::abs(steps - std::round(steps)) > 1e-9)
        throw ConfigError("training: sample_interval must be a multiple of dt");
    if (c.epochs < 1) throw ConfigError("training: epochs must be >= 1");
    if (!(c.lr_min > 0.0 && c.lr_max >= c.lr_min)) throw ConfigError("training: bad learning-rate range");
    if (!(c.warmup_fraction >= 0.0 && c.warmup_fraction < 1.0))
        throw ConfigError("training: warmup_fraction must lie in [0, 1)");
    if (!(c.validation_fraction > 0.0 && c.validation_fraction < 1.0))
        throw ConfigError("training: validation_fraction must lie in (0, 1)");
}

/// One-cycle cosine schedule: lr_min -> lr_max over the warm-up epochs, then
/// back down to lr_min at the last epoch.
inline double one_cycle_lr(int epoch, int epochs, double lr_min, double lr_max, double warmup) {
    const int warm = static_cast<int>(std::ceil(warmup * epochs));
    const double span = lr_max - lr_min;
    if (epoch < warm) return lr_min + span * 0.5 * (1.0 - std::cos(std::numbers::pi * epoch / warm));
    const int rest = epochs - warm - 1;
    const double p = rest > 0 ? static_cast<double>(epoch - warm) / rest : 1.0;
    return lr_min + span * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
}

/// (r, rho) samples of one simulated trajectory under a density model.
struct TrajectorySamples {
    std::vector<double> r;
    std::vector<double> rho;
};

template <class Density>
TrajectorySamples sample_trajectory(const EntryState& s0, Density&& density,
                                    const TrainingConfig& c) {
    const int per_sample = static_cast<int>(std::lround(c.sample_interval / c.dt));
    const int n = static_cast<int>(std::lround(c.duration / c.sample_interval));
    TrajectorySamples out;
    out.r.reserve(n + 1);
    out.rho.reserve(n + 1);
    StateVec x = s0.vec();
    out.r.push_back(x[ix::r]);
    out.rho.push_back(density(x[ix::r]));
    for (int k = 0; k < n; ++k) {
        x = propagate(x, c.sample_interval, per_sample, density, c.vehicle);
        out.r.push_back(x[ix::r]);
        out.rho.push_back(density(x[ix::r]));
    }
    return out;
}

struct TrainingReport {
    double train_loss = 0.0;       ///< final MSE in normalised output units
    double validation_loss = 0.0;
    double validation_frac_below_1pct = 0.0;
    double validation_max_rel_error = 0.0;
    std::size_t n_train = 0;
    std::size_t n_validation = 0;
    int epochs = 0;
    std::vector<double> hist_edges;   ///< relative error (fraction), ascending
    std::vector<std::size_t> hist_counts;  ///< counts per [edge_i, edge_{i+1}); last bin open
};

struct TrainingResult {
    MlpDensityNet net;
    TrainingReport report;
};

namespace detail {

// MSE and its gradient over a batch of normalised samples, in fixed-size
// chunks so the reduction order is deterministic.
inline double mse_and_gradient(const MlpDensityNet& net, const Eigen::VectorXd& in,
                               const Eigen::VectorXd& target, ParamVec* grad) {
    constexpr Eigen::Index kChunk = 2048;
    const Eigen::Index n = in.size();
    double sse = 0.0;
    if (grad) grad->setZero();
    Eigen::ArrayXXd z(kHidden, kChunk);
    for (Eigen::Index start = 0; start < n; start += kChunk) {
        const Eigen::Index m = std::min(kChunk, n - start);
        auto zz = z.leftCols(m);
        zz = (net.w_in * in.segment(start, m).transpose()).array().colwise() + net.b_in.array();
        // tanh via exp keeps the batch path vectorised.
        zz = 1.0 - 2.0 / ((2.0 * zz).exp() + 1.0);
        const Eigen::ArrayXd o =
            (net.w_out.transpose() * zz.matrix()).transpose().array() + net.b_out;
        const Eigen::ArrayXd e = o - target.segment(start, m).array();
        sse += e.square().sum();
        if (grad) {
            const Eigen::VectorXd g_o = (2.0 / static_cast<double>(n)) * e.matrix();
            grad->segment<kHidden>(2 * kHidden) += zz.matrix() * g_o;
            (*grad)[3 * kHidden] += g_o.sum();
            zz = (1.0 - zz.square()).colwise() * net.w_out.array();
            zz.rowwise() *= g_o.transpose().array();
            grad->segment<kHidden>(kHidden) += zz.rowwise().sum().matrix();
            grad->segment<kHidden>(0) += zz.matrix() * in.segment(start, m);
        }
    }
    return sse / static_cast<double>(n);
}

}  // namespace detail

/// Algorithm: simulate `trajectories` entries from dispersed initial
/// conditions under the exponential fit, record (r, rho), split 80/20 by
/// trajectory, normalise with training statistics and fit the network with
/// mini-batch Adam under a one-cycle learning-rate schedule.
inline TrainingResult offline_train(const ExpModel& fit, const TrainingConfig& c, std::uint64_t seed) {
    validate(c);
    if (!(fit.rho0 > 0.0) || !(fit.hs > 0.0)) throw ConfigError("offline_train: invalid exponential fit");

    Rng ic_rng(derive_seed(seed, stream::kTraining));
    auto density = [&fit](double r) { return exp_density(fit, r); };
    std::vector<TrajectorySamples> trajs;
    trajs.reserve(static_cast<std::size_t>(c.trajectories));
    for (int i = 0; i < c.trajectories; ++i)
        trajs.push_back(sample_trajectory(EntryState::from(c.entry.sample(ic_rng)), density, c));

    std::vector<int> order(static_cast<std::size_t>(c.trajectories));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), ic_rng);
    const auto n_val_traj = static_cast<std::size_t>(
        std::max(1.0, std::round(c.validation_fraction * c.trajectories)));

    std::vector<double> tr_r, tr_rho, va_r, va_rho;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& t = trajs[static_cast<std::size_t>(order[k])];
        auto& rr = k < n_val_traj ? va_r : tr_r;
        auto& dd = k < n_val_traj ? va_rho : tr_rho;
        rr.insert(rr.end(), t.r.begin(), t.r.end());
        dd.insert(dd.end(), t.rho.begin(), t.rho.end());
    }
    for (double rho : tr_rho)
        if (!(rho > 0.0 && rho < std::pow(10.0, 0.0)))
            throw TrainingError("training density outside (0, 1) kg/m^3; varrho transform undefined", 0);

    MlpDensityNet net;
    net.b_shift = 0.0;
    const auto n = static_cast<Eigen::Index>(tr_r.size());
    Eigen::VectorXd rv(n), vr(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        rv[i] = tr_r[static_cast<std::size_t>(i)];
        vr[i] = density_to_varrho(tr_rho[static_cast<std::size_t>(i)], net.b_shift);
    }
    // Plain sequential sums: Eigen's vectorised reductions peel by runtime
    // address, which would make the last bits allocation dependent.
    auto mean_std = [n](const Eigen::VectorXd& x) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) s += x[i];
        const double mu = s / static_cast<double>(n);
        double q = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) q += (x[i] - mu) * (x[i] - mu);
        return std::pair{mu, std::sqrt(q / static_cast<double>(n))};
    };
    std::tie(net.r_mean, net.r_std) = mean_std(rv);
    std::tie(net.varrho_mean, net.varrho_std) = mean_std(vr);
    if (!(net.r_std > 0.0) || !(net.varrho_std > 0.0))
        throw TrainingError("degenerate training data (zero spread)", 0);

    const Eigen::VectorXd in = (rv.array() - net.r_mean) / net.r_std;
    const Eigen::VectorXd target = (vr.array() - net.varrho_mean) / net.varrho_std;

    // Uniform +-1/sqrt(fan_in) initialisation.
    Rng init_rng(derive_seed(seed, stream::kNetInit));
    std::uniform_real_distribution<double> u_in(-1.0, 1.0);
    const double k_out = 1.0 / std::sqrt(static_cast<double>(kHidden));
    std::uniform_real_distribution<double> u_out(-k_out, k_out);
    for (int j = 0; j < kHidden; ++j) net.w_in[j] = u_in(init_rng);
    for (int j = 0; j < kHidden; ++j) net.b_in[j] = u_in(init_rng);
    for (int j = 0; j < kHidden; ++j) net.w_out[j] = u_out(init_rng);
    net.b_out = u_out(init_rng);

    ParamVec m = ParamVec::Zero(), v = ParamVec::Zero(), grad;
    const Eigen::Index batch = c.batch_size > 0 ? std::min<Eigen::Index>(c.batch_size, n) : n;
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    Rng batch_rng(derive_seed(seed, stream::kTraining, 1));
    Eigen::VectorXd b_in(batch), b_t(batch);
    long step = 0;
    for (int epoch = 0; epoch < c.epochs; ++epoch) {
        const double lr = one_cycle_lr(epoch, c.epochs, c.lr_min, c.lr_max, c.warmup_fraction);
        if (batch < n) std::shuffle(perm.begin(), perm.end(), batch_rng);
        // Trailing partial batch is dropped; it is reshuffled into later epochs.
        for (Eigen::Index start = 0; start + batch <= n; start += batch) {
            double loss;
            if (batch == n) {
                loss = detail::mse_and_gradient(net, in, target, &grad);
            } else {
                for (Eigen::Index k = 0; k < batch; ++k) {
                    b_in[k] = in[perm[static_cast<std::size_t>(start + k)]];
                    b_t[k] = target[perm[static_cast<std::size_t>(start + k)]];
                }
                loss = detail::mse_and_gradient(net, b_in, b_t, &grad);
            }
            if (!std::isfinite(loss) || !grad.allFinite())
                throw TrainingError("non-finite training loss", epoch);
            ++step;
            m = c.beta1 * m + (1.0 - c.beta1) * grad;
            v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseAbs2();
            const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
            ParamVec p = net.params();
            p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
            net.set_params(p);
        }
    }

    TrainingResult res;
    res.net = net;
    auto& rep = res.report;
    rep.epochs = c.epochs;
    rep.n_train = tr_r.size();
    rep.n_validation = va_r.size();
    rep.train_loss = detail::mse_and_gradient(net, in, target, nullptr);
    if (!std::isfinite(rep.train_loss)) throw TrainingError("non-finite training loss", c.epochs);

    Eigen::VectorXd va_in(static_cast<Eigen::Index>(va_r.size())), va_t(va_in.size());
    rep.hist_edges = {0.0, 0.0025, 0.005, 0.0075, 0.01, 0.02, 0.05, 0.1};
    rep.hist_counts.assign(rep.hist_edges.size(), 0);
    std::size_t below = 0;
    for (std::size_t i = 0; i < va_r.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        va_in[ii] = (va_r[i] - net.r_mean) / net.r_std;
        va_t[ii] = (density_to_varrho(va_rho[i], net.b_shift) - net.varrho_mean) / net.varrho_std;
        const double rel = std::abs(density_forward(net, va_r[i]) - va_rho[i]) / va_rho[i];
        rep.validation_max_rel_error = std::max(rep.validation_max_rel_error, rel);
        if (rel < 0.01) ++below;
        std::size_t b = rep.hist_edges.size() - 1;
        while (b > 0 && rel < rep.hist_edges[b]) --b;
        ++rep.hist_counts[b];
    }
    rep.validation_loss = detail::mse_and_gradient(net, va_in, va_t, nullptr);
    rep.validation_frac_below_1pct = va_r.empty() ? 0.0 : static_cast<double>(below) / va_r.size();
    return res;
}

}  // namespace marsnav

#endif  // MARSNAV_TRAIN_HPP
