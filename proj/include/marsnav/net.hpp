#ifndef MARSNAV_NET_HPP
#define MARSNAV_NET_HPP

// Single-hidden-layer tanh network mapping planet-centric radius to density.
//
//   i   = (r - r_mean) / r_std
//   a   = tanh(W_in * i + b_in)
//   o   = W_out . a + b_out
//   vr  = o * varrho_std + varrho_mean
//   rho = 10^(B_shift - vr^2)
//
// The parameter vector is laid out as [W_in | b_in | W_out | b_out].

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "marsnav/error.hpp"

namespace marsnav {

inline constexpr int kHidden = 100;
inline constexpr int kNumParams = 3 * kHidden + 1;
using HiddenVec = Eigen::Matrix<double, kHidden, 1>;
using ParamVec = Eigen::Matrix<double, kNumParams, 1>;

inline constexpr double kLn10 = std::numbers::ln10;

struct MlpDensityNet {
    HiddenVec w_in = HiddenVec::Zero();
    HiddenVec b_in = HiddenVec::Zero();
    HiddenVec w_out = HiddenVec::Zero();
    double b_out = 0.0;
    double r_mean = 0.0;
    double r_std = 1.0;
    double varrho_mean = 0.0;
    double varrho_std = 1.0;
    double b_shift = 0.0;

    ParamVec params() const {
        ParamVec p;
        p << w_in, b_in, w_out, b_out;
        return p;
    }
    void set_params(const ParamVec& p) {
        w_in = p.segment<kHidden>(0);
        b_in = p.segment<kHidden>(kHidden);
        w_out = p.segment<kHidden>(2 * kHidden);
        b_out = p[3 * kHidden];
    }
};

/// varrho = sqrt(B - log10 rho).
inline double density_to_varrho(double rho, double b_shift = 0.0) {
    return std::sqrt(b_shift - std::log10(rho));
}
inline double varrho_to_density(double varrho, double b_shift = 0.0) {
    return std::pow(10.0, b_shift - varrho * varrho);
}

inline double density_forward(const MlpDensityNet& net, double r) {
    const double in = (r - net.r_mean) / net.r_std;
    const double o = net.w_out.dot((net.w_in * in + net.b_in).array().tanh().matrix()) + net.b_out;
    return varrho_to_density(o * net.varrho_std + net.varrho_mean, net.b_shift);
}

struct DensityGradient {
    double rho;
    ParamVec grad;  ///< d rho / d params
};

/// Reverse-mode gradient of the density with respect to every parameter.
inline DensityGradient density_gradient(const MlpDensityNet& net, double r) {
    const double in = (r - net.r_mean) / net.r_std;
    const HiddenVec a = (net.w_in * in + net.b_in).array().tanh().matrix();
    const double o = net.w_out.dot(a) + net.b_out;
    const double vr = o * net.varrho_std + net.varrho_mean;
    const double rho = varrho_to_density(vr, net.b_shift);

    // rho = 10^(B - vr^2)  =>  d rho / d o = rho * ln10 * (-2 vr) * varrho_std
    const double g_o = rho * kLn10 * (-2.0 * vr) * net.varrho_std;
    const HiddenVec g_z = (g_o * net.w_out.array() * (1.0 - a.array().square())).matrix();

    DensityGradient out{rho, ParamVec()};
    out.grad.segment<kHidden>(0) = g_z * in;
    out.grad.segment<kHidden>(kHidden) = g_z;
    out.grad.segment<kHidden>(2 * kHidden) = g_o * a;
    out.grad[3 * kHidden] = g_o;
    return out;
}

/// Adam moving averages. No bias correction is applied.
struct AdamState {
    Eigen::VectorXd m;  ///< moving average of the gradient
    Eigen::VectorXd v;  ///< moving average of the squared gradient
    double beta1 = 0.1;
    double beta2 = 0.9;
    double eps = 1e-8;
    long step_count = 0;
    bool initialized = false;

    /// First-use initialisation: m = 0, v = g^2.
    void prime(const Eigen::VectorXd& g) {
        m = Eigen::VectorXd::Zero(g.size());
        v = g.array().square().matrix();
        initialized = true;
    }
};

/// One Adam update in place, without bias correction:
///   m' = b1 m + (1-b1) g;  v' = b2 v + (1-b2) g^2;  p' = p - lr m' / (sqrt(v') + eps)
template <class Derived>
void adam_step(Eigen::MatrixBase<Derived>& params, const Eigen::VectorXd& grad, AdamState& st,
               double lr) {
    if (grad.size() != params.size() || st.m.size() != params.size() ||
        st.v.size() != params.size())
        throw Error("adam_step: shape mismatch");
    st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
    st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.array().square().matrix();
    params -= (lr * st.m.array() / (st.v.array().sqrt() + st.eps)).matrix();
    ++st.step_count;
}

// ---- JSON -----------------------------------------------------------------

inline std::string dump_network(const MlpDensityNet& net) {
    auto arr = [](const HiddenVec& v) { return std::vector<double>(v.data(), v.data() + kHidden); };
    nlohmann::ordered_json j;
    j["format"] = 1;
    j["hidden"] = kHidden;
    j["W_in"] = arr(net.w_in);
    j["b_in"] = arr(net.b_in);
    j["W_out"] = arr(net.w_out);
    j["b_out"] = net.b_out;
    j["r_mean"] = net.r_mean;
    j["r_std"] = net.r_std;
    j["varrho_mean"] = net.varrho_mean;
    j["varrho_std"] = net.varrho_std;
    j["B_shift"] = net.b_shift;
    return j.dump(1) + "\n";
}

inline MlpDensityNet parse_network(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("network JSON: ") + e.what());
    }
    try {
        if (j.at("format").get<int>() != 1) throw IoError("network JSON: unsupported format");
        if (j.at("hidden").get<int>() != kHidden) throw IoError("network JSON: hidden width mismatch");
        auto vec = [&](const char* key) {
            const auto v = j.at(key).get<std::vector<double>>();
            if (v.size() != kHidden) throw IoError(std::string("network JSON: bad length for ") + key);
            return HiddenVec(Eigen::Map<const HiddenVec>(v.data()));
        };
        MlpDensityNet net;
        net.w_in = vec("W_in");
        net.b_in = vec("b_in");
        net.w_out = vec("W_out");
        net.b_out = j.at("b_out").get<double>();
        net.r_mean = j.at("r_mean").get<double>();
        net.r_std = j.at("r_std").get<double>();
        net.varrho_mean = j.at("varrho_mean").get<double>();
        net.varrho_std = j.at("varrho_std").get<double>();
        net.b_shift = j.at("B_shift").get<double>();
        if (!(net.r_std > 0.0) || !(net.varrho_std > 0.0))
            throw IoError("network JSON: normalisation scales must be positive");
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("network JSON: ") + e.what());
    }
}

inline void save_network(const MlpDensityNet& net, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << dump_network(net);
}

inline MlpDensityNet load_network(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path.string());
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_network(text);
}

}  // namespace marsnav

#endif  // MARSNAV_NET_HPP
