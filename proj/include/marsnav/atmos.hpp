#ifndef MARSNAV_ATMOS_HPP
#define MARSNAV_ATMOS_HPP

// Atmospheric density models: the onboard exponential law, the COSPAR
// modified exponential, and tabulated profiles with natural cubic spline
// lookup. The tabulated profiles double as the perturbed "truth" atmosphere.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "marsnav/error.hpp"
#include "marsnav/random.hpp"

namespace marsnav {

/// Mars reference (surface) radius used for altitudes, m.
inline constexpr double kMarsRadius = 3.3895e6;

struct ExpModel {
    double rho0 = 0.0158;       ///< density at r0, kg/m^3
    double r0 = kMarsRadius;    ///< reference radius, m
    double hs = 9354.0;         ///< scale height, m
};

inline double exp_density(const ExpModel& m, double r) noexcept {
    return m.rho0 * std::exp(-(r - m.r0) / m.hs);
}

struct CosparModel {
    double rho0 = 0.0158;
    double r0 = kMarsRadius;
    double beta_rho = 1.0 / 9354.0;  ///< 1/m
    double gamma_rho = 0.0;
    double omega_rho = 0.0;  ///< rad/m
    double delta_rho = 0.0;
};

inline double cospar_density(const CosparModel& m, double r) noexcept {
    const double dr = r - m.r0;
    return m.rho0 * std::exp(-m.beta_rho * dr + m.gamma_rho * std::cos(m.omega_rho * dr) +
                             m.delta_rho * std::sin(m.omega_rho * dr));
}

/// Density table on a strictly increasing radius grid, interpolated with a
/// natural cubic spline. Immutable after construction.
class TabulatedProfile {
public:
    TabulatedProfile() = default;

    TabulatedProfile(std::vector<double> radii, std::vector<double> densities)
        : radii_(std::move(radii)), densities_(std::move(densities)) {
        if (radii_.size() != densities_.size())
            throw Error("TabulatedProfile: radii and densities differ in length");
        if (radii_.size() < 2) throw Error("TabulatedProfile: need at least two knots");
        for (std::size_t i = 0; i < radii_.size(); ++i) {
            if (!(densities_[i] > 0.0) || !std::isfinite(densities_[i]))
                throw Error("TabulatedProfile: densities must be positive and finite");
            if (i > 0 && !(radii_[i] > radii_[i - 1]))
                throw Error("TabulatedProfile: radii must be strictly increasing");
        }
        solve_second_derivatives();
    }

    std::span<const double> radii() const noexcept { return radii_; }
    std::span<const double> densities() const noexcept { return densities_; }
    std::span<const double> second_derivatives() const noexcept { return m_; }
    double r_min() const noexcept { return radii_.front(); }
    double r_max() const noexcept { return radii_.back(); }
    std::size_t size() const noexcept { return radii_.size(); }

    /// Natural cubic spline value. Throws ExtrapolationError outside the grid.
    double operator()(double r) const {
        if (!(r >= r_min() && r <= r_max())) {
            std::ostringstream os;
            os << "spline_density: radius " << r << " m outside [" << r_min() << ", " << r_max()
               << "]";
            throw ExtrapolationError(os.str());
        }
        auto it = std::upper_bound(radii_.begin(), radii_.end(), r);
        std::size_t i = static_cast<std::size_t>(it - radii_.begin());
        i = std::clamp<std::size_t>(i, 1, radii_.size() - 1) - 1;
        const double h = radii_[i + 1] - radii_[i];
        const double t = r - radii_[i];
        const double u = radii_[i + 1] - r;
        if (t == 0.0) return densities_[i];
        if (u == 0.0) return densities_[i + 1];
        return m_[i] * u * u * u / (6.0 * h) + m_[i + 1] * t * t * t / (6.0 * h) +
               (densities_[i] / h - m_[i] * h / 6.0) * u +
               (densities_[i + 1] / h - m_[i + 1] * h / 6.0) * t;
    }

private:
    void solve_second_derivatives() {
        const std::size_t n = radii_.size();
        m_.assign(n, 0.0);
        if (n < 3) return;
        // Thomas algorithm on the interior unknowns M_1..M_{n-2}; M_0 = M_{n-1} = 0.
        const std::size_t k = n - 2;
        std::vector<double> diag(k), upper(k), rhs(k);
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t i = j + 1;
            const double h0 = radii_[i] - radii_[i - 1];
            const double h1 = radii_[i + 1] - radii_[i];
            diag[j] = 2.0 * (h0 + h1);
            upper[j] = h1;
            rhs[j] = 6.0 * ((densities_[i + 1] - densities_[i]) / h1 -
                            (densities_[i] - densities_[i - 1]) / h0);
        }
        for (std::size_t j = 1; j < k; ++j) {
            const double lower = radii_[j + 1] - radii_[j];
            const double w = lower / diag[j - 1];
            diag[j] -= w * upper[j - 1];
            rhs[j] -= w * rhs[j - 1];
        }
        m_[k] = rhs[k - 1] / diag[k - 1];
        for (std::size_t j = k - 1; j-- > 0;) m_[j + 1] = (rhs[j] - upper[j] * m_[j + 2]) / diag[j];
    }

    std::vector<double> radii_;
    std::vector<double> densities_;
    std::vector<double> m_;  // second derivatives at the knots
};

inline double spline_density(const TabulatedProfile& p, double r) { return p(r); }

/// Least-squares fit of ln(rho) against (r - r0) over every knot of every
/// profile. r0 is held fixed; rho0 and hs come out of the regression.
inline ExpModel fit_exponential(std::span<const TabulatedProfile> profiles,
                                double r0 = kMarsRadius) {
    if (profiles.empty()) throw FitError("fit_exponential: no profiles");
    double n = 0.0, sx = 0.0, sy = 0.0;
    for (const auto& p : profiles) {
        if (p.size() < 2) throw FitError("fit_exponential: profile with fewer than two knots");
        for (std::size_t i = 0; i < p.size(); ++i) {
            n += 1.0;
            sx += p.radii()[i] - r0;
            sy += std::log(p.densities()[i]);
        }
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& p : profiles) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double dx = p.radii()[i] - r0 - mx;
            sxx += dx * dx;
            sxy += dx * (std::log(p.densities()[i]) - my);
        }
    }
    if (!(sxx > 0.0)) throw FitError("fit_exponential: degenerate radii (all equal)");
    const double slope = sxy / sxx;
    if (!(slope < 0.0)) throw FitError("fit_exponential: density does not decay with radius");
    ExpModel m;
    m.r0 = r0;
    m.hs = -1.0 / slope;
    m.rho0 = std::exp(my - slope * mx);
    return m;
}

/// Settings of the surrogate perturbed-atmosphere generator.
struct AtmosphereGenConfig {
    double alt_min = 0.0;         ///< m
    double alt_max = 150000.0;    ///< m
    double spacing = 500.0;       ///< m
    double sigma_low = 0.02;      ///< fractional 1-sigma perturbation at alt_min
    double sigma_high = 0.45;     ///< fractional 1-sigma perturbation at alt_max
    double corr_length = 8000.0;  ///< m
    // Baseline COSPAR coefficient randomisation.
    double rho0 = 0.0158;
    double hs = 9354.0;
    double rho0_log_sd = 0.05;
    double hs_frac_sd = 0.02;
    double wave_amp_sd = 0.05;
    double wavelength_min = 30000.0;  ///< m
    double wavelength_max = 80000.0;  ///< m
    double r0 = kMarsRadius;
};

inline void validate(const AtmosphereGenConfig& c) {
    if (!(c.sigma_low >= 0.0 && c.sigma_low < 1.0 && c.sigma_high >= 0.0 && c.sigma_high < 1.0))
        throw ConfigError("atmosphere: perturbation bounds must lie in [0, 1)");
    if (!(c.alt_max > c.alt_min) || !(c.spacing > 0.0))
        throw ConfigError("atmosphere: invalid altitude grid");
    if (!(c.corr_length > 0.0)) throw ConfigError("atmosphere: corr_length must be positive");
    if (!(c.rho0 > 0.0) || !(c.hs > 0.0)) throw ConfigError("atmosphere: rho0 and hs must be positive");
    if (!(c.wavelength_min > 0.0 && c.wavelength_max >= c.wavelength_min))
        throw ConfigError("atmosphere: invalid wavelength range");
}

/// COSPAR baseline drawn from the generator's coefficient distribution.
inline CosparModel sample_cospar_baseline(Rng& rng, const AtmosphereGenConfig& c) {
    CosparModel m;
    m.r0 = c.r0;
    m.rho0 = c.rho0 * std::exp(c.rho0_log_sd * standard_normal(rng));
    m.beta_rho = 1.0 / (c.hs * (1.0 + c.hs_frac_sd * standard_normal(rng)));
    m.gamma_rho = c.wave_amp_sd * standard_normal(rng);
    m.delta_rho = c.wave_amp_sd * standard_normal(rng);
    std::uniform_real_distribution<double> wl(c.wavelength_min, c.wavelength_max);
    m.omega_rho = 2.0 * std::numbers::pi / wl(rng);
    return m;
}

struct TruthAtmosphere {
    CosparModel baseline;
    std::vector<double> log_perturbation;  ///< per knot, zero-mean Gaussian field
    TabulatedProfile profile;
};

/// Fractional 1-sigma perturbation at an altitude: linear ramp across the grid.
inline double perturbation_fraction(const AtmosphereGenConfig& c, double alt) {
    const double s = std::clamp((alt - c.alt_min) / (c.alt_max - c.alt_min), 0.0, 1.0);
    return c.sigma_low + (c.sigma_high - c.sigma_low) * s;
}

/// Draws one perturbed profile: randomised COSPAR baseline times a smooth
/// log-normal field (squared-exponential correlation in altitude) whose
/// pointwise std/mean ratio follows perturbation_fraction().
inline TruthAtmosphere sample_truth_atmosphere_full(std::uint64_t seed,
                                                    const AtmosphereGenConfig& c) {
    validate(c);
    Rng rng(seed);
    TruthAtmosphere out;
    out.baseline = sample_cospar_baseline(rng, c);

    const auto n = static_cast<std::size_t>(std::floor((c.alt_max - c.alt_min) / c.spacing + 1e-9)) + 1;
    // White noise on a padded grid, smoothed by a Gaussian kernel of width
    // corr_length / sqrt(2) so the field covariance is exp(-dh^2 / (2 l^2)).
    const double kw = c.corr_length / std::numbers::sqrt2;
    const auto pad = static_cast<std::size_t>(std::ceil(4.0 * kw / c.spacing));
    std::vector<double> white(n + 2 * pad);
    for (auto& w : white) w = standard_normal(rng);
    std::vector<double> kernel(2 * pad + 1);
    double knorm = 0.0;
    for (std::size_t j = 0; j < kernel.size(); ++j) {
        const double d = (static_cast<double>(j) - static_cast<double>(pad)) * c.spacing;
        kernel[j] = std::exp(-0.5 * d * d / (kw * kw));
        knorm += kernel[j] * kernel[j];
    }
    knorm = std::sqrt(knorm);

    std::vector<double> radii(n), dens(n);
    out.log_perturbation.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < kernel.size(); ++j) z += kernel[j] * white[i + j];
        z /= knorm;
        const double alt = c.alt_min + static_cast<double>(i) * c.spacing;
        const double f = perturbation_fraction(c, alt);
        const double s = std::sqrt(std::log1p(f * f));
        out.log_perturbation[i] = s * z;
        radii[i] = c.r0 + alt;
        dens[i] = cospar_density(out.baseline, radii[i]) * std::exp(s * z);
    }
    out.profile = TabulatedProfile(std::move(radii), std::move(dens));
    return out;
}

inline TabulatedProfile sample_truth_atmosphere(std::uint64_t seed, const AtmosphereGenConfig& c) {
    return sample_truth_atmosphere_full(seed, c).profile;
}

// ---- CSV -------------------------------------------------------------------

inline void write_profile_csv(const TabulatedProfile& p, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << "radius_m,density_kgm3\n";
    f.precision(17);
    for (std::size_t i = 0; i < p.size(); ++i) f << p.radii()[i] << ',' << p.densities()[i] << '\n';
    if (!f) throw IoError("write failed: " + path.string());
}

inline TabulatedProfile read_profile_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path.string());
    std::string line;
    std::getline(f, line);
    if (line.rfind("radius_m,density_kgm3", 0) != 0)
        throw IoError(path.string() + ": unexpected header '" + line + "'");
    std::vector<double> r, d;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw IoError(path.string() + ": malformed row");
        r.push_back(std::stod(line.substr(0, comma)));
        d.push_back(std::stod(line.substr(comma + 1)));
    }
    return TabulatedProfile(std::move(r), std::move(d));
}

}  // namespace marsnav

#endif  // MARSNAV_ATMOS_HPP
