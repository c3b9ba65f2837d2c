#pragma once

#include "motis/detail/logmath.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace motis {

using Rng = std::mt19937_64;

/// Kinematic state of one object in the world frame: position (m), velocity (m/s).
struct ObjectState {
    double x = 0.0;
    double y = 0.0;
    double vx = 0.0;
    double vy = 0.0;

    [[nodiscard]] bool finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(vx) && std::isfinite(vy);
    }
    friend bool operator==(const ObjectState&, const ObjectState&) = default;
};

/// One detector output: world-frame position and confidence in [0, 1].
struct Detection {
    double x = 0.0;
    double y = 0.0;
    double c = 0.5;

    [[nodiscard]] bool valid() const {
        return std::isfinite(x) && std::isfinite(y) && c >= 0.0 && c <= 1.0;
    }
    friend bool operator==(const Detection&, const Detection&) = default;
};

/// Confidence given to detections whose detector reports none.
inline constexpr double kDefaultConfidence = 0.5;

/// Axis-aligned monitored region; support of the clutter distribution.
struct Arena {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 19.0;
    double y1 = 15.8;

    [[nodiscard]] double area() const { return (x1 - x0) * (y1 - y0); }
    [[nodiscard]] bool contains(double x, double y) const {
        return x >= x0 && x <= x1 && y >= y0 && y <= y1;
    }
};

/// Tracker and world-model parameters. Defaults are the PETS2009 evaluation values.
struct ModelParams {
    double birth_rate = 0.0;        // lambda, 1/s
    double death_rate = 0.02;       // mu, 1/s per object
    double dash_power_sigma = 1.0;  // sigma_p
    double false_rate = 6.0;        // nu, 1/s
    double miss_rate = 2.0;         // xi, 1/s per object
    double dt = 0.14;               // tau, s
    Eigen::Matrix2d obs_cov = 0.5 * Eigen::Matrix2d::Identity();
    double assign_threshold = 0.1;  // T', 0 disables assignment pruning
    double fm_threshold = 0.001;    // T'', 0 disables false-missing pruning
    double gamma_alpha0 = 2.0;
    double gamma_beta0 = 1.0;
    std::size_t n_particles = 128;
    std::size_t max_em_steps = 10;
    double report_conf = 0.4;
    double bbox_area_min = 0.5;
    double bbox_area_max = 2.5;
    double kde_background = 1.0;    // uniform pseudo-points mixed into the update-time KDE
    Arena arena{};

    /// Throws std::invalid_argument describing the first violated constraint.
    void validate() const {
        auto require = [](bool ok, const char* what) {
            if (!ok) throw std::invalid_argument(std::string("invalid model parameter: ") + what);
        };
        require(birth_rate >= 0.0 && std::isfinite(birth_rate), "birth_rate must be >= 0");
        require(death_rate >= 0.0 && !std::isnan(death_rate), "death_rate must be >= 0");
        require(dash_power_sigma >= 0.0 && std::isfinite(dash_power_sigma), "sigma_p must be >= 0");
        require(false_rate >= 0.0 && std::isfinite(false_rate), "false_rate must be >= 0");
        require(miss_rate >= 0.0 && !std::isnan(miss_rate), "miss_rate must be >= 0");
        require(dt > 0.0 && std::isfinite(dt), "dt must be > 0");
        require(obs_cov.allFinite(), "obs_cov must be finite");
        require(std::abs(obs_cov(0, 1) - obs_cov(1, 0)) <= 1e-12 * (1.0 + obs_cov.cwiseAbs().maxCoeff()),
                "obs_cov must be symmetric");
        require(obs_cov(0, 0) > 0.0 && obs_cov.determinant() > 0.0, "obs_cov must be positive definite");
        require(assign_threshold >= 0.0 && assign_threshold <= 1.0, "t_assign must lie in [0, 1]");
        require(fm_threshold >= 0.0 && std::isfinite(fm_threshold), "t_fm must be >= 0");
        require(gamma_alpha0 > 0.0 && gamma_beta0 > 0.0, "gamma prior parameters must be > 0");
        require(n_particles > 0, "n_particles must be > 0");
        require(max_em_steps > 0, "max_em_steps must be > 0");
        require(report_conf >= 0.0 && report_conf <= 1.0, "report_conf must lie in [0, 1]");
        require(kde_background >= 0.0 && std::isfinite(kde_background), "kde_background must be >= 0");
        require(bbox_area_min < bbox_area_max, "area_min must be < area_max");
        require(arena.area() > 0.0 && std::isfinite(arena.area()), "arena must have positive area");
    }
};

/// Random-acceleration motion: a dash of power p ~ N(0, sigma_p^2) in a uniform direction.
inline ObjectState step_object(const ObjectState& s, const ModelParams& params, Rng& rng) {
    const double tau = params.dt;
    double ax = 0.0;
    double ay = 0.0;
    if (params.dash_power_sigma > 0.0) {
        std::normal_distribution<double> power(0.0, params.dash_power_sigma);
        std::uniform_real_distribution<double> direction(0.0, 2.0 * detail::kPi);
        const double p = power(rng);
        const double theta = direction(rng);
        ax = p * std::cos(theta);
        ay = p * std::sin(theta);
    }
    return ObjectState{
        s.x + s.vx * tau + 0.5 * ax * tau * tau,
        s.y + s.vy * tau + 0.5 * ay * tau * tau,
        s.vx + ax * tau,
        s.vy + ay * tau,
    };
}

/// log N((dx, dy) | 0, cov).
inline double log_gaussian2(double dx, double dy, const Eigen::Matrix2d& cov) {
    const double det = cov.determinant();
    const double a = cov(0, 0), b = cov(0, 1), d = cov(1, 1);
    const double maha = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
    return -std::log(2.0 * detail::kPi) - 0.5 * std::log(det) - 0.5 * maha;
}

/// log Pr(o | s) = log Beta(c | 2, 1) + log N(o.xy | s.xy, Sigma). Velocity is ignored.
inline double log_detect_likelihood(const Detection& o, const ObjectState& s, const ModelParams& params) {
    if (o.c <= 0.0) return detail::kNegInf;
    return std::log(2.0 * o.c) + log_gaussian2(o.x - s.x, o.y - s.y, params.obs_cov);
}

inline double detect_likelihood(const Detection& o, const ObjectState& s, const ModelParams& params) {
    return std::exp(log_detect_likelihood(o, s, params));
}

/// log Pr(o | empty) = log Beta(c | 1, 2) + log U_arena(o.xy).
inline double log_clutter_likelihood(const Detection& o, const ModelParams& params) {
    if (o.c >= 1.0 || !params.arena.contains(o.x, o.y)) return detail::kNegInf;
    return std::log(2.0 * (1.0 - o.c)) - std::log(params.arena.area());
}

inline double clutter_likelihood(const Detection& o, const ModelParams& params) {
    return std::exp(log_clutter_likelihood(o, params));
}

/// Posterior probability that a detection is real, under equal priors and the Beta models.
inline double not_false_probability(double c) {
    if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("confidence must lie in [0, 1]");
    return c;
}

}  // namespace motis
