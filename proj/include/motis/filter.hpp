#pragma once

#include "motis/detail/logmath.hpp"
#include "motis/models.hpp"
#include "motis/observation.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace motis {

/// Label of a state not yet attached to an identity.
inline constexpr long kUnlabeled = -1;

/// One joint-state hypothesis: a set of object states, each with an identity label.
struct ParticleSet {
    std::vector<ObjectState> objects;
    std::vector<long> labels;

    ParticleSet() = default;
    explicit ParticleSet(std::vector<ObjectState> objs)
        : objects(std::move(objs)), labels(objects.size(), kUnlabeled) {}

    [[nodiscard]] std::size_t size() const { return objects.size(); }
    [[nodiscard]] bool empty() const { return objects.empty(); }

    void add(const ObjectState& s, long label = kUnlabeled) {
        objects.push_back(s);
        labels.push_back(label);
    }
};

struct WeightedParticle {
    ParticleSet state;
    double weight = 0.0;
    std::optional<ObsResult> cached_obs;
};

/// Each object survives with probability exp(-mu tau) and moves by the motion model;
/// Poisson(lambda tau) newcomers appear uniformly in the arena at rest.
inline ParticleSet propose_motion(const ParticleSet& x, const ModelParams& params, Rng& rng) {
    ParticleSet out;
    const double survive = std::exp(-params.death_rate * params.dt);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (survive < 1.0 && !(u01(rng) < survive)) continue;
        out.add(step_object(x.objects[k], params, rng), x.labels[k]);
    }
    if (params.birth_rate > 0.0) {
        std::poisson_distribution<int> births(params.birth_rate * params.dt);
        std::uniform_real_distribution<double> ux(params.arena.x0, params.arena.x1);
        std::uniform_real_distribution<double> uy(params.arena.y0, params.arena.y1);
        for (int b = births(rng); b > 0; --b) {
            const double bx = ux(rng);
            out.add({bx, uy(rng), 0.0, 0.0});
        }
    }
    return out;
}

/// Both proposals of the refinement step, with the accepted one's observation result.
struct RefinedProposal {
    ParticleSet motion;
    ParticleSet accepted;
    ObsResult obs;
    bool refined = false;
};

namespace detail {

inline ObjectState sample_near(const Detection& o, const ModelParams& params, Rng& rng) {
    const Eigen::LLT<Eigen::Matrix2d> llt(params.obs_cov);
    const Eigen::Matrix2d l = llt.matrixL();
    std::normal_distribution<double> z(0.0, 1.0);
    const double z1 = z(rng);
    const double z2 = z(rng);
    const Eigen::Vector2d d = l * Eigen::Vector2d(z1, z2);
    return {o.x + d.x(), o.y + d.y(), 0.0, 0.0};
}

inline RefinedProposal refine(const ParticleSet& x_prev, std::span<const Detection> detections,
                              const ModelParams& params, Rng& rng) {
    RefinedProposal out;
    out.motion = propose_motion(x_prev, params, rng);
    ObsResult motion_obs = joint_likelihood(detections, out.motion.objects, params);

    // No association has positive probability: every detection is a birth candidate.
    std::vector<std::size_t> candidates = motion_obs.best.false_detections;
    if (motion_obs.best.log_joint_term == kNegInf) {
        candidates.resize(detections.size());
        std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    }
    ParticleSet births = out.motion;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t j : candidates) {
        const Detection& o = detections[j];
        if (u01(rng) < o.c) births.add(sample_near(o, params, rng));
    }
    if (births.size() > out.motion.size()) {
        ObsResult birth_obs = joint_likelihood(detections, births.objects, params);
        if (birth_obs.log_likelihood > motion_obs.log_likelihood) {
            out.accepted = std::move(births);
            out.obs = std::move(birth_obs);
            out.refined = true;
            return out;
        }
    }
    out.accepted = out.motion;
    out.obs = std::move(motion_obs);
    return out;
}

}  // namespace detail

/// Motion proposal followed by detection-driven births from the best association's false set.
/// Returns the more likely of the two candidates together with its observation result.
inline std::pair<ParticleSet, ObsResult> propose_refined(const ParticleSet& x_prev,
                                                         std::span<const Detection> detections,
                                                         const ModelParams& params, Rng& rng) {
    auto r = detail::refine(x_prev, detections, params, rng);
    return {std::move(r.accepted), std::move(r.obs)};
}

/// Posterior predictive over joint states: negative binomial cardinality times an
/// isotropic Gaussian KDE over object positions.
struct PosteriorDensityEstimator {
    double r = 0.0;
    double p = 0.0;
    std::vector<Eigen::Vector2d> kde_points;
    double background = 0.0;  // uniform pseudo-points over the arena
    double arena_area = 1.0;

    [[nodiscard]] double beta() const { return 1.0 / p - 1.0; }

    [[nodiscard]] double log_nb(std::size_t n) const {
        const double dn = static_cast<double>(n);
        return std::lgamma(dn + r) - std::lgamma(r) - std::lgamma(dn + 1.0) + detail::xlogy(dn, p) +
               r * std::log1p(-p);
    }

    [[nodiscard]] double log_kde(double x, double y) const {
        const double denom = static_cast<double>(kde_points.size()) + background;
        if (denom == 0.0) return detail::kNegInf;
        const double norm = 2.0 * detail::kPi;
        double sum = 0.0;
        for (const auto& q : kde_points) {
            const double dx = x - q.x(), dy = y - q.y();
            sum += std::exp(-0.5 * (dx * dx + dy * dy));
        }
        sum /= norm;
        sum += background / arena_area;
        if (sum > 0.0) return std::log(sum / denom);
        if (kde_points.empty()) return detail::kNegInf;
        detail::LogAccumulator acc;
        for (const auto& q : kde_points) {
            const double dx = x - q.x(), dy = y - q.y();
            acc.add(-0.5 * (dx * dx + dy * dy));
        }
        return acc.log_sum() - std::log(norm) - std::log(denom);
    }
};

/// Fits r = alpha0 + sum |X|, p = 1 / (1 + beta0 + N) and collects every object position.
inline PosteriorDensityEstimator fit_density(std::span<const ParticleSet> population, double alpha0, double beta0,
                                             double background = 0.0, double arena_area = 1.0) {
    if (population.empty()) throw std::invalid_argument("fit_density needs a nonempty population");
    PosteriorDensityEstimator est;
    std::size_t total = 0;
    for (const auto& x : population) {
        total += x.size();
        for (const auto& s : x.objects) est.kde_points.emplace_back(s.x, s.y);
    }
    est.r = alpha0 + static_cast<double>(total);
    est.p = 1.0 / (1.0 + beta0 + static_cast<double>(population.size()));
    est.background = background;
    est.arena_area = arena_area;
    return est;
}

/// log( n! NB(n; r, p) prod_s KDE(s) ). Velocities are ignored.
inline double log_set_density(const ParticleSet& x, const PosteriorDensityEstimator& est) {
    double out = detail::log_factorial(x.size()) + est.log_nb(x.size());
    for (const auto& s : x.objects) {
        out += est.log_kde(s.x, s.y);
        if (out == detail::kNegInf) break;
    }
    return out;
}

inline double set_density(const ParticleSet& x, const PosteriorDensityEstimator& est) {
    return std::exp(log_set_density(x, est));
}

/// Systematic resampling to `count` equally weighted particles (default: the input size).
inline std::vector<WeightedParticle> resample(const std::vector<WeightedParticle>& population, Rng& rng,
                                              std::size_t count = 0) {
    const std::size_t m = population.size();
    const std::size_t n = count == 0 ? m : count;
    std::vector<WeightedParticle> out;
    if (m == 0) return out;
    out.reserve(n);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double step = 1.0 / static_cast<double>(n);
    const double u0 = u01(rng) * step;
    double cumulative = population[0].weight;
    std::size_t i = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double u = u0 + static_cast<double>(k) * step;
        while (u >= cumulative && i + 1 < m) cumulative += population[++i].weight;
        out.push_back(population[i]);
        out.back().weight = step;
    }
    return out;
}

struct FilterStep {
    std::vector<WeightedParticle> particles;
    bool degenerate = false;       // all weights vanished and were reset to uniform
    double effective_size = 0.0;  // 1 / sum w^2 before resampling
};

/// Uniformly weighted population of empty joint states.
inline std::vector<WeightedParticle> initial_population(std::size_t n) {
    std::vector<WeightedParticle> out(n);
    for (auto& p : out) p.weight = 1.0 / static_cast<double>(n);
    return out;
}

/// One filtering cycle: refined proposals, w <- w m o / p, normalization, systematic resampling.
inline FilterStep update(const std::vector<WeightedParticle>& previous, std::span<const Detection> detections,
                         const ModelParams& params, Rng& rng) {
    const std::size_t n = previous.size();
    FilterStep step;
    if (n == 0) return step;

    std::vector<ParticleSet> motion(n), refined(n);
    std::vector<ObsResult> obs(n);
    for (std::size_t k = 0; k < n; ++k) {
        Rng particle_rng(rng());
        auto r = detail::refine(previous[k].state, detections, params, particle_rng);
        motion[k] = std::move(r.motion);
        refined[k] = std::move(r.accepted);
        obs[k] = std::move(r.obs);
    }

    const double area = params.arena.area();
    const auto est_motion = fit_density(motion, params.gamma_alpha0, params.gamma_beta0, params.kde_background, area);
    const auto est_refined = fit_density(refined, params.gamma_alpha0, params.gamma_beta0, params.kde_background,
                                         area);

    std::vector<double> log_w(n);
    double max_log = detail::kNegInf;
    for (std::size_t k = 0; k < n; ++k) {
        const double lm = log_set_density(refined[k], est_motion);
        const double lp = log_set_density(refined[k], est_refined);
        double lw = std::log(previous[k].weight) + lm + obs[k].log_likelihood - lp;
        if (std::isnan(lw) || lm == detail::kNegInf || obs[k].log_likelihood == detail::kNegInf) lw = detail::kNegInf;
        log_w[k] = lw;
        max_log = std::max(max_log, lw);
    }

    std::vector<WeightedParticle> weighted(n);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        weighted[k].state = std::move(refined[k]);
        weighted[k].cached_obs = std::move(obs[k]);
        weighted[k].weight = max_log == detail::kNegInf ? 0.0 : std::exp(log_w[k] - max_log);
        total += weighted[k].weight;
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
        step.degenerate = true;
        for (auto& w : weighted) w.weight = 1.0 / static_cast<double>(n);
    } else {
        for (auto& w : weighted) w.weight /= total;
    }
    double sum_sq = 0.0;
    for (const auto& w : weighted) sum_sq += w.weight * w.weight;
    step.effective_size = 1.0 / sum_sq;
    step.particles = resample(weighted, rng);
    return step;
}

}  // namespace motis
