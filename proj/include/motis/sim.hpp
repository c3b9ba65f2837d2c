#pragma once

#include "motis/metrics.hpp"
#include "motis/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace motis {

struct TruthObject {
    long id = 0;
    ObjectState s;
};

struct TruthFrame {
    long t = 0;
    std::vector<TruthObject> objects;
};

/// Simulator knobs that are not part of the tracker's model.
struct SimOptions {
    double birth_speed_sigma = 0.5;   // newborn velocity ~ N(0, sigma^2 I), m/s
    std::size_t initial_objects = 0;
    bool stationary_start = false;    // start from Poisson(lambda / mu) objects instead
    bool reflect = false;             // bounce off the arena boundary
    std::size_t min_objects = 0;      // deaths that would go below this are skipped
    std::size_t max_objects = std::numeric_limits<std::size_t>::max();  // births above this are skipped
};

struct Scenario {
    ModelParams params;
    SimOptions options;
    std::uint64_t seed = 0;
    std::vector<TruthFrame> frames;
};

namespace detail {

inline ObjectState random_newborn(const ModelParams& params, const SimOptions& options, Rng& rng) {
    std::uniform_real_distribution<double> ux(params.arena.x0, params.arena.x1);
    std::uniform_real_distribution<double> uy(params.arena.y0, params.arena.y1);
    std::normal_distribution<double> speed(0.0, options.birth_speed_sigma);
    ObjectState s;
    s.x = ux(rng);
    s.y = uy(rng);
    if (options.birth_speed_sigma > 0.0) {
        s.vx = speed(rng);
        s.vy = speed(rng);
    }
    return s;
}

inline void reflect_into(ObjectState& s, const Arena& a) {
    auto fold = [](double& p, double& v, double lo, double hi) {
        for (int guard = 0; guard < 8 && (p < lo || p > hi); ++guard) {
            if (p < lo) {
                p = 2.0 * lo - p;
                v = std::abs(v);
            } else {
                p = 2.0 * hi - p;
                v = -std::abs(v);
            }
        }
        p = std::clamp(p, lo, hi);
    };
    fold(s.x, s.vx, a.x0, a.x1);
    fold(s.y, s.vy, a.y0, a.y1);
}

}  // namespace detail

/// Birth-death ground truth. Frame 0 holds the initial population; each later frame applies
/// deaths (probability 1 - exp(-mu tau)), motion, then Poisson(lambda tau) births.
inline Scenario generate_truth(const ModelParams& params, std::size_t n_frames, std::uint64_t seed,
                               const SimOptions& options = {}) {
    Scenario sc;
    sc.params = params;
    sc.options = options;
    sc.seed = seed;
    Rng rng(seed);
    long next_id = 1;
    std::vector<TruthObject> live;

    std::size_t initial = options.initial_objects;
    if (options.stationary_start && params.death_rate > 0.0) {
        std::poisson_distribution<std::size_t> stationary(params.birth_rate / params.death_rate);
        initial = stationary(rng);
    }
    initial = std::clamp(initial, options.min_objects, options.max_objects);
    for (std::size_t k = 0; k < initial; ++k) live.push_back({next_id++, detail::random_newborn(params, options, rng)});

    const double survive = std::exp(-params.death_rate * params.dt);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::poisson_distribution<int> births(params.birth_rate * params.dt);
    for (std::size_t t = 0; t < n_frames; ++t) {
        if (t > 0) {
            std::vector<TruthObject> next;
            std::size_t remaining = live.size();
            for (const auto& obj : live) {
                const bool dies = !(u01(rng) < survive);
                if (dies && remaining > options.min_objects) {
                    --remaining;
                    continue;
                }
                TruthObject moved{obj.id, step_object(obj.s, params, rng)};
                if (options.reflect) detail::reflect_into(moved.s, params.arena);
                next.push_back(moved);
            }
            const int born = params.birth_rate > 0.0 ? births(rng) : 0;
            for (int b = 0; b < born; ++b) {
                const ObjectState s = detail::random_newborn(params, options, rng);
                if (next.size() < options.max_objects) next.push_back({next_id++, s});
            }
            live = std::move(next);
        }
        sc.frames.push_back({static_cast<long>(t), live});
    }
    return sc;
}

/// A synthetic detection with its source object id (-1 for clutter).
struct SourcedDetection {
    Detection d;
    long source = -1;
};

/// Each object is missed with probability min(1, xi tau); detected objects emit a Gaussian
/// position and Beta(2,1) confidence. Poisson(nu tau) clutter is uniform with Beta(1,2)
/// confidence. Output order is shuffled.
inline std::vector<SourcedDetection> generate_sourced_detections(const TruthFrame& frame, const ModelParams& params,
                                                                 Rng& rng) {
    std::vector<SourcedDetection> out;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double miss = std::min(1.0, params.miss_rate * params.dt);
    const Eigen::LLT<Eigen::Matrix2d> llt(params.obs_cov);
    const Eigen::Matrix2d l = llt.matrixL();
    std::normal_distribution<double> z(0.0, 1.0);
    for (const auto& obj : frame.objects) {
        if (u01(rng) < miss) continue;
        const double z1 = z(rng);
        const double z2 = z(rng);
        const Eigen::Vector2d e = l * Eigen::Vector2d(z1, z2);
        const double c = std::sqrt(u01(rng));
        out.push_back({{obj.s.x + e.x(), obj.s.y + e.y(), c}, obj.id});
    }
    if (params.false_rate > 0.0) {
        std::poisson_distribution<int> clutter(params.false_rate * params.dt);
        std::uniform_real_distribution<double> ux(params.arena.x0, params.arena.x1);
        std::uniform_real_distribution<double> uy(params.arena.y0, params.arena.y1);
        for (int k = clutter(rng); k > 0; --k) {
            const double x = ux(rng);
            const double y = uy(rng);
            out.push_back({{x, y, 1.0 - std::sqrt(u01(rng))}, -1});
        }
    }
    for (std::size_t i = out.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(out[i - 1], out[pick(rng)]);
    }
    return out;
}

inline std::vector<Detection> generate_detections(const TruthFrame& frame, const ModelParams& params, Rng& rng) {
    std::vector<Detection> out;
    for (const auto& sd : generate_sourced_detections(frame, params, rng)) out.push_back(sd.d);
    return out;
}

/// Detection stream for a whole scenario from its own rng stream.
inline std::vector<std::vector<Detection>> generate_detection_stream(const Scenario& sc, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<Detection>> out;
    out.reserve(sc.frames.size());
    for (const auto& f : sc.frames) out.push_back(generate_detections(f, sc.params, rng));
    return out;
}

inline std::vector<GroundTruthFrame> ground_truth_of(const Scenario& sc) {
    std::vector<GroundTruthFrame> out;
    out.reserve(sc.frames.size());
    for (const auto& f : sc.frames) {
        GroundTruthFrame g{f.t, {}};
        for (const auto& o : f.objects) g.objects.push_back({o.id, o.s.x, o.s.y});
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace motis
