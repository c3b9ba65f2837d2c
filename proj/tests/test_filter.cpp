#include "motis/filter.hpp"

#include <gtest/gtest.h>

#include <map>
#include <numeric>

namespace motis {
namespace {

ParticleSet three_objects() {
    ParticleSet x;
    x.add({1, 1, 0.5, 0}, 7);
    x.add({5, 5, 0, -1}, 8);
    x.add({9, 2, 1, 1}, 9);
    return x;
}

TEST(ProposeMotion, DeterministicWithoutNoiseOrTurnover) {
    ModelParams p;
    p.death_rate = 0.0;
    p.birth_rate = 0.0;
    p.dash_power_sigma = 0.0;
    Rng rng(1);
    const auto x = three_objects();
    const auto next = propose_motion(x, p, rng);
    ASSERT_EQ(next.size(), 3u);
    EXPECT_EQ(next.labels, x.labels);
    EXPECT_DOUBLE_EQ(next.objects[0].x, 1 + 0.5 * 0.14);
    EXPECT_DOUBLE_EQ(next.objects[1].y, 5 - 0.14);
    EXPECT_DOUBLE_EQ(next.objects[2].vx, 1.0);
}

TEST(ProposeMotion, CertainDeath) {
    ModelParams p;
    p.death_rate = 1e9;
    Rng rng(2);
    EXPECT_TRUE(propose_motion(three_objects(), p, rng).empty());
}

TEST(ProposeMotion, SurvivalMatchesClosedForm) {
    const ModelParams p;
    Rng rng(3);
    ParticleSet x;
    for (int k = 0; k < 5; ++k) x.add({1.0 * k, 1, 0, 0});
    constexpr int trials = 100000;
    double total = 0.0;
    for (int t = 0; t < trials; ++t) total += static_cast<double>(propose_motion(x, p, rng).size());
    const double q = std::exp(-0.02 * 0.14);
    const double se = std::sqrt(5.0 * q * (1 - q) / trials);
    EXPECT_NEAR(total / trials, 5.0 * q, 3.0 * se);
    EXPECT_NEAR(5.0 * q, 4.986, 1e-3);
}

TEST(ProposeMotion, BirthsAreUniformAndAtRest) {
    ModelParams p;
    p.birth_rate = 50.0;
    Rng rng(4);
    std::size_t births = 0;
    for (int t = 0; t < 2000; ++t) {
        const auto x = propose_motion({}, p, rng);
        for (std::size_t k = 0; k < x.size(); ++k) {
            EXPECT_TRUE(p.arena.contains(x.objects[k].x, x.objects[k].y));
            EXPECT_EQ(x.objects[k].vx, 0.0);
            EXPECT_EQ(x.labels[k], kUnlabeled);
        }
        births += x.size();
    }
    const double mean = 50.0 * 0.14;
    EXPECT_NEAR(static_cast<double>(births) / 2000, mean, 3.0 * std::sqrt(mean / 2000));
}

TEST(ProposeRefined, NoDetectionsMeansNoRefinement) {
    ModelParams p;
    p.death_rate = 0.0;
    p.dash_power_sigma = 0.0;
    Rng rng(5);
    const auto x = three_objects();
    auto [out, obs] = propose_refined(x, {}, p, rng);
    EXPECT_EQ(out.size(), 3u);
    EXPECT_TRUE(obs.best.matches.empty());
    EXPECT_EQ(obs.best.missed_objects.size(), 3u);
}

TEST(ProposeRefined, CertainDetectionSpawnsObject) {
    const ModelParams p;
    const Detection o{9.5, 7.9, 1.0};
    // Hand comparison: any object within a few sigma beats pure clutter (c = 1 makes clutter impossible).
    const double birth = std::exp(-0.84 - 0.28) * detect_likelihood(o, {9.5, 7.9, 0, 0}, p);
    EXPECT_GT(birth, 0.0);
    EXPECT_EQ(f_false(std::vector<Detection>{o}, p), 0.0);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        auto [out, obs] = propose_refined({}, std::vector<Detection>{o}, p, rng);
        ASSERT_EQ(out.size(), 1u);
        EXPECT_LT(std::hypot(out.objects[0].x - o.x, out.objects[0].y - o.y), 4.0);
        EXPECT_EQ(out.objects[0].vx, 0.0);
        EXPECT_EQ(out.labels[0], kUnlabeled);
        EXPECT_EQ(obs.best.matches.size(), 1u);
    }
}

TEST(ProposeRefined, AcceptedNeverWorseThanMotionOnly) {
    const ModelParams p;
    std::mt19937_64 gen(6);
    std::uniform_real_distribution<double> ux(0, 19), uy(0, 15.8), uc(0.05, 0.95);
    for (int trial = 0; trial < 100; ++trial) {
        ParticleSet x;
        for (int k = 0; k < trial % 4; ++k) x.add({ux(gen), uy(gen), 0, 0});
        std::vector<Detection> dets;
        for (int k = 0; k < trial % 5; ++k) dets.push_back({ux(gen), uy(gen), uc(gen)});
        Rng rng(gen());
        const auto r = detail::refine(x, dets, p, rng);
        const double motion_ll = joint_likelihood(dets, r.motion.objects, p).log_likelihood;
        EXPECT_GE(r.obs.log_likelihood, motion_ll);
        EXPECT_DOUBLE_EQ(r.obs.log_likelihood, joint_likelihood(dets, r.accepted.objects, p).log_likelihood);
        EXPECT_GE(r.accepted.size(), r.motion.size());
    }
}

TEST(FitDensity, WorkedValues) {
    std::vector<ParticleSet> one_empty(1);
    auto est = fit_density(one_empty, 2.0, 1.0);
    EXPECT_DOUBLE_EQ(est.r, 2.0);
    EXPECT_DOUBLE_EQ(est.beta(), 2.0);
    EXPECT_DOUBLE_EQ(est.p, 1.0 / 3.0);

    std::vector<ParticleSet> pop(2);
    pop[0].add({1, 1, 0, 0});
    for (int k = 0; k < 3; ++k) pop[1].add({2.0 * k, 1, 0, 0});
    est = fit_density(pop, 2.0, 1.0);
    EXPECT_DOUBLE_EQ(est.r, 6.0);
    EXPECT_DOUBLE_EQ(est.beta(), 3.0);
    EXPECT_DOUBLE_EQ(est.p, 0.25);
    EXPECT_EQ(est.kde_points.size(), 4u);
    EXPECT_THROW(fit_density(std::vector<ParticleSet>{}, 2.0, 1.0), std::invalid_argument);
}

TEST(SetDensity, WorkedValues) {
    PosteriorDensityEstimator est;
    est.r = 2.0;
    est.p = 0.5;
    EXPECT_NEAR(set_density({}, est), 0.25, 1e-15);
    EXPECT_NEAR(std::exp(est.log_nb(1)), 0.25, 1e-15);
    EXPECT_EQ(set_density(ParticleSet({{0, 0, 0, 0}}), est), 0.0);

    est.kde_points.emplace_back(0.0, 0.0);
    EXPECT_NEAR(set_density(ParticleSet({{0, 0, 3, 3}}), est), 0.25 / (2.0 * std::numbers::pi), 1e-15);
    // Two objects: 2! NB(2) KDE(a) KDE(b), NB(2) = C(3,2) 0.25 0.25 = 0.1875.
    const ParticleSet two({{0, 0, 0, 0}, {1, 0, 0, 0}});
    const double phi0 = 1.0 / (2.0 * std::numbers::pi);
    EXPECT_NEAR(set_density(two, est), 2.0 * 0.1875 * phi0 * phi0 * std::exp(-0.5), 1e-15);
}

TEST(SetDensity, FarPointsStayPositive) {
    PosteriorDensityEstimator est;
    est.r = 3.0;
    est.p = 0.2;
    est.kde_points.emplace_back(0.0, 0.0);
    const double ld = log_set_density(ParticleSet({{40, 0, 0, 0}}), est);
    EXPECT_TRUE(std::isfinite(ld));
    EXPECT_NEAR(ld, est.log_nb(1) - 800.0 - std::log(2.0 * std::numbers::pi), 1e-9);
}

TEST(SetDensity, BackgroundMixesUniformMass) {
    std::vector<ParticleSet> pop(1);
    pop[0].add({0, 0, 0, 0});
    const auto est = fit_density(pop, 2.0, 1.0, 1.0, 300.0);
    const double phi = std::exp(-0.5 * 4.0) / (2.0 * std::numbers::pi);
    EXPECT_NEAR(std::exp(est.log_kde(2.0, 0.0)), (phi + 1.0 / 300.0) / 2.0, 1e-15);
    std::vector<ParticleSet> empties(4);
    EXPECT_NEAR(std::exp(fit_density(empties, 2.0, 1.0, 1.0, 300.0).log_kde(5.0, 5.0)), 1.0 / 300.0, 1e-15);
}

TEST(NegativeBinomial, PmfNormalizes) {
    for (auto [alpha, n_objects] : {std::pair{2.0, 0.0}, {2.0, 128.0}, {2.0, 640.0}, {2.0, 1400.0}}) {
        std::vector<ParticleSet> pop(128);
        PosteriorDensityEstimator est;
        est.r = alpha + n_objects;
        est.p = 1.0 / (1.0 + 1.0 + 128.0);
        detail::LogAccumulator acc;
        for (std::size_t n = 0; n <= 1000; ++n) acc.add(est.log_nb(n));
        EXPECT_NEAR(acc.sum(), 1.0, 1e-9);
    }
}

std::vector<WeightedParticle> labelled(std::vector<double> weights) {
    std::vector<WeightedParticle> out(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        out[i].weight = weights[i];
        out[i].state.add({static_cast<double>(i), 0, 0, 0});
    }
    return out;
}

std::vector<int> copy_counts(const std::vector<WeightedParticle>& out, std::size_t n) {
    std::vector<int> counts(n, 0);
    for (const auto& w : out) ++counts[static_cast<std::size_t>(w.state.objects[0].x)];
    return counts;
}

TEST(Resample, WorkedExamples) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        const auto out = resample(labelled({0.75, 0.25}), rng, 4);
        ASSERT_EQ(out.size(), 4u);
        EXPECT_EQ(copy_counts(out, 2), (std::vector<int>{3, 1}));
        for (const auto& w : out) EXPECT_DOUBLE_EQ(w.weight, 0.25);

        const auto uniform = resample(labelled(std::vector<double>(8, 0.125)), rng);
        EXPECT_EQ(copy_counts(uniform, 8), std::vector<int>(8, 1));

        const auto one = resample(labelled({0.0, 1.0, 0.0}), rng);
        EXPECT_EQ(copy_counts(one, 3), (std::vector<int>{0, 3, 0}));
    }
}

TEST(Resample, ExpectedCopyCounts) {
    const std::vector<double> w{0.1, 0.2, 0.05, 0.4, 0.25};
    Rng rng(9);
    std::vector<double> mean(5, 0.0);
    constexpr int reps = 20000;
    for (int r = 0; r < reps; ++r) {
        const auto counts = copy_counts(resample(labelled(w), rng, 7), 5);
        for (std::size_t i = 0; i < 5; ++i) {
            EXPECT_LE(std::abs(counts[i] - 7 * w[i]), 1.0 + 1e-9);
            mean[i] += counts[i];
        }
    }
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(mean[i] / reps, 7 * w[i], 0.02);
}

TEST(Update, EmptyWorldStaysEmpty) {
    ModelParams p;
    p.n_particles = 32;
    Rng rng(10);
    auto population = initial_population(32);
    for (int t = 0; t < 5; ++t) {
        auto step = update(population, {}, p, rng);
        EXPECT_FALSE(step.degenerate);
        population = std::move(step.particles);
        ASSERT_EQ(population.size(), 32u);
        for (const auto& w : population) {
            EXPECT_TRUE(w.state.empty());
            EXPECT_DOUBLE_EQ(w.weight, 1.0 / 32);
            ASSERT_TRUE(w.cached_obs.has_value());
        }
    }
}

TEST(Update, WeightsAreUniformAfterResamplingAndCountIsConstant) {
    const ModelParams p;
    Rng rng(11);
    auto population = initial_population(64);
    const std::vector<Detection> dets{{4, 4, 0.9}, {10, 8, 0.8}, {15, 3, 0.2}};
    for (int t = 0; t < 5; ++t) {
        population = update(population, dets, p, rng).particles;
        ASSERT_EQ(population.size(), 64u);
        double total = 0.0;
        for (const auto& w : population) total += w.weight;
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(Update, ZeroLikelihoodEverywhereIsDegenerate) {
    ModelParams p;
    p.death_rate = 0.0;
    Rng rng(12);
    // c = 1 rules out clutter, so every particle adopts a newborn; without background mass
    // the motion-only population gives that newborn zero density.
    auto population = initial_population(8);
    const std::vector<Detection> impossible{{-50.0, -50.0, 1.0}};
    p.kde_background = 0.0;
    auto step = update(population, impossible, p, rng);
    EXPECT_TRUE(step.degenerate);
    EXPECT_EQ(step.particles.size(), 8u);
}

ObjectState posterior_mean(const std::vector<WeightedParticle>& population, std::size_t* with_object) {
    ObjectState mean{};
    std::size_t count = 0;
    for (const auto& w : population) {
        for (const auto& s : w.state.objects) {
            mean.x += s.x;
            mean.y += s.y;
            ++count;
        }
    }
    if (count > 0) {
        mean.x /= static_cast<double>(count);
        mean.y /= static_cast<double>(count);
    }
    *with_object = count;
    return mean;
}

TEST(Update, TracksSinglePersistentObject) {
    ModelParams p;
    p.n_particles = 128;
    Rng world(13), filter_rng(14);
    ObjectState truth{5, 5, 0.6, 0.3};
    std::normal_distribution<double> noise(0.0, std::sqrt(0.5));
    auto population = initial_population(p.n_particles);
    const double bound = 3.0 * std::sqrt(0.5);
    ModelParams truth_params = p;
    truth_params.dash_power_sigma = 0.5;
    for (int t = 0; t < 50; ++t) {
        truth = step_object(truth, truth_params, world);
        const std::vector<Detection> dets{{truth.x + noise(world), truth.y + noise(world), 0.9}};
        population = update(population, dets, p, filter_rng).particles;
        if (t < 3) continue;
        std::size_t n = 0;
        const auto mean = posterior_mean(population, &n);
        ASSERT_GT(n, 0u) << "t=" << t;
        EXPECT_LT(std::hypot(mean.x - truth.x, mean.y - truth.y), bound) << "t=" << t;
    }
}

TEST(Update, ModalCountConvergesOnStaticScene) {
    ModelParams p;
    p.death_rate = 0.0;
    p.birth_rate = 0.0;
    p.dash_power_sigma = 0.0;
    Rng rng(15);
    const std::vector<Detection> dets{{3, 3, 0.95}, {9, 12, 0.95}, {15, 6, 0.95}};
    auto population = initial_population(128);
    std::size_t modal = 0;
    for (int t = 0; t < 10; ++t) {
        population = update(population, dets, p, rng).particles;
        std::map<std::size_t, int> hist;
        for (const auto& w : population) ++hist[w.state.size()];
        modal = std::max_element(hist.begin(), hist.end(), [](auto a, auto b) { return a.second < b.second; })->first;
    }
    EXPECT_EQ(modal, 3u);
}

}  // namespace
}  // namespace motis
