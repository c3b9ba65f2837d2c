#include "motis/identify.hpp"
#include "motis/tracker.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>

namespace motis {
namespace {

std::vector<WeightedParticle> population_of(std::vector<ParticleSet> sets) {
    std::vector<WeightedParticle> out(sets.size());
    for (std::size_t k = 0; k < sets.size(); ++k) {
        out[k].state = std::move(sets[k]);
        out[k].weight = 1.0 / static_cast<double>(sets.size());
    }
    return out;
}

TEST(DetectionPools, NoDetectionsGivesEmptyPools) {
    const ModelParams p;
    auto pop = population_of({ParticleSet({{1, 1, 0, 0}}), ParticleSet({{2, 2, 0, 0}})});
    const auto pools = build_detection_pools(pop, {}, p);
    EXPECT_TRUE(pools.members.empty());
    for (const auto& d : pools.detection_of)
        for (long o : d) EXPECT_EQ(o, -1);
    EXPECT_TRUE(pop[0].cached_obs.has_value());
}

TEST(DetectionPools, SingleMatch) {
    const ModelParams p;
    auto pop = population_of({ParticleSet({{4, 4, 0, 0}})});
    const std::vector<Detection> dets{{4.1, 3.9, 0.9}};
    const auto pools = build_detection_pools(pop, dets, p);
    ASSERT_EQ(pools.members.size(), 1u);
    EXPECT_EQ(pools.members[0], (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}}));
}

TEST(DetectionPools, TwoSeparatedObjectsFillBothPools) {
    const ModelParams p;
    std::vector<ParticleSet> sets(64, ParticleSet({{3, 3, 0, 0}, {14, 11, 0, 0}}));
    auto pop = population_of(sets);
    const std::vector<Detection> dets{{14, 11, 0.9}, {3, 3, 0.9}};
    const auto pools = build_detection_pools(pop, dets, p);
    ASSERT_EQ(pools.members.size(), 2u);
    EXPECT_EQ(pools.members[0].size(), 64u);
    EXPECT_EQ(pools.members[1].size(), 64u);
    for (auto [k, i] : pools.members[0]) EXPECT_EQ(i, 1u);
    for (auto [k, i] : pools.members[1]) EXPECT_EQ(i, 0u);
}

TEST(EmIdentify, SingleParticleGivesOneIdentityPerState) {
    const ModelParams p;
    const std::vector<ObjectState> states{{2, 2, 0.1, 0}, {9, 9, 0, 0.2}, {16, 3, -0.3, 0}};
    auto pop = population_of({ParticleSet(states)});
    const std::vector<Detection> dets{{2, 2, 0.9}, {9, 9, 0.9}, {16, 3, 0.9}};
    long next_rho = 1;
    const auto res = em_identify(pop, dets, {}, next_rho, p);
    ASSERT_EQ(res.identities.size(), 3u);
    std::set<long> rhos;
    for (const auto& id : res.identities) {
        EXPECT_DOUBLE_EQ(id.c, 1.0);
        rhos.insert(id.rho);
        const bool matches_state = std::any_of(states.begin(), states.end(), [&](const ObjectState& s) { return s == id.s; });
        EXPECT_TRUE(matches_state);
    }
    EXPECT_EQ(rhos, (std::set<long>{1, 2, 3}));
    EXPECT_EQ(next_rho, 4);
    std::set<long> labels(pop[0].state.labels.begin(), pop[0].state.labels.end());
    EXPECT_EQ(labels, rhos);
}

TEST(EmIdentify, EmptyPopulationHasNoIdentities) {
    const ModelParams p;
    auto pop = population_of(std::vector<ParticleSet>(16));
    long next_rho = 1;
    const std::vector<Detection> dets{{5, 5, 0.7}};
    EXPECT_TRUE(em_identify(pop, dets, {}, next_rho, p).identities.empty());
    EXPECT_EQ(next_rho, 1);
}

TEST(EmIdentify, HalfSupportGivesHalfConfidence) {
    const ModelParams p;
    std::vector<ParticleSet> sets(32);
    for (std::size_t k = 0; k < 16; ++k) sets[k].add({6.0 + 0.01 * static_cast<double>(k), 6, 0, 0});
    auto pop = population_of(sets);
    const std::vector<Detection> dets{{6, 6, 0.9}};
    long next_rho = 10;
    const auto res = em_identify(pop, dets, {}, next_rho, p);
    ASSERT_EQ(res.identities.size(), 1u);
    EXPECT_DOUBLE_EQ(res.identities[0].c, 0.5);
    EXPECT_EQ(res.identities[0].rho, 10);
}

TEST(EmIdentify, CarriedLabelsKeepIdentity) {
    const ModelParams p;
    std::vector<ParticleSet> sets(8);
    for (auto& x : sets) {
        x.add({3, 3, 0, 0}, 42);
        x.add({12, 7, 0, 0}, 17);
    }
    auto pop = population_of(sets);
    const std::vector<Identity> previous{{{3, 3, 0, 0}, 1.0, 42}, {{12, 7, 0, 0}, 1.0, 17}};
    const std::vector<Detection> dets{{12.2, 7.1, 0.8}, {2.9, 3.0, 0.8}};
    long next_rho = 50;
    const auto res = em_identify(pop, dets, previous, next_rho, p);
    ASSERT_EQ(res.identities.size(), 2u);
    EXPECT_EQ(res.identities[0].rho, 17);
    EXPECT_EQ(res.identities[1].rho, 42);
    EXPECT_EQ(next_rho, 50);
    for (const auto& w : pop) EXPECT_EQ(w.state.labels, (std::vector<long>{42, 17}));
}

TEST(EmIdentify, MissedObjectKeepsIdentityThroughSpatialKernel) {
    const ModelParams p;
    std::vector<ParticleSet> sets(8);
    for (auto& x : sets) {
        x.add({3, 3, 0, 0}, 1);
        x.add({12, 7, 0, 0}, 2);
    }
    auto pop = population_of(sets);
    const std::vector<Identity> previous{{{3, 3, 0, 0}, 1.0, 1}, {{12, 7, 0, 0}, 1.0, 2}};
    long next_rho = 3;
    em_identify(pop, {}, previous, next_rho, p);
    for (const auto& w : pop) EXPECT_EQ(w.state.labels, (std::vector<long>{1, 2}));
}

TEST(EmIdentify, InvariantsOnRandomPopulations) {
    const ModelParams p;
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> ux(0, 19), uy(0, 15.8);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Detection> dets;
        for (int j = 0; j < 1 + trial % 5; ++j) dets.push_back({ux(gen), uy(gen), 0.8});
        std::vector<ParticleSet> sets(32);
        std::size_t total_states = 0;
        for (auto& x : sets) {
            for (const auto& d : dets)
                if (gen() % 3 != 0) x.add({d.x + 0.3, d.y - 0.2, 0, 0});
            if (gen() % 4 == 0) x.add({ux(gen), uy(gen), 0, 0});
            total_states += x.size();
        }
        auto pop = population_of(sets);
        long next_rho = 1;
        const auto res = em_identify(pop, dets, {}, next_rho, p);
        EXPECT_LE(res.em_steps, p.max_em_steps);
        double pooled = 0.0;
        for (const auto& id : res.identities) {
            EXPECT_GT(id.c, 0.0);
            EXPECT_LE(id.c, 1.0);
            pooled += id.c * 32;
        }
        EXPECT_LE(pooled, static_cast<double>(total_states) + 1e-9);
        for (const auto& w : pop) {
            std::set<long> distinct(w.state.labels.begin(), w.state.labels.end());
            EXPECT_EQ(distinct.size(), w.state.size());
            EXPECT_EQ(distinct.count(kUnlabeled), 0u);
        }
    }
}

TEST(EmIdentify, EStepNeverWorsensObjectiveUnderFixedScores) {
    const ModelParams p;
    std::mt19937_64 gen(6);
    std::uniform_real_distribution<double> ux(0, 19), uy(0, 15.8);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Detection> dets;
        for (int j = 0; j < 3; ++j) dets.push_back({ux(gen), uy(gen), 0.8});
        std::vector<ParticleSet> sets(16);
        for (auto& x : sets)
            for (const auto& d : dets)
                if (gen() % 2) x.add({d.x, d.y, 0, 0});
        auto pop = population_of(sets);
        const std::vector<Identity> previous;
        detail::IdentityEm em(pop, dets, previous, p);
        em.m_step();
        bool changed = false;
        const double first = em.e_step(&changed);
        const double second = em.e_step(&changed);
        EXPECT_GE(second, first - 1e-9);
        EXPECT_FALSE(changed);
    }
}

TEST(Report, ThresholdsAndSorts) {
    const std::vector<Identity> ids{{{}, 0.5, 9}, {{}, 0.3, 2}, {{}, 1.0, 4}};
    EXPECT_EQ(report(ids, 0.0).size(), 3u);
    const auto all = report(ids, 0.0);
    EXPECT_EQ(all[0].rho, 2);
    EXPECT_EQ(all[2].rho, 9);
    ASSERT_EQ(report(ids, 1.0).size(), 1u);
    EXPECT_EQ(report(ids, 1.0)[0].rho, 4);
    const std::vector<Identity> pair{{{}, 0.3, 1}, {{}, 0.5, 2}};
    ASSERT_EQ(report(pair, 0.4).size(), 1u);
    EXPECT_EQ(report(pair, 0.4)[0].rho, 2);
}

TEST(Tracker, WideCrossingKeepsIds) {
    ModelParams p;
    p.death_rate = 0.0;
    Tracker tracker(p, 7);
    // Two walkers on parallel lanes 4 m apart, moving in opposite directions past each other.
    std::map<long, int> ids_first_half, ids_second_half;
    std::set<long> seen;
    for (int t = 0; t < 120; ++t) {
        const double x1 = 2.0 + 0.1 * t, x2 = 17.0 - 0.1 * t;
        const std::vector<Detection> dets{{x1, 6.0, 0.9}, {x2, 10.0, 0.9}};
        const auto out = tracker.step(dets);
        if (t < 15) continue;
        ASSERT_EQ(out.size(), 2u) << "t=" << t;
        const auto& lower = out[0].s.y < out[1].s.y ? out[0] : out[1];
        const auto& upper = out[0].s.y < out[1].s.y ? out[1] : out[0];
        EXPECT_NEAR(lower.s.x, x1, 1.0);
        EXPECT_NEAR(upper.s.x, x2, 1.0);
        seen.insert(lower.rho * 1000 + upper.rho);
    }
    EXPECT_EQ(seen.size(), 1u);
}

}  // namespace
}  // namespace motis
