#pragma once

#include "motis/assignment.hpp"
#include "motis/filter.hpp"
#include "motis/models.hpp"
#include "motis/observation.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <span>
#include <unordered_map>
#include <vector>

namespace motis {

/// An identified object: expected state, identification confidence, persistent id.
struct Identity {
    ObjectState s;
    double c = 0.0;
    long rho = 0;
};

/// For every detection, the (particle, state) pairs matched to it by each particle's best association.
struct DetectionPools {
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> members;  // per detection
    std::vector<std::vector<long>> detection_of;                            // per particle, per state; -1 if none
};

inline DetectionPools build_detection_pools(std::vector<WeightedParticle>& population,
                                            std::span<const Detection> detections, const ModelParams& params) {
    DetectionPools pools;
    pools.members.resize(detections.size());
    pools.detection_of.resize(population.size());
    for (std::size_t k = 0; k < population.size(); ++k) {
        auto& particle = population[k];
        if (!particle.cached_obs) particle.cached_obs = joint_likelihood(detections, particle.state.objects, params);
        auto& per_state = pools.detection_of[k];
        per_state = particle.cached_obs->best.object_to_detection(particle.state.size());
        for (std::size_t i = 0; i < per_state.size(); ++i) {
            if (per_state[i] >= 0) pools.members[static_cast<std::size_t>(per_state[i])].emplace_back(k, i);
        }
    }
    return pools;
}

struct IdentifyResult {
    std::vector<Identity> identities;  // every identity with a nonempty pool, sorted by rho
    std::size_t em_steps = 0;
    std::vector<double> objective;     // labelling objective after each E step
};

namespace detail {

/// Working state of one EM run. Candidates are indexed 0..; labels hold candidate indices.
class IdentityEm {
public:
    IdentityEm(std::vector<WeightedParticle>& population, std::span<const Detection> detections,
               const std::vector<Identity>& previous, const ModelParams& params)
        : population_(population), detections_(detections), previous_(previous) {
        pools_ = build_detection_pools(population, detections, params);
        n_ = static_cast<double>(population.size());
        std::unordered_map<long, std::size_t> by_rho;
        for (std::size_t h = 0; h < previous.size(); ++h) by_rho[previous[h].rho] = h;
        n_candidates_ = previous.size() + detections.size();
        labels_.resize(population.size());
        for (std::size_t k = 0; k < population.size(); ++k) {
            const auto& x = population[k].state;
            labels_[k].assign(x.size(), -1);
            for (std::size_t i = 0; i < x.size(); ++i) {
                auto it = by_rho.find(x.labels[i]);
                if (it != by_rho.end()) labels_[k][i] = static_cast<long>(it->second);
            }
        }
    }

    [[nodiscard]] std::size_t fresh_candidate(std::size_t detection) const { return previous_.size() + detection; }

    void m_step() {
        const std::size_t c = n_candidates_;
        const std::size_t d = detections_.size();
        overlap_.assign(c * d, 0.0);
        unmatched_.assign(c, 0.0);
        centre_.assign(c, {0.0, 0.0});
        std::vector<double> pool_size(c, 0.0);
        for (std::size_t k = 0; k < labels_.size(); ++k) {
            const auto& x = population_[k].state;
            for (std::size_t i = 0; i < labels_[k].size(); ++i) {
                const long h = labels_[k][i];
                if (h < 0) continue;
                const auto hu = static_cast<std::size_t>(h);
                const long o = pools_.detection_of[k][i];
                if (o >= 0) overlap_[hu * d + static_cast<std::size_t>(o)] += 1.0;
                else unmatched_[hu] += 1.0;
                centre_[hu].first += x.objects[i].x;
                centre_[hu].second += x.objects[i].y;
                pool_size[hu] += 1.0;
            }
        }
        for (std::size_t h = 0; h < c; ++h) {
            if (pool_size[h] > 0) {
                centre_[h].first /= pool_size[h];
                centre_[h].second /= pool_size[h];
            }
            unmatched_[h] /= n_;
            for (std::size_t o = 0; o < d; ++o) overlap_[h * d + o] /= n_;
        }
        epsilon_ = 1.0 / (n_ * static_cast<double>(c + 1));
    }

    /// Relabels every particle by a best assignment of states to candidates. Returns the objective.
    double e_step(bool* changed) {
        double objective = 0.0;
        *changed = false;
        const std::size_t base_candidates = n_candidates_;
        for (std::size_t k = 0; k < labels_.size(); ++k) {
            const std::size_t rows = labels_[k].size();
            if (rows == 0) continue;
            const std::size_t cols = base_candidates + rows;  // trailing columns open new candidates
            CostMatrix m(cols, 0.0);
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t h = 0; h < cols; ++h) m(i, h) = cost(k, i, h, base_candidates);
            }
            const double before = labelling_cost(m, k);
            HungarianState st(cols);
            for (std::size_t r = 1; r <= cols; ++r) augment_row(m, st, r, nullptr);
            const auto mapping = mapping_of(st, cols);
            double after = 0.0;
            for (std::size_t i = 0; i < rows; ++i) {
                long h = static_cast<long>(mapping[i]);
                after += m(i, mapping[i]);
                if (mapping[i] >= base_candidates) h = static_cast<long>(n_candidates_++);
                if (h != labels_[k][i]) *changed = true;
                labels_[k][i] = h;
            }
            assert(after <= before + 1e-9 * (1.0 + std::abs(before)));
            (void)before;
            objective -= after;
        }
        return objective;
    }

    std::vector<Identity> extract(long& next_rho) {
        std::vector<std::vector<std::pair<std::size_t, std::size_t>>> pool(n_candidates_);
        for (std::size_t k = 0; k < labels_.size(); ++k)
            for (std::size_t i = 0; i < labels_[k].size(); ++i)
                if (labels_[k][i] >= 0) pool[static_cast<std::size_t>(labels_[k][i])].emplace_back(k, i);

        std::vector<long> rho_of(n_candidates_, kUnlabeled);
        std::vector<Identity> out;
        for (std::size_t h = 0; h < n_candidates_; ++h) {
            if (pool[h].empty()) continue;
            Identity id;
            id.rho = h < previous_.size() ? previous_[h].rho : next_rho++;
            for (auto [k, i] : pool[h]) {
                const auto& s = population_[k].state.objects[i];
                id.s.x += s.x;
                id.s.y += s.y;
                id.s.vx += s.vx;
                id.s.vy += s.vy;
            }
            const double size = static_cast<double>(pool[h].size());
            id.s.x /= size;
            id.s.y /= size;
            id.s.vx /= size;
            id.s.vy /= size;
            id.c = size / n_;
            rho_of[h] = id.rho;
            out.push_back(id);
        }
        for (std::size_t k = 0; k < labels_.size(); ++k)
            for (std::size_t i = 0; i < labels_[k].size(); ++i)
                population_[k].state.labels[i] =
                    labels_[k][i] >= 0 ? rho_of[static_cast<std::size_t>(labels_[k][i])] : kUnlabeled;
        std::sort(out.begin(), out.end(), [](const Identity& a, const Identity& b) { return a.rho < b.rho; });
        return out;
    }

private:
    static constexpr double kKeepBonus = 1e-6;

    /// Detection whose fresh candidate is the fallback home of a state: its pool detection, else the nearest.
    [[nodiscard]] long home_detection(std::size_t k, std::size_t i) const {
        const long o = pools_.detection_of[k][i];
        if (o >= 0 || detections_.empty()) return o;
        const auto& s = population_[k].state.objects[i];
        long best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < detections_.size(); ++j) {
            const double dd = std::hypot(detections_[j].x - s.x, detections_[j].y - s.y);
            if (dd < best_d) {
                best_d = dd;
                best = static_cast<long>(j);
            }
        }
        return best;
    }

    [[nodiscard]] double score(std::size_t k, std::size_t i, std::size_t h) const {
        const long o = pools_.detection_of[k][i];
        if (o >= 0) return overlap_[h * detections_.size() + static_cast<std::size_t>(o)];
        if (unmatched_[h] == 0.0) return 0.0;
        const auto& s = population_[k].state.objects[i];
        const double dx = s.x - centre_[h].first, dy = s.y - centre_[h].second;
        return unmatched_[h] * std::exp(-0.5 * (dx * dx + dy * dy));
    }

    [[nodiscard]] double cost(std::size_t k, std::size_t i, std::size_t h, std::size_t base_candidates) const {
        double f;
        if (h >= base_candidates) {
            f = epsilon_ * epsilon_ * epsilon_;
        } else {
            const long home = home_detection(k, i);
            const double floor = home >= 0 && h == fresh_candidate(static_cast<std::size_t>(home))
                                     ? epsilon_
                                     : epsilon_ * epsilon_;
            f = std::max(score(k, i, h), floor);
        }
        double c = -std::log(f);
        if (static_cast<long>(h) == labels_[k][i]) c -= kKeepBonus;
        return c;
    }

    [[nodiscard]] double labelling_cost(const CostMatrix& m, std::size_t k) const {
        // Cost of the current labels; infinite while some state has no usable label.
        double total = 0.0;
        std::vector<char> used(m.size(), 0);
        for (std::size_t i = 0; i < labels_[k].size(); ++i) {
            const long h = labels_[k][i];
            if (h >= 0 && static_cast<std::size_t>(h) < m.size() && !used[static_cast<std::size_t>(h)]) {
                used[static_cast<std::size_t>(h)] = 1;
                total += m(i, static_cast<std::size_t>(h));
            } else {
                return std::numeric_limits<double>::infinity();
            }
        }
        return total;
    }

    std::vector<WeightedParticle>& population_;
    std::span<const Detection> detections_;
    const std::vector<Identity>& previous_;
    DetectionPools pools_;
    double n_ = 1.0;
    std::size_t n_candidates_ = 0;
    std::vector<std::vector<long>> labels_;
    std::vector<double> overlap_;
    std::vector<double> unmatched_;
    std::vector<std::pair<double, double>> centre_;
    double epsilon_ = 1.0;
};

}  // namespace detail

/// EM over state-to-identity labellings. Candidates are the previous identities plus one fresh
/// candidate per detection; the M step runs first from the labels carried in the particles.
/// Rewrites particle labels to identity ids; fresh identities draw ids from `next_rho`.
inline IdentifyResult em_identify(std::vector<WeightedParticle>& population, std::span<const Detection> detections,
                                  const std::vector<Identity>& previous, long& next_rho, const ModelParams& params) {
    IdentifyResult result;
    detail::IdentityEm em(population, detections, previous, params);
    for (std::size_t step = 0; step < params.max_em_steps; ++step) {
        em.m_step();
        bool changed = false;
        result.objective.push_back(em.e_step(&changed));
        ++result.em_steps;
        if (!changed) break;
    }
    result.identities = em.extract(next_rho);
    return result;
}

/// Identities whose confidence reaches the reporting threshold, sorted by id.
inline std::vector<Identity> report(const std::vector<Identity>& identities, double min_confidence) {
    std::vector<Identity> out;
    for (const auto& id : identities)
        if (id.c >= min_confidence) out.push_back(id);
    std::sort(out.begin(), out.end(), [](const Identity& a, const Identity& b) { return a.rho < b.rho; });
    return out;
}

}  // namespace motis
