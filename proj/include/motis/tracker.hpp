#pragma once

#include "motis/filter.hpp"
#include "motis/identify.hpp"
#include "motis/models.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace motis {

/// Full tracking loop: particle update, then EM identification, then confidence reporting.
class Tracker {
public:
    Tracker(const ModelParams& params, std::uint64_t seed)
        : params_(params), rng_(seed), population_(initial_population(params.n_particles)) {
        params_.validate();
    }

    /// Consumes one frame of detections and returns the identities reported for it.
    std::vector<Identity> step(std::span<const Detection> detections) {
        auto result = update(population_, detections, params_, rng_);
        population_ = std::move(result.particles);
        last_degenerate_ = result.degenerate;
        last_effective_size_ = result.effective_size;
        if (result.degenerate) ++degenerate_frames_;
        auto identified = em_identify(population_, detections, identities_, next_rho_, params_);
        identities_ = std::move(identified.identities);
        last_em_steps_ = identified.em_steps;
        return report(identities_, params_.report_conf);
    }

    [[nodiscard]] const std::vector<Identity>& identities() const { return identities_; }
    [[nodiscard]] const std::vector<WeightedParticle>& particles() const { return population_; }
    [[nodiscard]] const ModelParams& params() const { return params_; }
    [[nodiscard]] bool last_degenerate() const { return last_degenerate_; }
    [[nodiscard]] std::size_t degenerate_frames() const { return degenerate_frames_; }
    [[nodiscard]] std::size_t last_em_steps() const { return last_em_steps_; }
    [[nodiscard]] double last_effective_size() const { return last_effective_size_; }

private:
    ModelParams params_;
    Rng rng_;
    std::vector<WeightedParticle> population_;
    std::vector<Identity> identities_;
    long next_rho_ = 1;
    bool last_degenerate_ = false;
    std::size_t degenerate_frames_ = 0;
    std::size_t last_em_steps_ = 0;
    double last_effective_size_ = 0.0;
};

}  // namespace motis
