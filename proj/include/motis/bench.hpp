#pragma once

#include "motis/observation.hpp"
#include "motis/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <vector>

namespace motis {

/// Pruning thresholds of one benchmark run.
struct PruneSetting {
    double t_assign = 0.1;
    double t_fm = 0.001;
};

/// Term counts, pruning rate and relative error of one equation under one setting.
struct PruneSummary {
    std::size_t cases = 0;
    double mean_terms_full = 0.0;
    double mean_terms_pruned = 0.0;
    double max_terms_full = 0.0;
    double max_terms_pruned = 0.0;
    double pruning_rate = 0.0;  // 1 - mean pruned / mean full
    double mean_rel_error = 0.0;
    double max_rel_error = 0.0;
};

struct PruneResult {
    PruneSetting setting;
    PruneSummary matched;  // assignment sums over bijections
    PruneSummary joint;    // full observation function
    double seconds = 0.0;  // time spent in the pruned evaluations
};

/// Ground truth and detections of the pruning experiment.
struct BenchScenario {
    Scenario truth;
    std::vector<std::vector<Detection>> detections;
};

/// Birth-death scenario started from its stationary population.
inline BenchScenario make_bench_scenario(ModelParams params, std::size_t n_frames, std::uint64_t seed) {
    SimOptions opt;
    opt.stationary_start = true;
    BenchScenario b;
    b.truth = generate_truth(params, n_frames, seed, opt);
    b.detections = generate_detection_stream(b.truth, seed ^ 0x9e3779b97f4a7c15ULL);
    return b;
}

namespace detail {

class SummaryBuilder {
public:
    void add(double full, double pruned, double rel_error) {
        ++out_.cases;
        sum_full_ += full;
        sum_pruned_ += pruned;
        sum_err_ += rel_error;
        out_.max_terms_full = std::max(out_.max_terms_full, full);
        out_.max_terms_pruned = std::max(out_.max_terms_pruned, pruned);
        out_.max_rel_error = std::max(out_.max_rel_error, rel_error);
    }
    [[nodiscard]] PruneSummary finish() const {
        PruneSummary s = out_;
        if (s.cases > 0) {
            const double n = static_cast<double>(s.cases);
            s.mean_terms_full = sum_full_ / n;
            s.mean_terms_pruned = sum_pruned_ / n;
            s.mean_rel_error = sum_err_ / n;
            s.pruning_rate = 1.0 - sum_pruned_ / sum_full_;
        }
        return s;
    }

private:
    PruneSummary out_;
    double sum_full_ = 0.0;
    double sum_pruned_ = 0.0;
    double sum_err_ = 0.0;
};

inline double relative_error_from_logs(double log_exact, double log_approx) {
    if (log_approx == kNegInf) return 1.0;
    return std::abs(std::expm1(log_approx - log_exact));
}

}  // namespace detail

/// Evaluates both equations per frame with the setting's thresholds and against exact values.
/// Frames, and assignment problems, smaller than 2 x 2 are not counted.
inline PruneResult run_prune_setting(const BenchScenario& bench, const ModelParams& base, PruneSetting setting) {
    ModelParams params = base;
    params.assign_threshold = setting.t_assign;
    params.fm_threshold = setting.t_fm;
    detail::SummaryBuilder matched, joint;
    PruneResult result;
    result.setting = setting;
    std::vector<ObjectState> objects;
    for (std::size_t t = 0; t < bench.truth.frames.size(); ++t) {
        objects.clear();
        for (const auto& o : bench.truth.frames[t].objects) objects.push_back(o.s);
        const auto& dets = bench.detections[t];
        if (std::min(dets.size(), objects.size()) < 2) continue;

        ObservationTrace trace;
        trace.compute_exact = true;
        const auto start = std::chrono::steady_clock::now();
        const auto pruned = joint_likelihood(dets, objects, params, &trace);
        result.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        const double log_exact = log_joint_likelihood_dp(dets, objects, params);
        joint.add(full_term_count(dets.size(), objects.size()), static_cast<double>(pruned.terms_evaluated),
                  detail::relative_error_from_logs(log_exact, pruned.log_likelihood));

        for (const auto& p : trace.problems) {
            if (p.size < 2 || p.log_exact == detail::kNegInf) continue;
            matched.add(std::exp(detail::log_factorial(p.size)), static_cast<double>(p.terms),
                        detail::relative_error_from_logs(p.log_exact, p.log_pruned));
        }
    }
    result.matched = matched.finish();
    result.joint = joint.finish();
    return result;
}

/// Case-weighted combination of summaries, e.g. of one setting over several seeds.
inline PruneSummary pool(const std::vector<PruneSummary>& parts) {
    PruneSummary out;
    double sum_full = 0.0, sum_pruned = 0.0, sum_err = 0.0;
    for (const auto& s : parts) {
        const double n = static_cast<double>(s.cases);
        out.cases += s.cases;
        sum_full += n * s.mean_terms_full;
        sum_pruned += n * s.mean_terms_pruned;
        sum_err += n * s.mean_rel_error;
        out.max_terms_full = std::max(out.max_terms_full, s.max_terms_full);
        out.max_terms_pruned = std::max(out.max_terms_pruned, s.max_terms_pruned);
        out.max_rel_error = std::max(out.max_rel_error, s.max_rel_error);
    }
    if (out.cases > 0) {
        const double n = static_cast<double>(out.cases);
        out.mean_terms_full = sum_full / n;
        out.mean_terms_pruned = sum_pruned / n;
        out.mean_rel_error = sum_err / n;
        out.pruning_rate = 1.0 - sum_pruned / sum_full;
    }
    return out;
}

/// The two threshold sweeps of the experiment: T' at T'' = 1e-3, then T'' at T' = 0.1.
inline std::vector<PruneSetting> assignment_sweep() { return {{0.01, 1e-3}, {0.1, 1e-3}, {0.5, 1e-3}, {1.0, 1e-3}}; }
inline std::vector<PruneSetting> false_missing_sweep() { return {{0.1, 1e-4}, {0.1, 1e-3}, {0.1, 1e-2}}; }

/// Experiment parameters: tracker defaults with lambda = 0.06, mu = 0.02.
inline ModelParams bench_params(ModelParams base = ModelParams{}) {
    base.birth_rate = 0.06;
    base.death_rate = 0.02;
    return base;
}

}  // namespace motis
