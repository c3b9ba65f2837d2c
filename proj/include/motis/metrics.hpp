#pragma once

#include "motis/assignment.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

namespace motis {

struct GroundTruthObject {
    long id = 0;
    double x = 0.0;
    double y = 0.0;
};

struct GroundTruthFrame {
    long t = 0;
    std::vector<GroundTruthObject> objects;
};

struct TrackObject {
    long rho = 0;
    double x = 0.0;
    double y = 0.0;
    double c = 1.0;
};

struct TrackFrame {
    long t = 0;
    std::vector<TrackObject> tracks;
};

/// Per-frame CLEAR MOT tallies.
struct FrameTally {
    std::size_t g = 0;       // ground-truth objects
    std::size_t a = 0;       // tracker hypotheses
    std::size_t n = 0;       // matches
    std::size_t m = 0;       // mismatches
    double distance = 0.0;   // summed match distance
};

/// gt id -> matched rho, per frame.
using Correspondences = std::vector<std::map<long, long>>;

struct TrajectoryMetrics {
    std::size_t mt = 0;
    std::size_t fm = 0;
};

struct MotReport {
    double mota = 0.0;
    double motp = 0.0;
    std::size_t ids = 0;
    std::size_t mt = 0;
    std::size_t fm = 0;
    std::vector<FrameTally> frames;
    Correspondences correspondences;

    [[nodiscard]] std::size_t total(std::size_t FrameTally::*field) const {
        std::size_t s = 0;
        for (const auto& f : frames) s += f.*field;
        return s;
    }
};

/// MT: trajectories matched in at least 80% of their frames. FM: tracked -> not-tracked transitions.
inline TrajectoryMetrics trajectory_metrics(const std::vector<GroundTruthFrame>& gt,
                                            const Correspondences& correspondences) {
    if (correspondences.size() != gt.size()) throw std::invalid_argument("correspondences do not match frames");
    std::map<long, std::vector<bool>> status;
    for (std::size_t t = 0; t < gt.size(); ++t)
        for (const auto& o : gt[t].objects) status[o.id].push_back(correspondences[t].count(o.id) > 0);
    TrajectoryMetrics out;
    for (const auto& [id, seq] : status) {
        std::size_t tracked = 0;
        for (std::size_t k = 0; k < seq.size(); ++k) {
            tracked += seq[k];
            if (k > 0 && seq[k - 1] && !seq[k]) ++out.fm;
        }
        if (5 * tracked >= 4 * seq.size()) ++out.mt;
    }
    return out;
}

/// CLEAR MOT evaluation: correspondences still within the threshold persist, the rest are
/// matched by minimum total distance; a match whose rho differs from the ground-truth
/// object's last known rho is a mismatch.
inline MotReport clear_mot(const std::vector<GroundTruthFrame>& gt, const std::vector<TrackFrame>& tr,
                           double dist_threshold = 1.0) {
    if (gt.size() != tr.size()) throw std::invalid_argument("ground truth and tracks have different frame counts");
    MotReport report;
    report.frames.resize(gt.size());
    report.correspondences.resize(gt.size());
    std::map<long, long> previous;    // correspondences of the previous frame
    std::map<long, long> last_known;  // most recent rho ever matched to each gt id

    for (std::size_t t = 0; t < gt.size(); ++t) {
        if (gt[t].t != tr[t].t) throw std::invalid_argument("frame indices of ground truth and tracks differ");
        const auto& g = gt[t].objects;
        const auto& h = tr[t].tracks;
        std::set<long> ids, rhos;
        for (const auto& o : g)
            if (!ids.insert(o.id).second) throw std::invalid_argument("duplicate gt_id within a frame");
        for (const auto& o : h)
            if (!rhos.insert(o.rho).second) throw std::invalid_argument("duplicate rho within a frame");

        auto dist = [&](std::size_t i, std::size_t j) { return std::hypot(g[i].x - h[j].x, g[i].y - h[j].y); };
        std::vector<long> match_of_gt(g.size(), -1);
        std::vector<char> track_used(h.size(), 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            auto it = previous.find(g[i].id);
            if (it == previous.end()) continue;
            for (std::size_t j = 0; j < h.size(); ++j) {
                if (h[j].rho == it->second && !track_used[j] && dist(i, j) <= dist_threshold) {
                    match_of_gt[i] = static_cast<long>(j);
                    track_used[j] = 1;
                }
            }
        }

        std::vector<std::size_t> free_gt, free_tr;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (match_of_gt[i] < 0) free_gt.push_back(i);
        for (std::size_t j = 0; j < h.size(); ++j)
            if (!track_used[j]) free_tr.push_back(j);
        if (!free_gt.empty() && !free_tr.empty()) {
            const std::size_t size = free_gt.size() + free_tr.size();
            const double unmatched = dist_threshold * static_cast<double>(size + 1);
            CostMatrix m(size, kForbidden);
            for (std::size_t r = 0; r < size; ++r) {
                for (std::size_t c = 0; c < size; ++c) {
                    const bool real_r = r < free_gt.size(), real_c = c < free_tr.size();
                    if (real_r && real_c) {
                        const double d = dist(free_gt[r], free_tr[c]);
                        if (d <= dist_threshold) m(r, c) = d;
                    } else if (real_r != real_c) {
                        m(r, c) = unmatched;
                    } else {
                        m(r, c) = 0.0;
                    }
                }
            }
            const auto best = solve_best(m);
            for (std::size_t r = 0; r < free_gt.size(); ++r) {
                if (best.mapping[r] < free_tr.size()) match_of_gt[free_gt[r]] = static_cast<long>(free_tr[best.mapping[r]]);
            }
        }

        FrameTally& tally = report.frames[t];
        tally.g = g.size();
        tally.a = h.size();
        std::map<long, long> current;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (match_of_gt[i] < 0) continue;
            const auto j = static_cast<std::size_t>(match_of_gt[i]);
            ++tally.n;
            tally.distance += dist(i, j);
            auto known = last_known.find(g[i].id);
            if (known != last_known.end() && known->second != h[j].rho) ++tally.m;
            last_known[g[i].id] = h[j].rho;
            current[g[i].id] = h[j].rho;
        }
        report.correspondences[t] = current;
        previous = std::move(current);
    }

    std::size_t sum_g = 0, sum_a = 0, sum_n = 0, sum_m = 0;
    double sum_d = 0.0;
    for (const auto& f : report.frames) {
        sum_g += f.g;
        sum_a += f.a;
        sum_n += f.n;
        sum_m += f.m;
        sum_d += f.distance;
    }
    const double errors = static_cast<double>(sum_g + sum_a + sum_m) - 2.0 * static_cast<double>(sum_n);
    if (sum_g > 0) report.mota = 1.0 - errors / static_cast<double>(sum_g);
    else report.mota = errors == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    report.motp = sum_n > 0 ? 1.0 - sum_d / static_cast<double>(sum_n) : 0.0;
    report.ids = sum_m;
    const auto traj = trajectory_metrics(gt, report.correspondences);
    report.mt = traj.mt;
    report.fm = traj.fm;
    return report;
}

}  // namespace motis
