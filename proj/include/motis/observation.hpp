#pragma once

#include "motis/assignment.hpp"
#include "motis/detail/logmath.hpp"
#include "motis/models.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

namespace motis {

/// A data-association hypothesis <F, M, psi> together with its term Pr(O, phi | X) in log form.
struct DataAssociation {
    std::vector<std::size_t> false_detections;                  // F, detection indices (sorted)
    std::vector<std::size_t> missed_objects;                    // M, object indices (sorted)
    std::vector<std::pair<std::size_t, std::size_t>> matches;   // psi: (object, detection), sorted by object
    double log_joint_term = detail::kNegInf;

    [[nodiscard]] double joint_term() const { return std::exp(log_joint_term); }

    /// Detection index per object, -1 for missed objects.
    [[nodiscard]] std::vector<long> object_to_detection(std::size_t n_objects) const {
        std::vector<long> out(n_objects, -1);
        for (auto [obj, det] : matches) out[obj] = static_cast<long>(det);
        return out;
    }
};

/// Outcome of evaluating the joint observation function for one particle.
struct ObsResult {
    double log_likelihood = detail::kNegInf;
    DataAssociation best;
    std::size_t terms_evaluated = 0;

    [[nodiscard]] double likelihood() const { return std::exp(log_likelihood); }
};

/// Per matched sub-problem bookkeeping, filled when a trace is attached.
struct MatchedProblemRecord {
    std::size_t size = 0;
    double log_pruned = detail::kNegInf;
    std::size_t terms = 0;
    double log_exact = std::numeric_limits<double>::quiet_NaN();
};

struct ObservationTrace {
    bool compute_exact = false;
    std::vector<double> popped_priority;
    std::vector<MatchedProblemRecord> problems;
};

// ---- False / missing factors ----

/// log f_F(F) = |F| log(nu tau) - nu tau + sum_{o in F} log Pr(o | empty).
inline double log_f_false(std::span<const Detection> false_set, const ModelParams& params) {
    const double rate = params.false_rate * params.dt;
    double out = -rate;
    for (const auto& o : false_set) {
        out += std::log(rate) + log_clutter_likelihood(o, params);
    }
    return out;
}

inline double f_false(std::span<const Detection> false_set, const ModelParams& params) {
    return std::exp(log_f_false(false_set, params));
}

/// log f_M for one miss set of size m drawn from n objects.
inline double log_f_miss(std::size_t m, std::size_t n, const ModelParams& params) {
    if (m > n) throw std::invalid_argument("miss set larger than object set");
    const double rate = static_cast<double>(n) * params.miss_rate * params.dt;
    if (std::isinf(rate)) return m == n ? 0.0 : detail::kNegInf;
    return detail::xlogy(static_cast<double>(m), rate) - rate - detail::log_factorial(m) -
           detail::log_binomial(n, m);
}

inline double f_miss(std::size_t m, std::size_t n, const ModelParams& params) {
    return std::exp(log_f_miss(m, n, params));
}

// ---- Matched likelihood ----

/// Dense table of log Pr(o_j | s_i), objects as rows.
class LogLikelihoodTable {
public:
    LogLikelihoodTable(std::span<const ObjectState> objects, std::span<const Detection> detections,
                       const ModelParams& params)
        : rows_(objects.size()), cols_(detections.size()), data_(rows_ * cols_) {
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j)
                data_[i * cols_ + j] = log_detect_likelihood(detections[j], objects[i], params);
    }

    [[nodiscard]] double operator()(std::size_t obj, std::size_t det) const { return data_[obj * cols_ + det]; }
    [[nodiscard]] std::size_t objects() const { return rows_; }
    [[nodiscard]] std::size_t detections() const { return cols_; }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
};

struct MatchedLikelihood {
    double log_value = detail::kNegInf;
    std::vector<std::size_t> best_psi;  // position k in objs -> position in dets
    double log_best = detail::kNegInf;
    std::size_t terms = 0;

    [[nodiscard]] double value() const { return std::exp(log_value); }
};

namespace detail {

/// log sum_s Pr(o | s) per detection. The product over matched detections bounds any matched sum.
inline std::vector<double> log_column_sums(const LogLikelihoodTable& table) {
    std::vector<double> out(table.detections());
    for (std::size_t j = 0; j < table.detections(); ++j) {
        LogAccumulator acc;
        for (std::size_t i = 0; i < table.objects(); ++i) acc.add(table(i, j));
        out[j] = acc.log_sum();
    }
    return out;
}

/// Sum over Murty-ranked assignments of the selected sub-table until the ratio cutoff.
inline MatchedLikelihood matched_from_table(const LogLikelihoodTable& table, std::span<const std::size_t> objs,
                                            std::span<const std::size_t> dets, double ratio_threshold) {
    MatchedLikelihood out;
    const std::size_t k = objs.size();
    if (k == 0) {
        out.log_value = 0.0;
        out.log_best = 0.0;
        out.terms = 1;
        return out;
    }
    CostMatrix cost(k);
    for (std::size_t r = 0; r < k; ++r)
        for (std::size_t c = 0; c < k; ++c) {
            const double l = table(objs[r], dets[c]);
            cost(r, c) = l == kNegInf ? kForbidden : -l;
        }
    if (k == 1) {
        if (cost(0, 0) == kForbidden) return out;
        out.log_value = out.log_best = -cost(0, 0);
        out.best_psi = {0};
        out.terms = 1;
        return out;
    }
    std::optional<RankedAssignments> ranked;
    try {
        ranked.emplace(std::move(cost));
    } catch (const InfeasibleAssignment&) {
        return out;
    }
    LogAccumulator acc;
    while (auto next_cost = ranked->peek_cost()) {
        if (out.terms > 0 && std::exp(-out.log_best - *next_cost) < ratio_threshold) break;
        if (out.terms == kDefaultAssignmentCap) throw AssignmentLimitExceeded(kDefaultAssignmentCap);
        Assignment a = *ranked->next();
        if (out.terms == 0) {
            out.log_best = -a.total_cost;
            out.best_psi = std::move(a.mapping);
        }
        acc.add(-a.total_cost);
        ++out.terms;
    }
    out.log_value = acc.log_sum();
    return out;
}

/// log permanent of exp(log_entries) for a k x k sub-table, by dynamic programming over column
/// subsets in log space, so entries of any magnitude contribute.
inline double log_permanent(const LogLikelihoodTable& table, std::span<const std::size_t> objs,
                            std::span<const std::size_t> dets) {
    const std::size_t k = objs.size();
    if (k == 0) return 0.0;
    if (k > 24) throw std::invalid_argument("permanent size limit exceeded");
    const std::size_t full = (std::size_t{1} << k) - 1;
    std::vector<double> dp(full + 1, kNegInf);
    dp[0] = 0.0;
    for (std::size_t mask = 0; mask < full; ++mask) {
        if (dp[mask] == kNegInf) continue;
        const std::size_t r = static_cast<std::size_t>(__builtin_popcountll(mask));
        for (std::size_t c = 0; c < k; ++c) {
            if (mask & (std::size_t{1} << c)) continue;
            const double l = table(objs[r], dets[c]);
            if (l == kNegInf) continue;
            auto& slot = dp[mask | (std::size_t{1} << c)];
            slot = log_add(slot, dp[mask] + l);
        }
    }
    return dp[full];
}

/// Subsets F of detections generated on demand in descending order of a product-form score
/// f_F(F) * prod_{o not in F} w_out(o). With w_out = 1 this is plain f_F order.
/// Each detection toggles the score by exp(delta) <= 1 relative to the unconstrained maximum,
/// so successive subsets come from a heap over toggle sets.
class FalseSetList {
public:
    struct Entry {
        double log_priority;               // log of the ordering score
        double log_f;                      // log f_F(F)
        std::vector<std::size_t> members;  // sorted detection indices
    };

    FalseSetList(std::span<const Detection> detections, const ModelParams& params,
                 std::span<const double> log_out = {}) {
        const double rate = params.false_rate * params.dt;
        const std::size_t n = detections.size();
        log_in_.resize(n);
        log_out_.assign(n, 0.0);
        rate_ = rate;
        log_top_ = -rate;
        for (std::size_t j = 0; j < n; ++j) {
            log_in_[j] = std::log(rate) + log_clutter_likelihood(detections[j], params);
            if (!log_out.empty()) log_out_[j] = log_out[j];
            if (log_in_[j] > log_out_[j]) {
                base_.push_back(j);
                log_top_ += log_in_[j];
            } else {
                log_top_ += log_out_[j];
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            const double delta = -std::abs(log_in_[j] - log_out_[j]);
            if (!std::isnan(delta) && delta != kNegInf) toggles_.push_back({delta, j});
        }
        std::sort(toggles_.begin(), toggles_.end(), [](const Toggle& a, const Toggle& b) {
            return a.delta != b.delta ? a.delta > b.delta : a.detection < b.detection;
        });
        heap_.push(Candidate{0.0, {}});
    }

    /// Materializes entries up to index i. Returns false if the list is shorter.
    bool ensure(std::size_t i) {
        while (entries_.size() <= i) {
            if (heap_.empty()) return false;
            Candidate cand = heap_.top();
            heap_.pop();
            if (cand.toggled.empty()) {
                if (!toggles_.empty()) push_child(cand, 0, false);
            } else if (const std::size_t pos = cand.toggled.back() + 1; pos < toggles_.size()) {
                push_child(cand, pos, false);
                push_child(cand, pos, true);
            }
            entries_.push_back(materialize(cand));
        }
        return true;
    }

    const Entry& operator[](std::size_t i) const { return entries_[i]; }

private:
    struct Toggle {
        double delta;
        std::size_t detection;
    };
    struct Candidate {
        double delta_sum;
        std::vector<std::size_t> toggled;  // positions in toggles_, increasing
    };
    struct Less {
        bool operator()(const Candidate& a, const Candidate& b) const {
            if (a.delta_sum != b.delta_sum) return a.delta_sum < b.delta_sum;
            return a.toggled > b.toggled;
        }
    };

    // Successor rules: append position `pos`, or replace the last toggle with `pos`.
    void push_child(const Candidate& parent, std::size_t pos, bool replace_last) {
        Candidate child = parent;
        if (replace_last) {
            child.delta_sum -= toggles_[child.toggled.back()].delta;
            child.toggled.back() = pos;
        } else {
            child.toggled.push_back(pos);
        }
        child.delta_sum += toggles_[pos].delta;
        heap_.push(std::move(child));
    }

    Entry materialize(const Candidate& cand) const {
        std::vector<std::size_t> members = base_;
        for (std::size_t pos : cand.toggled) {
            const std::size_t det = toggles_[pos].detection;
            auto it = std::find(members.begin(), members.end(), det);
            if (it != members.end()) members.erase(it);
            else members.push_back(det);
        }
        std::sort(members.begin(), members.end());
        double log_f = -rate_;
        for (std::size_t j : members) log_f += log_in_[j];
        return Entry{log_top_ + cand.delta_sum, log_f, std::move(members)};
    }

    double rate_ = 0.0;
    double log_top_ = 0.0;
    std::vector<double> log_in_;
    std::vector<double> log_out_;
    std::vector<std::size_t> base_;
    std::vector<Toggle> toggles_;
    std::priority_queue<Candidate, std::vector<Candidate>, Less> heap_;
    std::vector<Entry> entries_;
};

inline bool next_combination(std::vector<std::size_t>& comb, std::size_t n) {
    const std::size_t k = comb.size();
    for (std::size_t i = k; i-- > 0;) {
        if (comb[i] < n - k + i) {
            ++comb[i];
            for (std::size_t j = i + 1; j < k; ++j) comb[j] = comb[j - 1] + 1;
            return true;
        }
    }
    return false;
}

inline std::vector<std::size_t> complement(std::span<const std::size_t> subset, std::size_t n) {
    std::vector<char> in(n, 0);
    for (std::size_t i : subset) in[i] = 1;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i)
        if (!in[i]) out.push_back(i);
    return out;
}

}  // namespace detail

/// Approximates sum_psi prod Pr(psi(s) | s) over bijections objs -> dets with Murty-ranked
/// assignments down to the ratio cutoff. Empty inputs give 1.
inline MatchedLikelihood matched_likelihood(std::span<const ObjectState> objs, std::span<const Detection> dets,
                                            double ratio_threshold, const ModelParams& params) {
    if (objs.size() != dets.size()) throw std::invalid_argument("matched likelihood needs equal-size sets");
    LogLikelihoodTable table(objs, dets, params);
    std::vector<std::size_t> idx(objs.size());
    std::iota(idx.begin(), idx.end(), 0);
    return detail::matched_from_table(table, idx, idx, ratio_threshold);
}

/// Pr(O | S) with assignment pruning (params.assign_threshold) and false-missing pruning
/// (params.fm_threshold). F-M pairs are visited in nonincreasing f_F * f_M order through a
/// priority queue; miss sets are grouped by size since f_M depends on |M| only.
inline ObsResult joint_likelihood(std::span<const Detection> detections, std::span<const ObjectState> objects,
                                  const ModelParams& params, ObservationTrace* trace = nullptr) {
    const std::size_t n_det = detections.size();
    const std::size_t n_obj = objects.size();
    const LogLikelihoodTable table(objects, detections, params);
    const auto log_out = detail::log_column_sums(table);
    detail::FalseSetList false_sets(detections, params, log_out);

    struct MissEntry {
        double log_f;
        std::size_t size;
    };
    std::vector<MissEntry> miss_sizes;
    for (std::size_t m = 0; m <= n_obj; ++m) {
        const double lf = log_f_miss(m, n_obj, params);
        if (lf != detail::kNegInf) miss_sizes.push_back({lf, m});
    }
    std::stable_sort(miss_sizes.begin(), miss_sizes.end(),
                     [](const MissEntry& a, const MissEntry& b) { return a.log_f > b.log_f; });

    ObsResult result;
    if (miss_sizes.empty() || !false_sets.ensure(0)) return result;

    struct Item {
        double log_priority;
        std::size_t i;
        std::size_t j;
    };
    auto lower = [](const Item& a, const Item& b) {
        if (a.log_priority != b.log_priority) return a.log_priority < b.log_priority;
        if (a.i != b.i) return a.i > b.i;
        return a.j > b.j;
    };
    std::priority_queue<Item, std::vector<Item>, decltype(lower)> queue(lower);
    std::unordered_set<std::uint64_t> queued;
    auto push = [&](std::size_t i, std::size_t j) {
        if (!queued.insert((static_cast<std::uint64_t>(i) << 32) | j).second) return;
        queue.push({false_sets[i].log_priority + miss_sizes[j].log_f, i, j});
    };
    push(0, 0);

    const double log_threshold = params.fm_threshold > 0.0 ? std::log(params.fm_threshold) : detail::kNegInf;
    const long size_gap = static_cast<long>(n_det) - static_cast<long>(n_obj);
    detail::LogAccumulator total;
    double previous_q = std::numeric_limits<double>::infinity();

    while (!queue.empty()) {
        const Item item = queue.top();
        queue.pop();
        assert(item.log_priority <= previous_q + 1e-12 * (1.0 + std::abs(previous_q)));
        previous_q = item.log_priority;
        if (trace) trace->popped_priority.push_back(item.log_priority);

        const auto& fset = false_sets[item.i];
        const std::size_t m = miss_sizes[item.j].size;
        const double log_q = fset.log_f + miss_sizes[item.j].log_f;
        if (static_cast<long>(fset.members.size()) - static_cast<long>(m) == size_gap) {
            const auto matched_dets = detail::complement(fset.members, n_det);
            std::vector<std::size_t> missed(m);
            std::iota(missed.begin(), missed.end(), 0);
            do {
                const auto matched_objs = detail::complement(missed, n_obj);
                auto matched = detail::matched_from_table(table, matched_objs, matched_dets, params.assign_threshold);
                result.terms_evaluated += matched.terms;
                if (trace) {
                    MatchedProblemRecord rec{matched_objs.size(), matched.log_value, matched.terms};
                    if (trace->compute_exact) rec.log_exact = detail::log_permanent(table, matched_objs, matched_dets);
                    trace->problems.push_back(rec);
                }
                if (matched.log_value != detail::kNegInf) {
                    total.add(log_q + matched.log_value);
                    const double log_term = log_q + matched.log_best;
                    if (log_term > result.best.log_joint_term) {
                        DataAssociation& best = result.best;
                        best.log_joint_term = log_term;
                        best.false_detections = fset.members;
                        best.missed_objects = missed;
                        best.matches.clear();
                        for (std::size_t k = 0; k < matched_objs.size(); ++k)
                            best.matches.emplace_back(matched_objs[k], matched_dets[matched.best_psi[k]]);
                    }
                }
            } while (detail::next_combination(missed, n_obj));
        }

        if (false_sets.ensure(item.i + 1)) push(item.i + 1, item.j);
        if (item.j + 1 < miss_sizes.size()) push(item.i, item.j + 1);
        // Every later pair is bounded by this priority.
        if (item.log_priority < log_threshold + total.log_sum()) break;
    }
    result.log_likelihood = total.log_sum();
    return result;
}

inline DataAssociation best_association(std::span<const Detection> detections, std::span<const ObjectState> objects,
                                        const ModelParams& params) {
    return joint_likelihood(detections, objects, params).best;
}

/// Unpruned evaluation by full enumeration of every F-M pair and every bijection.
struct ExactObservation {
    double log_likelihood = detail::kNegInf;
    DataAssociation best;
    std::size_t fm_pairs = 0;
    std::size_t terms = 0;

    [[nodiscard]] double likelihood() const { return std::exp(log_likelihood); }
};

inline constexpr std::size_t kExactSizeLimit = 12;

inline ExactObservation joint_likelihood_exact(std::span<const Detection> detections,
                                               std::span<const ObjectState> objects, const ModelParams& params) {
    const std::size_t n_det = detections.size();
    const std::size_t n_obj = objects.size();
    if (n_det + n_obj > kExactSizeLimit)
        throw std::invalid_argument("exact observation function limited to |O| + |S| <= 12");
    const LogLikelihoodTable table(objects, detections, params);
    ExactObservation out;
    detail::LogAccumulator total;

    for (std::size_t fmask = 0; fmask < (std::size_t{1} << n_det); ++fmask) {
        std::vector<std::size_t> fset, dets;
        std::vector<Detection> false_dets;
        for (std::size_t j = 0; j < n_det; ++j) {
            if (fmask & (std::size_t{1} << j)) {
                fset.push_back(j);
                false_dets.push_back(detections[j]);
            } else {
                dets.push_back(j);
            }
        }
        const double log_ff = log_f_false(false_dets, params);
        for (std::size_t mmask = 0; mmask < (std::size_t{1} << n_obj); ++mmask) {
            std::vector<std::size_t> mset, objs;
            for (std::size_t i = 0; i < n_obj; ++i)
                ((mmask & (std::size_t{1} << i)) ? mset : objs).push_back(i);
            if (objs.size() != dets.size()) continue;
            ++out.fm_pairs;
            const double log_q = log_ff + log_f_miss(mset.size(), n_obj, params);
            std::vector<std::size_t> perm(dets.size());
            std::iota(perm.begin(), perm.end(), 0);
            do {
                ++out.terms;
                double log_term = log_q;
                for (std::size_t k = 0; k < objs.size(); ++k) log_term += table(objs[k], dets[perm[k]]);
                if (log_term == detail::kNegInf || std::isnan(log_term)) continue;
                total.add(log_term);
                if (log_term > out.best.log_joint_term) {
                    out.best.log_joint_term = log_term;
                    out.best.false_detections = fset;
                    out.best.missed_objects = mset;
                    out.best.matches.clear();
                    for (std::size_t k = 0; k < objs.size(); ++k) out.best.matches.emplace_back(objs[k], dets[perm[k]]);
                }
            } while (std::next_permutation(perm.begin(), perm.end()));
        }
    }
    out.log_likelihood = total.log_sum();
    return out;
}

/// Unpruned Pr(O | S) by dynamic programming over matched object subsets:
/// O(|O| 2^|S| |S|) instead of enumerating bijections. Used as the reference for large frames.
inline double log_joint_likelihood_dp(std::span<const Detection> detections, std::span<const ObjectState> objects,
                                      const ModelParams& params) {
    const std::size_t n_det = detections.size();
    const std::size_t n_obj = objects.size();
    if (n_obj > 20) throw std::invalid_argument("subset DP limited to |S| <= 20");
    const LogLikelihoodTable table(objects, detections, params);
    const double rate = params.false_rate * params.dt;

    // Common scale keeps long double products in range for large frames.
    double log_scale = -rate;
    std::vector<double> col_max(n_det, detail::kNegInf);
    std::vector<double> log_w(n_det);
    for (std::size_t j = 0; j < n_det; ++j) {
        log_w[j] = std::log(rate) + log_clutter_likelihood(detections[j], params);
        col_max[j] = log_w[j];
        for (std::size_t i = 0; i < n_obj; ++i) col_max[j] = std::max(col_max[j], table(i, j));
        if (col_max[j] == detail::kNegInf) return detail::kNegInf;
        log_scale += col_max[j];
    }

    const std::size_t states = std::size_t{1} << n_obj;
    std::vector<long double> dp(states, 0.0L), next(states);
    dp[0] = 1.0L;
    for (std::size_t j = 0; j < n_det; ++j) {
        const long double w = std::exp(static_cast<long double>(log_w[j] - col_max[j]));
        std::vector<long double> l(n_obj);
        for (std::size_t i = 0; i < n_obj; ++i) l[i] = std::exp(static_cast<long double>(table(i, j) - col_max[j]));
        for (std::size_t mask = 0; mask < states; ++mask) {
            long double v = dp[mask] * w;
            for (std::size_t i = 0; i < n_obj; ++i)
                if (mask & (std::size_t{1} << i)) v += dp[mask ^ (std::size_t{1} << i)] * l[i];
            next[mask] = v;
        }
        dp.swap(next);
    }
    std::vector<double> log_fm(n_obj + 1);
    for (std::size_t m = 0; m <= n_obj; ++m) log_fm[m] = log_f_miss(m, n_obj, params);
    long double sum = 0.0L;
    for (std::size_t mask = 0; mask < states; ++mask) {
        if (dp[mask] == 0.0L) continue;
        const std::size_t matched = static_cast<std::size_t>(__builtin_popcountll(mask));
        sum += dp[mask] * std::exp(static_cast<long double>(log_fm[n_obj - matched]));
    }
    if (sum == 0.0L) return detail::kNegInf;
    return log_scale + static_cast<double>(std::log(sum));
}

/// Number of product terms in the unpruned observation function: sum_i C(|O|,i) C(|S|,i) i!.
inline double full_term_count(std::size_t n_det, std::size_t n_obj) {
    double total = 0.0;
    for (std::size_t i = 0; i <= std::min(n_det, n_obj); ++i)
        total += std::exp(detail::log_binomial(n_det, i) + detail::log_binomial(n_obj, i) + detail::log_factorial(i));
    return total;
}

}  // namespace motis
