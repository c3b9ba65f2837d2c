#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <stdexcept>
#include <utility>
#include <vector>

namespace motis {

/// Cost of a forbidden pair. Larger than any finite sum; never summed with finite costs.
inline constexpr double kForbidden = std::numeric_limits<double>::infinity();

class InfeasibleAssignment : public std::runtime_error {
public:
    InfeasibleAssignment() : std::runtime_error("assignment problem has no finite-cost solution") {}
};

class AssignmentLimitExceeded : public std::runtime_error {
public:
    explicit AssignmentLimitExceeded(std::size_t cap)
        : std::runtime_error("ranked assignment enumeration exceeded cap of " + std::to_string(cap)) {}
};

/// Square matrix of assignment costs, row-major. kForbidden marks disallowed pairs.
class CostMatrix {
public:
    CostMatrix() = default;
    explicit CostMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}
    CostMatrix(std::initializer_list<std::initializer_list<double>> rows) : n_(rows.size()) {
        data_.reserve(n_ * n_);
        for (const auto& row : rows) {
            if (row.size() != n_) throw std::invalid_argument("cost matrix must be square");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    [[nodiscard]] std::size_t size() const { return n_; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * n_ + c]; }
    [[nodiscard]] double operator()(std::size_t r, std::size_t c) const { return data_[r * n_ + c]; }

    void validate() const {
        for (double v : data_) {
            if (std::isnan(v) || v == -std::numeric_limits<double>::infinity())
                throw std::invalid_argument("cost matrix entries must be finite or +inf");
        }
    }

private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

/// A bijection row -> column with its total cost.
struct Assignment {
    std::vector<std::size_t> mapping;
    double total_cost = 0.0;

    friend bool operator==(const Assignment&, const Assignment&) = default;
};

/// Sum of the mapped entries in row order. This is the canonical cost used for ordering.
inline double assignment_cost(const CostMatrix& m, const std::vector<std::size_t>& mapping) {
    double total = 0.0;
    for (std::size_t r = 0; r < mapping.size(); ++r) total += m(r, mapping[r]);
    return total;
}

/// Operation counters for complexity checks.
struct AssignmentStats {
    std::uint64_t operations = 0;
    std::uint64_t solves = 0;
};

namespace detail {

/// Shortest-augmenting-path Hungarian state with dual potentials (1-based, column 0 is the root).
/// Invariants: u[i] + v[j] <= a(i, j) everywhere, with equality on matched pairs.
struct HungarianState {
    std::vector<double> u;
    std::vector<double> v;
    std::vector<std::size_t> col_owner;  // col_owner[j] = matched row (1-based) or 0

    explicit HungarianState(std::size_t n = 0) : u(n + 1, 0.0), v(n + 1, 0.0), col_owner(n + 1, 0) {}
};

/// Inserts free row `row` (1-based) into the matching. Returns false if no finite augmenting path exists.
inline bool augment_row(const CostMatrix& a, HungarianState& st, std::size_t row, AssignmentStats* stats) {
    const std::size_t n = a.size();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> minv(n + 1, inf);
    std::vector<std::size_t> way(n + 1, 0);
    std::vector<char> used(n + 1, 0);
    auto& p = st.col_owner;
    p[0] = row;
    std::size_t j0 = 0;
    std::uint64_t ops = 0;
    do {
        used[j0] = 1;
        const std::size_t i0 = p[j0];
        double delta = inf;
        std::size_t j1 = 0;
        for (std::size_t j = 1; j <= n; ++j) {
            ++ops;
            if (used[j]) continue;
            const double cost = a(i0 - 1, j - 1);
            if (cost != kForbidden) {
                const double cur = cost - st.u[i0] - st.v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
            }
            if (minv[j] < delta) {
                delta = minv[j];
                j1 = j;
            }
        }
        if (delta == inf) {
            p[0] = 0;
            if (stats) stats->operations += ops;
            return false;
        }
        for (std::size_t j = 0; j <= n; ++j) {
            if (used[j]) {
                st.u[p[j]] += delta;
                st.v[j] -= delta;
            } else if (minv[j] != inf) {
                minv[j] -= delta;
            }
        }
        j0 = j1;
    } while (p[j0] != 0);
    do {
        const std::size_t j1 = way[j0];
        p[j0] = p[j1];
        j0 = j1;
    } while (j0 != 0);
    p[0] = 0;
    if (stats) stats->operations += ops;
    return true;
}

inline std::vector<std::size_t> mapping_of(const HungarianState& st, std::size_t n) {
    std::vector<std::size_t> mapping(n, 0);
    for (std::size_t j = 1; j <= n; ++j) {
        if (st.col_owner[j] != 0) mapping[st.col_owner[j] - 1] = j - 1;
    }
    return mapping;
}

inline void set_mapping(HungarianState& st, const std::vector<std::size_t>& mapping) {
    std::fill(st.col_owner.begin(), st.col_owner.end(), 0);
    for (std::size_t r = 0; r < mapping.size(); ++r) st.col_owner[mapping[r] + 1] = r + 1;
}

/// Among all matchings that use only tight pairs (zero reduced cost under the optimal duals),
/// picks the lexicographically smallest row->column mapping. Starts from an optimal mapping.
inline std::vector<std::size_t> lex_min_tight(const CostMatrix& a, const HungarianState& st,
                                              std::vector<std::size_t> mapping, AssignmentStats* stats) {
    const std::size_t n = a.size();
    double scale = 1.0;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
            if (a(r, c) != kForbidden) scale = std::max(scale, std::abs(a(r, c)));
    const double tol = 1e-10 * scale;
    auto tight = [&](std::size_t r, std::size_t c) {
        const double cost = a(r, c);
        return cost != kForbidden && cost - st.u[r + 1] - st.v[c + 1] <= tol;
    };

    std::vector<std::size_t> owner(n);
    for (std::size_t r = 0; r < n; ++r) owner[mapping[r]] = r;
    std::vector<char> fixed_col(n, 0);
    std::uint64_t ops = 0;

    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            ++ops;
            if (fixed_col[c] || !tight(r, c)) continue;
            if (mapping[r] == c) break;
            // Give c to r. Its current owner must then reach r's old column along an
            // alternating path of tight pairs through rows that are not yet fixed.
            const std::size_t displaced = owner[c];
            const std::size_t target = mapping[r];
            std::vector<std::size_t> reached_by(n, n);
            std::vector<char> seen(n, 0);
            seen[c] = 1;
            std::vector<std::size_t> frontier{displaced};
            bool found = false;
            while (!frontier.empty() && !found) {
                std::vector<std::size_t> next;
                for (std::size_t row : frontier) {
                    for (std::size_t col = 0; col < n; ++col) {
                        ++ops;
                        if (seen[col] || fixed_col[col] || !tight(row, col)) continue;
                        seen[col] = 1;
                        reached_by[col] = row;
                        if (col == target) {
                            found = true;
                            break;
                        }
                        next.push_back(owner[col]);
                    }
                    if (found) break;
                }
                frontier = std::move(next);
            }
            if (!found) continue;
            std::size_t col = target;
            while (true) {
                const std::size_t row = reached_by[col];
                const std::size_t previous = mapping[row];
                mapping[row] = col;
                owner[col] = row;
                if (row == displaced) break;
                col = previous;
            }
            mapping[r] = c;
            owner[c] = r;
            break;
        }
        fixed_col[mapping[r]] = 1;
    }
    if (stats) stats->operations += ops;
    return mapping;
}

inline CostMatrix constrained_matrix(const CostMatrix& base,
                                     const std::vector<std::pair<std::size_t, std::size_t>>& forced,
                                     const std::vector<std::pair<std::size_t, std::size_t>>& excluded) {
    CostMatrix m = base;
    const std::size_t n = base.size();
    for (auto [r, c] : forced) {
        for (std::size_t k = 0; k < n; ++k) {
            if (k != c) m(r, k) = kForbidden;
            if (k != r) m(k, c) = kForbidden;
        }
    }
    for (auto [r, c] : excluded) m(r, c) = kForbidden;
    return m;
}

inline std::optional<std::pair<Assignment, HungarianState>> solve_with_duals(const CostMatrix& m,
                                                                             AssignmentStats* stats) {
    const std::size_t n = m.size();
    HungarianState st(n);
    if (stats) ++stats->solves;
    for (std::size_t r = 1; r <= n; ++r) {
        if (!augment_row(m, st, r, stats)) return std::nullopt;
    }
    auto mapping = lex_min_tight(m, st, mapping_of(st, n), stats);
    set_mapping(st, mapping);
    Assignment best{mapping, assignment_cost(m, mapping)};
    return std::make_pair(std::move(best), std::move(st));
}

}  // namespace detail

/// Minimum-cost assignment; among optimal mappings, the lexicographically smallest.
/// Throws InfeasibleAssignment if every perfect assignment uses a forbidden pair.
inline Assignment solve_best(const CostMatrix& m, AssignmentStats* stats = nullptr) {
    m.validate();
    auto solved = detail::solve_with_duals(m, stats);
    if (!solved) throw InfeasibleAssignment();
    return std::move(solved->first);
}

/// Lazy enumeration of assignments in nondecreasing cost order (Murty's partitioning),
/// ties ordered by lexicographic mapping. Each subproblem is re-solved from its parent's
/// duals with a single augmentation, so each ranked solution costs O(N^3).
class RankedAssignments {
public:
    explicit RankedAssignments(CostMatrix m, AssignmentStats* stats = nullptr)
        : base_(std::move(m)), stats_(stats) {
        base_.validate();
        auto root = detail::solve_with_duals(base_, stats_);
        if (!root) throw InfeasibleAssignment();
        queue_.push(Node{std::move(root->first), std::move(root->second), {}, {}});
    }

    /// Next assignment in rank order, or nullopt once every assignment has been produced.
    std::optional<Assignment> next() {
        if (queue_.empty()) return std::nullopt;
        Node node = queue_.top();
        queue_.pop();
        expand(node);
        return std::move(node.solution);
    }

    [[nodiscard]] bool exhausted() const { return queue_.empty(); }

    /// Cost of the next assignment without consuming it.
    [[nodiscard]] std::optional<double> peek_cost() const {
        if (queue_.empty()) return std::nullopt;
        return queue_.top().solution.total_cost;
    }

private:
    using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;
    struct Node {
        Assignment solution;
        detail::HungarianState duals;
        Pairs forced;
        Pairs excluded;
    };
    struct After {
        bool operator()(const Node& a, const Node& b) const {
            if (a.solution.total_cost != b.solution.total_cost)
                return a.solution.total_cost > b.solution.total_cost;
            return a.solution.mapping > b.solution.mapping;
        }
    };

    void expand(const Node& node) {
        const std::size_t n = base_.size();
        std::vector<char> is_forced(n, 0);
        for (auto [r, c] : node.forced) is_forced[r] = 1;
        std::vector<std::size_t> free_rows;
        for (std::size_t r = 0; r < n; ++r)
            if (!is_forced[r]) free_rows.push_back(r);
        if (free_rows.size() < 2) return;

        Pairs forced = node.forced;
        for (std::size_t t = 0; t + 1 < free_rows.size(); ++t) {
            const std::size_t row = free_rows[t];
            const std::size_t col = node.solution.mapping[row];
            Pairs excluded = node.excluded;
            excluded.emplace_back(row, col);
            CostMatrix sub = detail::constrained_matrix(base_, forced, excluded);
            if (stats_) stats_->operations += static_cast<std::uint64_t>(n) * n;

            detail::HungarianState st = node.duals;
            st.col_owner[col + 1] = 0;
            if (stats_) ++stats_->solves;
            if (detail::augment_row(sub, st, row + 1, stats_)) {
                auto mapping = detail::lex_min_tight(sub, st, detail::mapping_of(st, n), stats_);
                detail::set_mapping(st, mapping);
                const double cost = assignment_cost(base_, mapping);
                queue_.push(Node{Assignment{std::move(mapping), cost}, std::move(st), forced, std::move(excluded)});
            }
            forced.emplace_back(row, col);
        }
    }

    CostMatrix base_;
    AssignmentStats* stats_;
    std::priority_queue<Node, std::vector<Node>, After> queue_;
};

inline constexpr std::size_t kDefaultAssignmentCap = 10000;

/// Ranked assignments from the optimum, stopping before the first whose probability ratio
/// exp(best - cost) falls below `ratio_threshold`. A threshold of 0 enumerates everything.
/// Throws AssignmentLimitExceeded if more than `max_count` assignments qualify.
inline std::vector<Assignment> murty_k_best(const CostMatrix& m, double ratio_threshold,
                                            std::size_t max_count = kDefaultAssignmentCap,
                                            AssignmentStats* stats = nullptr) {
    if (!(ratio_threshold >= 0.0 && ratio_threshold <= 1.0))
        throw std::invalid_argument("ratio threshold must lie in [0, 1]");
    RankedAssignments ranked(m, stats);
    std::vector<Assignment> out;
    while (auto next = ranked.next()) {
        if (!out.empty() && std::exp(out.front().total_cost - next->total_cost) < ratio_threshold) break;
        if (out.size() == max_count) throw AssignmentLimitExceeded(max_count);
        out.push_back(std::move(*next));
    }
    return out;
}

}  // namespace motis
