#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

namespace motis::detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;

/// log(exp(a) + exp(b)) without overflow; either side may be -inf.
inline double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    if (a < b) std::swap(a, b);
    return a + std::log1p(std::exp(b - a));
}

/// Running log-sum-exp.
class LogAccumulator {
public:
    void add(double log_value) { total_ = log_add(total_, log_value); }
    [[nodiscard]] double log_sum() const { return total_; }
    [[nodiscard]] double sum() const { return std::exp(total_); }

private:
    double total_ = kNegInf;
};

inline double log_factorial(std::size_t n) {
    return std::lgamma(static_cast<double>(n) + 1.0);
}

inline double log_binomial(std::size_t n, std::size_t k) {
    if (k > n) return kNegInf;
    return log_factorial(n) - log_factorial(k) - log_factorial(n - k);
}

/// k * log(x) with the convention 0 * log(0) = 0.
inline double xlogy(double k, double x) {
    if (k == 0.0) return 0.0;
    return k * std::log(x);
}

}  // namespace motis::detail
