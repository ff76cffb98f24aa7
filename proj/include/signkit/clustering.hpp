#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "error.hpp"
#include "random.hpp"

namespace signkit {

struct ClusterResult {
    std::vector<double> centers;           ///< ascending
    std::vector<std::size_t> assignments;  ///< index into centers, per input point
    double inertia = 0.0;                  ///< sum of squared distances to assigned centers
    std::size_t requested_k = 0;
    std::size_t iterations = 0;            ///< Lloyd iterations of the winning restart
    std::vector<double> inertia_trace;     ///< inertia after each assignment step, winning restart

    std::size_t k() const noexcept { return centers.size(); }
    /// True when the input had fewer distinct values than requested_k.
    bool reduced() const noexcept { return centers.size() < requested_k; }
};

struct KMeansOptions {
    std::size_t restarts = 8;
    std::size_t max_iterations = 300;
};

namespace detail {

/// Nearest center; ties go to the lower index.
inline std::size_t nearest(double x, std::span<const double> centers) {
    std::size_t best = 0;
    double best_d = std::abs(x - centers[0]);
    for (std::size_t c = 1; c < centers.size(); ++c) {
        const double d = std::abs(x - centers[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

inline double sum_squares(std::span<const double> points, std::span<const double> centers,
                          std::span<const std::size_t> assignments) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double d = points[i] - centers[assignments[i]];
        total += d * d;
    }
    return total;
}

inline std::vector<double> plus_plus_seeds(std::span<const double> points, std::size_t k,
                                           std::mt19937_64& eng) {
    std::vector<double> centers;
    centers.reserve(k);
    centers.push_back(points[uniform_index(eng, points.size())]);
    std::vector<double> d2(points.size());
    while (centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (double c : centers) {
                best = std::min(best, (points[i] - c) * (points[i] - c));
            }
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            break;
        }
        const double target = total * uniform01(eng);
        double running = 0.0;
        std::size_t pick = points.size();
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (d2[i] <= 0.0) {
                continue;
            }
            running += d2[i];
            pick = i;
            if (running > target) {
                break;
            }
        }
        centers.push_back(points[pick]);
    }
    std::sort(centers.begin(), centers.end());
    return centers;
}

/// Sorts centers ascending and rewrites assignments to match.
inline void sort_centers(std::vector<double>& centers, std::vector<std::size_t>& assignments) {
    std::vector<std::size_t> order(centers.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return centers[a] < centers[b]; });
    std::vector<std::size_t> rank(centers.size());
    std::vector<double> sorted(centers.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
        rank[order[r]] = r;
        sorted[r] = centers[order[r]];
    }
    centers = std::move(sorted);
    for (auto& a : assignments) {
        a = rank[a];
    }
}

inline ClusterResult lloyd(std::span<const double> points, std::vector<double> centers,
                           std::size_t max_iterations) {
    const std::size_t k = centers.size();
    ClusterResult r;
    r.assignments.assign(points.size(), k); // k = "unassigned"
    std::vector<double> sums(k);
    std::vector<std::size_t> counts(k);
    for (std::size_t it = 0; it < max_iterations; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto c = nearest(points[i], centers);
            changed = changed || c != r.assignments[i];
            r.assignments[i] = c;
        }
        r.inertia_trace.push_back(sum_squares(points, centers, r.assignments));
        r.iterations = it + 1;
        if (!changed) {
            break;
        }

        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            sums[r.assignments[i]] += points[i];
            ++counts[r.assignments[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                centers[c] = sums[c] / static_cast<double>(counts[c]);
                continue;
            }
            // Empty cluster: move it onto the worst-served point.
            std::size_t worst = 0;
            double worst_d = -1.0;
            for (std::size_t i = 0; i < points.size(); ++i) {
                const double d = std::abs(points[i] - centers[r.assignments[i]]);
                if (d > worst_d) {
                    worst_d = d;
                    worst = i;
                }
            }
            centers[c] = points[worst];
        }
        sort_centers(centers, r.assignments);
    }
    r.centers = std::move(centers);
    sort_centers(r.centers, r.assignments);
    r.inertia = sum_squares(points, r.centers, r.assignments);
    return r;
}

/// Means of the minimum-SSE split of sorted `points` into k contiguous groups.
/// Dynamic program over prefix sums; the optimal split point is monotone in
/// the group end, so each layer is solved by divide and conquer.
inline std::vector<double> optimal_partition_means(std::span<const double> points, std::size_t k) {
    const std::size_t n = points.size();
    // shift by the median value to keep the prefix sums well conditioned
    const double shift = points[n / 2];
    std::vector<long double> s1(n + 1, 0.0L), s2(n + 1, 0.0L);
    for (std::size_t i = 0; i < n; ++i) {
        const long double v = points[i] - shift;
        s1[i + 1] = s1[i] + v;
        s2[i + 1] = s2[i] + v * v;
    }
    const auto cost = [&](std::size_t i, std::size_t j) {
        const long double sum = s1[j] - s1[i];
        return std::max(0.0L, s2[j] - s2[i] - sum * sum / static_cast<long double>(j - i));
    };
    constexpr long double inf = std::numeric_limits<long double>::infinity();
    std::vector<long double> prev(n + 1, inf), cur(n + 1, inf);
    std::vector<std::vector<std::size_t>> split(k, std::vector<std::size_t>(n + 1, 0));
    for (std::size_t j = 1; j <= n; ++j) {
        prev[j] = cost(0, j);
    }
    for (std::size_t m = 1; m < k; ++m) {
        std::fill(cur.begin(), cur.end(), inf);
        auto& opt = split[m];
        // cur[j] for j in [lo, hi], split index searched in [ilo, ihi]
        const auto solve = [&](auto&& self, std::size_t lo, std::size_t hi, std::size_t ilo,
                               std::size_t ihi) -> void {
            if (lo > hi) {
                return;
            }
            const std::size_t mid = lo + (hi - lo) / 2;
            long double best = inf;
            std::size_t arg = ilo;
            for (std::size_t i = ilo; i <= std::min(ihi, mid - 1); ++i) {
                const long double v = prev[i] + cost(i, mid);
                if (v < best) {
                    best = v;
                    arg = i;
                }
            }
            cur[mid] = best;
            opt[mid] = arg;
            if (mid > lo) {
                self(self, lo, mid - 1, ilo, arg);
            }
            self(self, mid + 1, hi, arg, ihi);
        };
        solve(solve, m + 1, n, m, n - 1);
        std::swap(prev, cur);
    }
    std::vector<double> means(k);
    std::size_t end = n;
    for (std::size_t m = k; m-- > 0;) {
        const std::size_t begin = m == 0 ? 0 : split[m][end];
        means[m] = static_cast<double>(shift + (s1[end] - s1[begin]) / static_cast<long double>(end - begin));
        end = begin;
    }
    return means;
}

} // namespace detail

/**
 * One-dimensional k-means: k-means++ seeding followed by Lloyd iterations
 * until assignments stop changing (or `max_iterations`). The best of
 * `restarts` seeded runs wins, ties going to the earlier restart. One more
 * run starts from the exact optimal contiguous partition, so small inputs
 * never settle in a worse local optimum.
 *
 * When the input has fewer than k distinct values, k is reduced to that
 * count; `reduced()` reports it.
 */
inline ClusterResult kmeans_1d(std::span<const double> points, std::size_t k, std::uint64_t seed,
                               const KMeansOptions& options = {}) {
    if (points.empty()) {
        throw validation_error("kmeans_1d: no points");
    }
    if (k == 0) {
        throw validation_error("kmeans_1d: k must be at least 1");
    }
    for (double p : points) {
        if (!std::isfinite(p)) {
            throw validation_error("kmeans_1d: non-finite point");
        }
    }

    // Work on the sorted points so the result does not depend on input order.
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });
    std::vector<double> sorted(points.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        sorted[i] = points[order[i]];
    }
    std::size_t distinct = 1;
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        distinct += sorted[i] != sorted[i - 1] ? 1 : 0;
    }
    const std::size_t k_eff = std::min(k, distinct);

    ClusterResult best;
    bool have_best = false;
    const std::size_t restarts = std::max<std::size_t>(1, options.restarts);
    for (std::size_t run = 0; run < restarts; ++run) {
        std::mt19937_64 eng(splitmix64(seed ^ splitmix64(run)));
        auto result = detail::lloyd(sorted, detail::plus_plus_seeds(sorted, k_eff, eng),
                                    options.max_iterations);
        if (!have_best || result.inertia < best.inertia) {
            best = std::move(result);
            have_best = true;
        }
    }
    if (k_eff > 1) {
        auto result = detail::lloyd(sorted, detail::optimal_partition_means(sorted, k_eff),
                                    options.max_iterations);
        if (result.inertia < best.inertia) {
            best = std::move(result);
        }
    }
    best.requested_k = k;
    std::vector<std::size_t> assignments(points.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        assignments[order[i]] = best.assignments[i];
    }
    best.assignments = std::move(assignments);
    return best;
}

} // namespace signkit
