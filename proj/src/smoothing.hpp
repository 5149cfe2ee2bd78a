#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "scene.hpp"

namespace commit
{
struct SmoothingConfig
{
    //! Image noise standard deviation, intensity units.
    double sigma_x{0.25};
    //! Point noise standard deviation, meters.
    double sigma_p{0.25};
    std::size_t n{1000};
    //! Failure probability budget for one certification run.
    double alpha{0.05};
    std::uint64_t seed{0};
};

void validate(SmoothingConfig const& cfg);

double std_normal_cdf(double t);

//! Inverse of std_normal_cdf; throws DomainError unless 0 < p < 1.
double std_normal_quantile(double p);

struct PercentilePair
{
    double q;
    double q_lo;
    double q_hi;
};

/*!
 * Percentiles reachable by the smoothed statistic after an input
 * displacement of at most mx (image) and mp (points):
 * Phi(Phi^-1(q) -/+ eps) with eps = sqrt(mx^2/sigma_x^2 + mp^2/sigma_p^2).
 */
PercentilePair shifted_percentiles(double q, double mx, double mp, double sigma_x,
                                   double sigma_p);

//! 1-based order statistic ranks; nullopt when no rank carries the guarantee.
struct OrderIndices
{
    std::optional<std::size_t> k_lo;
    std::optional<std::size_t> k_hi;
};

/*!
 * Ranks for one-sided percentile bounds from n i.i.d. samples.
 *
 * k_lo is the largest k with P[Bin(n, p_lo) >= k] >= 1 - alpha, so the k_lo-th
 * smallest sample lies at or below the p_lo-quantile with probability
 * >= 1 - alpha. k_hi is the smallest k with P[Bin(n, p_hi) <= k - 1] >=
 * 1 - alpha, so the k_hi-th smallest sample lies at or above the
 * p_hi-quantile with the same probability.
 */
OrderIndices order_statistic_indices(std::size_t n, double p_lo, double p_hi,
                                     double alpha);

//! Seed for one noise draw, a pure function of its coordinates.
std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/*!
 * Overwrites noisy.image and noisy.points with clean plus Gaussian noise.
 * Draw order: pixels row-major, then point coordinates x, y, z per point.
 * noisy must already have the clean scene's shape.
 */
void add_noise(Scene const& clean, Scene& noisy, double sigma_x, double sigma_p,
               std::uint64_t seed);

using NoisyVisitor = std::function<void(Scene const& noisy, std::size_t index)>;

/*!
 * Calls visit once per noise sample 0..cfg.n-1 on up to `threads` workers
 * (0 = all cores). Sample i always sees the noise seeded by
 * sample_seed(cfg.seed, stream, i), so results do not depend on the worker
 * count. Exceptions from visit are rethrown with the sample index prepended.
 */
void for_each_noisy_sample(Scene const& scene, SmoothingConfig const& cfg,
                           std::uint64_t stream, std::size_t threads,
                           NoisyVisitor const& visit);

using Statistic = std::function<double(Scene const&)>;

//! Sorted values of statistic over cfg.n noisy copies of scene.
std::vector<double> sample_statistics(Statistic const& statistic, Scene const& scene,
                                      SmoothingConfig const& cfg,
                                      std::uint64_t stream = 0,
                                      std::size_t threads = 1);

//! Entry floor(n/2) of a sorted sample, counting from 0.
double median_estimate(std::span<double const> sorted);

}  // namespace commit
