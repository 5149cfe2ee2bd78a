#include "smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/distributions/binomial.hpp>
#include <boost/random/normal_distribution.hpp>

#include "errors.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace commit
{
namespace
{
// Acklam's rational approximation, relative error about 1e-9.
double quantile_initial(double p)
{
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    if (p < p_low)
    {
        double const q = std::sqrt(-2 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
               / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    if (p > 1 - p_low)
    {
        double const q = std::sqrt(-2 * std::log1p(-p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
               / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    double const q = p - 0.5;
    double const r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
           / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

double binomial_at_least(boost::math::binomial_distribution<double> const& dist,
                         std::size_t k)
{
    if (k == 0)
        return 1;
    return cdf(complement(dist, double(k - 1)));
}
}  // namespace

void validate(SmoothingConfig const& cfg)
{
    if (!(cfg.sigma_x > 0 && std::isfinite(cfg.sigma_x)))
        throw InputError("sigma_x: must be positive");
    if (!(cfg.sigma_p > 0 && std::isfinite(cfg.sigma_p)))
        throw InputError("sigma_p: must be positive");
    if (cfg.n < 2)
        throw InputError("samples: at least 2 required");
    if (!(cfg.alpha > 0 && cfg.alpha < 1))
        throw InputError("alpha: must be in (0, 1)");
}

double std_normal_cdf(double t)
{
    return 0.5 * std::erfc(-t / std::numbers::sqrt2);
}

double std_normal_quantile(double p)
{
    if (!(p > 0 && p < 1))
        throw DomainError("std_normal_quantile: p must be in (0, 1)");
    double x = quantile_initial(p);
    // Halley steps on Phi(x) - p.
    for (int i = 0; i < 2; ++i)
    {
        double const e = std_normal_cdf(x) - p;
        double const u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
        x -= u / (1 + x * u / 2);
    }
    return x;
}

PercentilePair shifted_percentiles(double q, double mx, double mp, double sigma_x,
                                   double sigma_p)
{
    if (!(q > 0 && q < 1))
        throw DomainError("shifted_percentiles: q must be in (0, 1)");
    if (!(mx >= 0 && mp >= 0 && std::isfinite(mx) && std::isfinite(mp)))
        throw InputError("shifted_percentiles: interpolation errors must be >= 0");
    if (!(sigma_x > 0 && sigma_p > 0))
        throw InputError("shifted_percentiles: sigmas must be positive");

    double const eps = std::hypot(mx / sigma_x, mp / sigma_p);
    if (eps == 0)
        return {q, q, q};
    double const center = std_normal_quantile(q);
    return {q, std_normal_cdf(center - eps), std_normal_cdf(center + eps)};
}

OrderIndices order_statistic_indices(std::size_t n, double p_lo, double p_hi,
                                     double alpha)
{
    if (n < 1)
        throw InputError("order_statistic_indices: n must be >= 1");
    if (!(p_lo > 0 && p_lo <= p_hi && p_hi < 1))
        throw InputError("order_statistic_indices: need 0 < p_lo <= p_hi < 1");
    if (!(alpha > 0 && alpha < 1))
        throw InputError("order_statistic_indices: alpha must be in (0, 1)");

    double const target = 1 - alpha;
    OrderIndices out;

    // P[Bin >= k] falls as k grows: find the last k that still qualifies.
    boost::math::binomial_distribution<double> const lo_dist(double(n), p_lo);
    if (binomial_at_least(lo_dist, 1) >= target)
    {
        std::size_t good = 1, bad = n + 1;
        while (bad - good > 1)
        {
            std::size_t const mid = good + (bad - good) / 2;
            (binomial_at_least(lo_dist, mid) >= target ? good : bad) = mid;
        }
        out.k_lo = good;
    }

    // P[Bin <= k - 1] rises with k: find the first k that qualifies.
    boost::math::binomial_distribution<double> const hi_dist(double(n), p_hi);
    auto below = [&](std::size_t k) { return cdf(hi_dist, double(k - 1)); };
    if (below(n) >= target)
    {
        std::size_t bad = 0, good = n;
        while (good - bad > 1)
        {
            std::size_t const mid = bad + (good - bad) / 2;
            (below(mid) >= target ? good : bad) = mid;
        }
        out.k_hi = good;
    }
    return out;
}

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index)
{
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

void add_noise(Scene const& clean, Scene& noisy, double sigma_x, double sigma_p,
               std::uint64_t seed)
{
    Xoshiro256 rng(seed);
    boost::random::normal_distribution<double> normal;

    auto const& src_px = clean.image.pixels;
    auto& dst_px = noisy.image.pixels;
    dst_px.resize(src_px.size());
    noisy.image.height = clean.image.height;
    noisy.image.width = clean.image.width;
    for (std::size_t i = 0; i < src_px.size(); ++i)
        dst_px[i] = src_px[i] + sigma_x * normal(rng);

    noisy.points.resize(clean.points.size());
    for (std::size_t i = 0; i < clean.points.size(); ++i)
    {
        auto const& p = clean.points[i];
        auto& q = noisy.points[i];
        q.x = p.x + sigma_p * normal(rng);
        q.y = p.y + sigma_p * normal(rng);
        q.z = p.z + sigma_p * normal(rng);
    }
}

void for_each_noisy_sample(Scene const& scene, SmoothingConfig const& cfg,
                           std::uint64_t stream, std::size_t threads,
                           NoisyVisitor const& visit)
{
    validate(cfg);
    std::size_t const workers = worker_count(threads, cfg.n);
    std::vector<Scene> scratch(workers, scene);
    parallel_for(cfg.n, workers, [&](std::size_t worker, std::size_t i) {
        Scene& noisy = scratch[worker];
        add_noise(scene, noisy, cfg.sigma_x, cfg.sigma_p, sample_seed(cfg.seed, stream, i));
        try
        {
            visit(noisy, i);
        }
        catch (...)
        {
            rethrow_with_context("sample " + std::to_string(i));
        }
    });
}

std::vector<double> sample_statistics(Statistic const& statistic, Scene const& scene,
                                      SmoothingConfig const& cfg, std::uint64_t stream,
                                      std::size_t threads)
{
    std::vector<double> values(cfg.n);
    for_each_noisy_sample(scene, cfg, stream, threads,
                          [&](Scene const& noisy, std::size_t i) {
                              values[i] = statistic(noisy);
                          });
    std::sort(values.begin(), values.end());
    return values;
}

double median_estimate(std::span<double const> sorted)
{
    if (sorted.empty())
        throw InputError("median_estimate: no samples");
    return sorted[sorted.size() / 2];
}

}  // namespace commit
