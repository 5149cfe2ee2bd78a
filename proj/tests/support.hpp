#pragma once

// Random instance generators and brute-force oracles shared by the unit and
// acceptance tests. Nothing here calls into the code paths it is used to
// check.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "geometry.hpp"

namespace commit::testing
{
inline double uniform(std::mt19937_64& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Box3D random_box(std::mt19937_64& rng)
{
    Box3D b;
    b.x = uniform(rng, -2, 2);
    b.z = uniform(rng, 8, 12);
    b.y = uniform(rng, 1.0, 2.0);
    b.w = uniform(rng, 0.5, 2.5);
    b.h = uniform(rng, 0.5, 2.0);
    b.l = uniform(rng, 1.0, 5.0);
    b.r = uniform(rng, -std::numbers::pi, std::numbers::pi);
    return b;
}

// Interval around a jittered copy of gt, so that most instances overlap.
inline BoxInterval random_interval(std::mt19937_64& rng, Box3D const& gt)
{
    auto center = gt.as_array();
    static constexpr double jitter[7] = {0.5, 0.3, 0.5, 0.3, 0.3, 0.5, 0.3};
    static constexpr double spread[7] = {0.4, 0.3, 0.4, 0.3, 0.3, 0.4, 0.5};
    std::array<double, 7> lo{}, hi{};
    for (int i = 0; i < 7; ++i)
    {
        double const c = center[i] + uniform(rng, -jitter[i], jitter[i]);
        // Some coordinates degenerate, some wide.
        double const width = uniform(rng, 0, 1) < 0.2 ? 0.0
                                                      : uniform(rng, 0, spread[i]);
        lo[i] = c - width / 2;
        hi[i] = c + width / 2;
    }
    for (int i = 3; i < 6; ++i)
    {
        lo[i] = std::max(lo[i], 0.2);
        hi[i] = std::max(hi[i], lo[i]);
    }
    return {Box3D::from_array(lo), Box3D::from_array(hi)};
}

// Box with every coordinate inside the interval; endpoints are hit often.
inline Box3D sample_in(std::mt19937_64& rng, BoxInterval const& iv)
{
    auto const lo = iv.lo.as_array();
    auto const hi = iv.hi.as_array();
    std::array<double, 7> v{};
    for (int i = 0; i < 7; ++i)
    {
        double const u = uniform(rng, 0, 1);
        if (u < 0.15)
            v[i] = lo[i];
        else if (u < 0.3)
            v[i] = hi[i];
        else
            v[i] = lo[i] + (hi[i] - lo[i]) * uniform(rng, 0, 1);
    }
    return Box3D::from_array(v);
}

// Whether point (px, pz) lies inside the footprint of b, by transforming into
// the box frame.
inline bool in_footprint(Box3D const& b, double px, double pz)
{
    double const dx = px - b.x;
    double const dz = pz - b.z;
    double const c = std::cos(b.r);
    double const s = std::sin(b.r);
    double const u = c * dx + s * dz;
    double const v = -s * dx + c * dz;
    return std::abs(u) <= b.w / 2 && std::abs(v) <= b.l / 2;
}

inline bool in_box(Box3D const& b, double px, double py, double pz)
{
    return py <= b.y && py >= b.y - b.h && in_footprint(b, px, pz);
}

struct McEstimate
{
    double value;
    double std_error;
};

// Monte-Carlo IoU: uniform points in the bounding region of both boxes.
inline McEstimate voxel_iou(Box3D const& a, Box3D const& b, std::size_t samples,
                            std::mt19937_64& rng)
{
    double const ra = std::hypot(a.w, a.l) / 2;
    double const rb = std::hypot(b.w, b.l) / 2;
    double const x0 = std::min(a.x - ra, b.x - rb), x1 = std::max(a.x + ra, b.x + rb);
    double const z0 = std::min(a.z - ra, b.z - rb), z1 = std::max(a.z + ra, b.z + rb);
    double const y0 = std::min(a.y - a.h, b.y - b.h), y1 = std::max(a.y, b.y);
    double const region = (x1 - x0) * (y1 - y0) * (z1 - z0);

    std::size_t in_a = 0, in_b = 0, in_both = 0;
    for (std::size_t i = 0; i < samples; ++i)
    {
        double const px = uniform(rng, x0, x1);
        double const py = uniform(rng, y0, y1);
        double const pz = uniform(rng, z0, z1);
        bool const ia = in_box(a, px, py, pz);
        bool const ib = in_box(b, px, py, pz);
        in_a += ia;
        in_b += ib;
        in_both += ia && ib;
    }
    // Intersection volume is estimated by MC; the union uses the exact box
    // volumes so the ratio's error is driven by the intersection estimate.
    double const p = double(in_both) / double(samples);
    double const inter = p * region;
    double const inter_se = std::sqrt(p * (1 - p) / double(samples)) * region;
    double const uni = a.volume() + b.volume() - inter;
    double const iou = inter / uni;
    // d(iou)/d(inter) = (va + vb) / uni^2
    double const se = inter_se * (a.volume() + b.volume()) / (uni * uni);
    return {iou, se};
}

}  // namespace commit::testing
