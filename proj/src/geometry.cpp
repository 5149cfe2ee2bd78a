#include "geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "errors.hpp"

namespace commit
{
namespace
{
constexpr double two_pi = 2 * std::numbers::pi;

double cross(Vec2 o, Vec2 a, Vec2 b)
{
    return (a.x - o.x) * (b.z - o.z) - (a.z - o.z) * (b.x - o.x);
}

bool finite(Box3D const& b)
{
    for (double v : b.as_array())
    {
        if (!std::isfinite(v))
            return false;
    }
    return true;
}

struct Range
{
    double lo, hi;
};

// Range of radius * cos(t) over t in [a, b], b - a < 2 pi, given the values
// at the endpoints.
Range cos_range(double a, double b, double at_a, double at_b, double radius)
{
    Range result{std::min(at_a, at_b), std::max(at_a, at_b)};
    // Interior maxima at 2 pi k, minima at pi + 2 pi k.
    if (two_pi * std::ceil(a / two_pi) <= b)
        result.hi = radius;
    if (std::numbers::pi + two_pi * std::ceil((a - std::numbers::pi) / two_pi)
        <= b)
        result.lo = -radius;
    return result;
}

// Corner offset of local point (u, v) rotated by theta.
Vec2 rotate(double u, double v, double theta)
{
    double const c = std::cos(theta);
    double const s = std::sin(theta);
    return {u * c - v * s, u * s + v * c};
}
}  // namespace

bool is_valid(Box3D const& b)
{
    return finite(b) && b.w > 0 && b.h > 0 && b.l > 0;
}

void validate(Box3D const& b)
{
    if (!finite(b))
        throw InputError("box: non-finite coordinate");
    if (!(b.w > 0 && b.h > 0 && b.l > 0))
        throw InputError("box: sizes w, h, l must be positive");
}

void validate(BoxInterval const& iv)
{
    if (!finite(iv.lo) || !finite(iv.hi))
        throw InputError("box interval: non-finite bound");
    auto const lo = iv.lo.as_array();
    auto const hi = iv.hi.as_array();
    static constexpr char const* names[] = {"x", "y", "z", "w", "h", "l", "r"};
    for (std::size_t i = 0; i < Box3D::size; ++i)
    {
        if (!(lo[i] <= hi[i]))
            throw InputError(std::string("box interval: lower bound exceeds "
                                         "upper bound for ")
                             + names[i]);
    }
    if (!(iv.lo.w > 0 && iv.lo.h > 0 && iv.lo.l > 0))
        throw InputError("box interval: lower size bounds must be positive");
    if (!(iv.hi.r - iv.lo.r < two_pi))
        throw InputError("box interval: rotation interval spans 2 pi");
}

Polygon2D box_corners_2d(Box3D const& b)
{
    double const hw = b.w / 2;
    double const hl = b.l / 2;
    static constexpr int signs[4][2] = {{1, 1}, {-1, 1}, {-1, -1}, {1, -1}};
    Polygon2D out;
    out.reserve(4);
    for (auto const& s : signs)
    {
        Vec2 const d = rotate(s[0] * hw, s[1] * hl, b.r);
        out.push_back({b.x + d.x, b.z + d.z});
    }
    return out;
}

Polygon2D convex_hull(std::span<Vec2 const> points)
{
    if (points.empty())
        throw InputError("convex_hull: no points");
    for (auto const& p : points)
    {
        if (!std::isfinite(p.x) || !std::isfinite(p.z))
            throw InputError("convex_hull: non-finite coordinate");
    }

    std::vector<Vec2> pts(points.begin(), points.end());
    std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) {
        return a.x < b.x || (a.x == b.x && a.z < b.z);
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3)
        return pts;

    Polygon2D hull(2 * pts.size());
    std::size_t k = 0;
    for (auto const& p : pts)
    {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0)
            --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;)
    {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0)
            --k;
        hull[k++] = pts[i];
    }
    // Last point repeats the first.
    hull.resize(k - 1);
    return hull;
}

double polygon_area(Polygon2D const& poly)
{
    if (poly.size() < 3)
        return 0;
    double twice = 0;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++)
        twice += poly[j].x * poly[i].z - poly[i].x * poly[j].z;
    return std::max(twice / 2, 0.0);
}

Polygon2D clip_convex(Polygon2D const& subject, Polygon2D const& clip)
{
    if (subject.size() < 3 || clip.size() < 3)
        return {};

    Polygon2D out = subject;
    Polygon2D in;
    for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e)
    {
        Vec2 const a = clip[e];
        Vec2 const b = clip[(e + 1) % clip.size()];
        in.swap(out);
        out.clear();
        for (std::size_t i = 0; i < in.size(); ++i)
        {
            Vec2 const p = in[i];
            Vec2 const q = in[(i + 1) % in.size()];
            double const dp = cross(a, b, p);
            double const dq = cross(a, b, q);
            if (dp >= 0)
                out.push_back(p);
            if ((dp >= 0) != (dq >= 0))
            {
                double const t = dp / (dp - dq);
                out.push_back({p.x + t * (q.x - p.x), p.z + t * (q.z - p.z)});
            }
        }
    }
    if (out.size() < 3)
        return {};
    return out;
}

bool contains(Polygon2D const& poly, Vec2 p, double eps)
{
    if (poly.empty())
        return false;
    if (poly.size() == 1)
        return std::hypot(p.x - poly[0].x, p.z - poly[0].z) <= eps;
    if (poly.size() == 2)
    {
        Vec2 const a = poly[0];
        Vec2 const b = poly[1];
        double const len2 = (b.x - a.x) * (b.x - a.x) + (b.z - a.z) * (b.z - a.z);
        double t = ((p.x - a.x) * (b.x - a.x) + (p.z - a.z) * (b.z - a.z)) / len2;
        t = std::clamp(t, 0.0, 1.0);
        return std::hypot(p.x - (a.x + t * (b.x - a.x)),
                          p.z - (a.z + t * (b.z - a.z)))
               <= eps;
    }
    for (std::size_t i = 0; i < poly.size(); ++i)
    {
        Vec2 const a = poly[i];
        Vec2 const b = poly[(i + 1) % poly.size()];
        double const len = std::hypot(b.x - a.x, b.z - a.z);
        if (cross(a, b, p) < -eps * len)
            return false;
    }
    return true;
}

double vertical_overlap(double y, double h, double y_gt, double h_gt)
{
    return std::max(std::min(y, y_gt) - std::max(y - h, y_gt - h_gt), 0.0);
}

double y_overlap_bound(double y_lo, double y_hi, double h_hat, double y_gt,
                       double h_gt)
{
    // The overlap is concave in the box position, so its minimum over the
    // interval sits at an endpoint.
    return std::min(vertical_overlap(y_lo, h_hat, y_gt, h_gt),
                    vertical_overlap(y_hi, h_hat, y_gt, h_gt));
}

double exact_iou_3d(Box3D const& a, Box3D const& b)
{
    double const dy = vertical_overlap(a.y, a.h, b.y, b.h);
    double inter = 0;
    if (dy > 0)
        inter = dy * polygon_area(clip_convex(box_corners_2d(a), box_corners_2d(b)));
    double const uni = a.volume() + b.volume() - inter;
    if (uni <= 0)
        return 0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

Polygon2D corner_envelope(PoseInterval const& pose, double w, double l)
{
    if (!(pose.x_lo <= pose.x_hi && pose.z_lo <= pose.z_hi
          && pose.r_lo <= pose.r_hi))
        throw InputError("corner_envelope: lower bound exceeds upper bound");
    if (!(pose.r_hi - pose.r_lo < two_pi))
        throw InputError("corner_envelope: rotation interval spans 2 pi");
    if (!(w > 0 && l > 0))
        throw InputError("corner_envelope: sizes must be positive");

    double const radius = std::hypot(w, l) / 2;
    static constexpr int signs[4][2] = {{1, 1}, {-1, 1}, {-1, -1}, {1, -1}};
    std::vector<Vec2> candidates;
    candidates.reserve(16);
    for (auto const& s : signs)
    {
        double const u = s[0] * w / 2;
        double const v = s[1] * l / 2;
        double const phase = std::atan2(v, u);
        Vec2 const at_lo = rotate(u, v, pose.r_lo);
        Vec2 const at_hi = rotate(u, v, pose.r_hi);

        double const a = pose.r_lo + phase;
        double const b = pose.r_hi + phase;
        // x offset = radius cos(theta + phase), z offset = radius sin(...).
        // Endpoint offsets come from the rotation matrix so a single-pose
        // envelope reproduces the footprint.
        Range const dx = cos_range(a, b, at_lo.x, at_hi.x, radius);
        Range const dz = cos_range(a - std::numbers::pi / 2,
                                   b - std::numbers::pi / 2, at_lo.z, at_hi.z,
                                   radius);
        double const xs[2] = {pose.x_lo + dx.lo, pose.x_hi + dx.hi};
        double const zs[2] = {pose.z_lo + dz.lo, pose.z_hi + dz.hi};
        for (double x : xs)
        {
            for (double z : zs)
                candidates.push_back({x, z});
        }
    }
    return convex_hull(candidates);
}

double iou_lower_bound(BoxInterval const& interval, Box3D const& gt)
{
    validate(interval);
    validate(gt);

    Box3D const& lo = interval.lo;
    Box3D const& hi = interval.hi;
    PoseInterval const pose{lo.x, lo.z, lo.r, hi.x, hi.z, hi.r};
    Polygon2D const gt_footprint = box_corners_2d(gt);

    // Lower bound on the footprint overlap for a family with fixed (w, l):
    // w l - Vol(C \ S_gt), C the corner envelope.
    auto footprint_overlap = [&](double w, double l) {
        Polygon2D const env = corner_envelope(pose, w, l);
        double const outside
            = polygon_area(env) - polygon_area(clip_convex(env, gt_footprint));
        return w * l - outside;
    };

    double intersection = 0;
    double const h1 = y_overlap_bound(lo.y, hi.y, lo.h, gt.y, gt.h);
    if (h1 > 0)
    {
        double const overlap = footprint_overlap(lo.w, lo.l);
        if (overlap > 0)
            intersection = h1 * overlap;
    }
    if (intersection <= 0)
        return 0;

    double uni = gt.volume() + hi.w * hi.h * hi.l;
    double const h2 = y_overlap_bound(lo.y, hi.y, hi.h, gt.y, gt.h);
    if (h2 > 0)
    {
        double const overlap = footprint_overlap(hi.w, hi.l);
        if (overlap > 0)
            uni -= h2 * overlap;
    }
    return std::clamp(intersection / uni, 0.0, 1.0);
}

}  // namespace commit
