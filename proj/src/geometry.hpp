#pragma once

#include <array>
#include <span>
#include <vector>

namespace commit
{
//---------------------------------------------------------------------------//
/*!
 * Oriented 3D bounding box.
 *
 * (x, z) is the ground-plane center of the footprint. The vertical extent is
 * [y - h, y]; with the camera y axis pointing down this makes y the bottom
 * face of a box resting on the ground. The footprint is a w-by-l rectangle
 * rotated by r in the x-z plane: a local offset (u, v) maps to
 * (u cos r - v sin r, u sin r + v cos r), so w runs along local x and l along
 * local z.
 */
struct Box3D
{
    double x{0};
    double y{0};
    double z{0};
    double w{1};
    double h{1};
    double l{1};
    double r{0};

    static constexpr std::size_t size = 7;
    std::array<double, size> as_array() const { return {x, y, z, w, h, l, r}; }
    static Box3D from_array(std::array<double, size> const& a)
    {
        return {a[0], a[1], a[2], a[3], a[4], a[5], a[6]};
    }
    double volume() const { return w * h * l; }

    friend bool operator==(Box3D const&, Box3D const&) = default;
};

//! Per-coordinate bounds on a family of boxes.
struct BoxInterval
{
    Box3D lo;
    Box3D hi;

    static BoxInterval degenerate(Box3D const& b) { return {b, b}; }
};

struct Vec2
{
    double x{0};
    double z{0};

    friend bool operator==(Vec2 const&, Vec2 const&) = default;
};

//! Convex polygon in the x-z plane, vertices counter-clockwise.
using Polygon2D = std::vector<Vec2>;

//! Bounds on the footprint pose (center and heading) of a box family.
struct PoseInterval
{
    double x_lo, z_lo, r_lo;
    double x_hi, z_hi, r_hi;
};

//! Tolerance for convexity and containment tests, in meters.
inline constexpr double geometric_epsilon = 1e-9;

bool is_valid(Box3D const& b);
void validate(Box3D const& b);
void validate(BoxInterval const& iv);

// Footprint corners, CCW, starting at local (+w/2, +l/2).
Polygon2D box_corners_2d(Box3D const& b);

// Andrew's monotone chain; collinear points are dropped.
Polygon2D convex_hull(std::span<Vec2 const> points);

double polygon_area(Polygon2D const& poly);

// Intersection of two convex polygons by successive half-plane clipping.
Polygon2D clip_convex(Polygon2D const& subject, Polygon2D const& clip);

bool contains(Polygon2D const& poly, Vec2 p, double eps = geometric_epsilon);

double exact_iou_3d(Box3D const& a, Box3D const& b);

// Length of [y - h, y] intersected with [y_gt - h_gt, y_gt], clamped at 0.
double vertical_overlap(double y, double h, double y_gt, double h_gt);

// Smallest vertical overlap of a box of height h_hat whose bottom y lies in
// [y_lo, y_hi] with the ground-truth extent.
double y_overlap_bound(double y_lo, double y_hi, double h_hat, double y_gt,
                       double h_gt);

Polygon2D corner_envelope(PoseInterval const& pose, double w, double l);

double iou_lower_bound(BoxInterval const& interval, Box3D const& gt);

}  // namespace commit
