#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "errors.hpp"
#include "geometry.hpp"
#include "support.hpp"

using namespace commit;
using commit::testing::uniform;

namespace
{
constexpr double pi = std::numbers::pi;

bool same_vertex_set(Polygon2D const& a, Polygon2D const& b, double tol)
{
    if (a.size() != b.size())
        return false;
    for (auto const& p : a)
    {
        bool found = false;
        for (auto const& q : b)
            found = found || (std::abs(p.x - q.x) <= tol && std::abs(p.z - q.z) <= tol);
        if (!found)
            return false;
    }
    return true;
}

// Brute-force minimum of the vertical overlap over a dense grid of bottoms.
double brute_y_overlap(double y_lo, double y_hi, double h_hat, double y_gt,
                       double h_gt)
{
    double best = INFINITY;
    for (int i = 0; i <= 1000; ++i)
    {
        double const y = y_lo + (y_hi - y_lo) * i / 1000.0;
        double const top = std::min(y, y_gt);
        double const bottom = std::max(y - h_hat, y_gt - h_gt);
        best = std::min(best, std::max(top - bottom, 0.0));
    }
    return best;
}
}  // namespace

TEST_CASE("box corners")
{
    SUBCASE("axis aligned square")
    {
        Box3D b{0, 1, 0, 2, 1, 2, 0};
        CHECK(same_vertex_set(box_corners_2d(b), {{1, 1}, {-1, 1}, {-1, -1}, {1, -1}},
                              1e-15));
    }
    SUBCASE("square quarter turn")
    {
        Box3D b{0, 1, 0, 2, 1, 2, pi / 2};
        CHECK(same_vertex_set(box_corners_2d(b), {{1, 1}, {-1, 1}, {-1, -1}, {1, -1}},
                              1e-12));
    }
    SUBCASE("rotation matrix oracle")
    {
        Box3D b{1, 1, 2, 2, 1, 4, pi / 6};
        double const c = std::sqrt(3.0) / 2, s = 0.5;
        Polygon2D expected;
        for (auto [u, v] : {std::pair{1.0, 2.0}, {-1.0, 2.0}, {-1.0, -2.0}, {1.0, -2.0}})
            expected.push_back({1 + c * u - s * v, 2 + s * u + c * v});
        CHECK(same_vertex_set(box_corners_2d(b), expected, 1e-12));
        for (auto const& p : box_corners_2d(b))
            CHECK(std::hypot(p.x - 1, p.z - 2) == doctest::Approx(std::sqrt(5.0)));
    }
    SUBCASE("counter-clockwise")
    {
        std::mt19937_64 rng(3);
        for (int i = 0; i < 100; ++i)
        {
            auto const poly = box_corners_2d(testing::random_box(rng));
            double twice = 0;
            for (std::size_t k = 0; k < 4; ++k)
            {
                auto const& p = poly[k];
                auto const& q = poly[(k + 1) % 4];
                twice += p.x * q.z - q.x * p.z;
            }
            CHECK(twice > 0);
        }
    }
}

TEST_CASE("convex hull")
{
    SUBCASE("interior point dropped")
    {
        std::vector<Vec2> pts{{0, 0}, {1, 0}, {0, 1}, {1, 1}, {0.5, 0.5}};
        auto const hull = convex_hull(pts);
        CHECK(hull.size() == 4);
        CHECK(polygon_area(hull) == doctest::Approx(1.0));
    }
    SUBCASE("single point")
    {
        std::vector<Vec2> pts{{0, 0}};
        auto const hull = convex_hull(pts);
        CHECK(hull.size() == 1);
        CHECK(polygon_area(hull) == 0.0);
    }
    SUBCASE("collinear points")
    {
        std::vector<Vec2> pts{{0, 0}, {1, 1}, {2, 2}, {0.5, 0.5}};
        auto const hull = convex_hull(pts);
        CHECK(hull.size() == 2);
        CHECK(polygon_area(hull) == 0.0);
    }
    SUBCASE("collinear edge points removed")
    {
        std::vector<Vec2> pts{{0, 0}, {0.5, 0}, {1, 0}, {1, 1}, {0, 1}};
        CHECK(convex_hull(pts).size() == 4);
    }
    SUBCASE("random disk points are contained")
    {
        std::mt19937_64 rng(11);
        std::vector<Vec2> pts;
        while (pts.size() < 100)
        {
            double const x = uniform(rng, -1, 1), z = uniform(rng, -1, 1);
            if (x * x + z * z <= 1)
                pts.push_back({x, z});
        }
        auto const hull = convex_hull(pts);
        CHECK(polygon_area(hull) <= pi);
        for (auto const& p : pts)
            CHECK(contains(hull, p));
    }
    SUBCASE("non-finite input")
    {
        std::vector<Vec2> pts{{0, 0}, {NAN, 1}};
        CHECK_THROWS_AS(convex_hull(pts), InputError);
    }
}

TEST_CASE("polygon area")
{
    CHECK(polygon_area({{0, 0}, {1, 0}, {1, 1}, {0, 1}}) == doctest::Approx(1.0));
    CHECK(polygon_area({{0, 0}, {1, 0}, {0, 1}}) == doctest::Approx(0.5));
    Polygon2D hexagon;
    for (int k = 0; k < 6; ++k)
        hexagon.push_back({std::cos(k * pi / 3), std::sin(k * pi / 3)});
    CHECK(polygon_area(hexagon) == doctest::Approx(3 * std::sqrt(3.0) / 2).epsilon(1e-14));
}

TEST_CASE("convex clipping")
{
    Polygon2D const unit{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    CHECK(polygon_area(clip_convex(unit, unit)) == doctest::Approx(1.0));
    CHECK(same_vertex_set(convex_hull(clip_convex(unit, unit)), unit, 1e-12));

    Polygon2D const far{{5, 5}, {6, 5}, {6, 6}, {5, 6}};
    CHECK(polygon_area(clip_convex(unit, far)) == 0.0);

    auto const a = box_corners_2d({0, 1, 0, 1, 1, 1, 0});
    auto const b = box_corners_2d({0, 1, 0, 1, 1, 1, pi / 4});
    CHECK(polygon_area(clip_convex(a, b))
          == doctest::Approx(2 * (std::sqrt(2.0) - 1)).epsilon(1e-12));

    SUBCASE("area bounded by both operands")
    {
        std::mt19937_64 rng(5);
        for (int i = 0; i < 500; ++i)
        {
            auto const p = box_corners_2d(testing::random_box(rng));
            auto const q = box_corners_2d(testing::random_box(rng));
            double const inter = polygon_area(clip_convex(p, q));
            CHECK(inter <= std::min(polygon_area(p), polygon_area(q)) + 1e-12);
            CHECK(inter == doctest::Approx(polygon_area(clip_convex(q, p))).epsilon(1e-9));
        }
    }
}

TEST_CASE("exact 3D IoU")
{
    Box3D const cube{0, 1, 0, 1, 1, 1, 0};
    CHECK(exact_iou_3d(cube, cube) == doctest::Approx(1.0));
    Box3D shifted = cube;
    shifted.x = 0.5;
    CHECK(exact_iou_3d(cube, shifted) == doctest::Approx(1.0 / 3).epsilon(1e-14));
    shifted.x = 10;
    CHECK(exact_iou_3d(cube, shifted) == 0.0);

    SUBCASE("symmetric and bounded")
    {
        std::mt19937_64 rng(9);
        for (int i = 0; i < 500; ++i)
        {
            Box3D const a = testing::random_box(rng);
            Box3D b = a;
            b.x += uniform(rng, -1, 1);
            b.r += uniform(rng, -0.5, 0.5);
            b.y += uniform(rng, -0.5, 0.5);
            double const ab = exact_iou_3d(a, b);
            CHECK(ab >= 0);
            CHECK(ab <= 1);
            CHECK(ab == doctest::Approx(exact_iou_3d(b, a)).epsilon(1e-12));
            CHECK(exact_iou_3d(a, a) == doctest::Approx(1.0));
        }
    }
}

TEST_CASE("vertical overlap bound")
{
    CHECK(y_overlap_bound(1, 1, 1, 1, 1) == doctest::Approx(1.0));
    CHECK(y_overlap_bound(1.5, 2, 1, 1, 1) == doctest::Approx(0.0));
    CHECK(y_overlap_bound(1, 1.5, 2, 1, 1) == doctest::Approx(1.0));
    CHECK(brute_y_overlap(1, 1.5, 2, 1, 1) == doctest::Approx(1.0));

    SUBCASE("tall box whose nearer endpoint is the minimizer")
    {
        // The endpoint farther from the reference y is not always the
        // minimizer once the heights differ.
        CHECK(y_overlap_bound(0.5, 2.2, 3, 1, 1) == doctest::Approx(0.5));
        CHECK(brute_y_overlap(0.5, 2.2, 3, 1, 1) == doctest::Approx(0.5));
    }

    SUBCASE("matches brute force")
    {
        std::mt19937_64 rng(21);
        for (int i = 0; i < 2000; ++i)
        {
            double const y_gt = uniform(rng, 0, 3);
            double const h_gt = uniform(rng, 0.2, 2);
            double const y_lo = y_gt + uniform(rng, -2, 2);
            double const y_hi = y_lo + uniform(rng, 0, 1.5);
            double const h_hat = uniform(rng, 0.2, 3);
            CHECK(y_overlap_bound(y_lo, y_hi, h_hat, y_gt, h_gt)
                  == doctest::Approx(brute_y_overlap(y_lo, y_hi, h_hat, y_gt, h_gt))
                         .epsilon(1e-12));
        }
    }
}

TEST_CASE("corner envelope")
{
    SUBCASE("single pose is the footprint")
    {
        auto const env = corner_envelope({0, 0, 0, 0, 0, 0}, 2, 2);
        CHECK(same_vertex_set(env, {{1, 1}, {-1, 1}, {-1, -1}, {1, -1}}, 0));
    }
    SUBCASE("translation along x is a Minkowski sum")
    {
        auto const env = corner_envelope({0, 0, 0, 1, 0, 0}, 2, 2);
        CHECK(same_vertex_set(env, {{2, 1}, {-1, 1}, {-1, -1}, {2, -1}}, 1e-15));
        CHECK(polygon_area(env) == doctest::Approx(6.0));
    }
    SUBCASE("almost full turn covers the circumscribed disk")
    {
        auto const env = corner_envelope({0, 0, 0, 0, 0, 2 * pi - 1e-6}, 2, 2);
        for (int k = 0; k < 1000; ++k)
        {
            double const t = 2 * pi * k / 1000;
            CHECK(contains(env, {std::sqrt(2.0) * std::cos(t), std::sqrt(2.0) * std::sin(t)}));
        }
    }
    SUBCASE("contains every sampled footprint")
    {
        std::mt19937_64 rng(17);
        for (int i = 0; i < 300; ++i)
        {
            double const w = uniform(rng, 0.5, 3), l = uniform(rng, 0.5, 5);
            double const x0 = uniform(rng, -3, 3), z0 = uniform(rng, 5, 15);
            double const r0 = uniform(rng, -4, 4);
            PoseInterval const pose{x0, z0, r0, x0 + uniform(rng, 0, 1),
                                    z0 + uniform(rng, 0, 1), r0 + uniform(rng, 0, 3)};
            auto const env = corner_envelope(pose, w, l);
            for (int j = 0; j < 50; ++j)
            {
                Box3D b{uniform(rng, pose.x_lo, pose.x_hi), 1,
                        uniform(rng, pose.z_lo, pose.z_hi), w, 1, l,
                        uniform(rng, pose.r_lo, pose.r_hi)};
                if (j == 0)
                    b.r = pose.r_lo;
                if (j == 1)
                    b.r = pose.r_hi;
                for (auto const& c : box_corners_2d(b))
                    CHECK(contains(env, c));
            }
        }
    }
    SUBCASE("invalid intervals")
    {
        CHECK_THROWS_AS(corner_envelope({1, 0, 0, 0, 0, 0}, 1, 1), InputError);
        CHECK_THROWS_AS(corner_envelope({0, 0, 0, 0, 0, 2 * pi}, 1, 1), InputError);
        CHECK_THROWS_AS(corner_envelope({0, 0, 0, 0, 0, 0}, 0, 1), InputError);
    }
}

TEST_CASE("IoU lower bound")
{
    Box3D const cube{0, 1, 0, 1, 1, 1, 0};
    CHECK(iou_lower_bound(BoxInterval::degenerate(cube), cube) == doctest::Approx(1.0));

    Box3D shifted = cube;
    shifted.x = 0.5;
    CHECK(iou_lower_bound(BoxInterval::degenerate(shifted), cube)
          == doctest::Approx(1.0 / 3).epsilon(1e-12));

    SUBCASE("no vertical overlap possible")
    {
        BoxInterval iv = BoxInterval::degenerate(cube);
        iv.lo.y = cube.y + iv.hi.h + 1;
        iv.hi.y = cube.y + iv.hi.h + 2;
        CHECK(iou_lower_bound(iv, cube) == 0.0);
    }
    SUBCASE("invalid interval")
    {
        BoxInterval iv = BoxInterval::degenerate(cube);
        iv.lo.w = 2;
        CHECK_THROWS_AS(iou_lower_bound(iv, cube), InputError);
        iv = BoxInterval::degenerate(cube);
        iv.lo.h = 0;
        CHECK_THROWS_AS(iou_lower_bound(iv, cube), InputError);
    }
    SUBCASE("sound on sampled members")
    {
        std::mt19937_64 rng(101);
        for (int i = 0; i < 500; ++i)
        {
            Box3D const gt = testing::random_box(rng);
            BoxInterval const iv = testing::random_interval(rng, gt);
            double const bound = iou_lower_bound(iv, gt);
            CHECK(bound >= 0);
            for (int j = 0; j < 100; ++j)
                CHECK(bound <= exact_iou_3d(testing::sample_in(rng, iv), gt) + 1e-9);
        }
    }
    SUBCASE("degenerate intervals are tight")
    {
        std::mt19937_64 rng(7);
        for (int i = 0; i < 500; ++i)
        {
            Box3D gt = testing::random_box(rng);
            gt.r = 0;
            Box3D b = gt;
            b.x += uniform(rng, -1, 1);
            b.z += uniform(rng, -2, 2);
            b.y += uniform(rng, -0.6, 0.6);
            b.w *= uniform(rng, 0.7, 1.3);
            b.l *= uniform(rng, 0.7, 1.3);
            b.h *= uniform(rng, 0.7, 1.3);
            b.r = 0;
            CHECK(std::abs(iou_lower_bound(BoxInterval::degenerate(b), gt)
                           - exact_iou_3d(b, gt))
                  <= 1e-9);
        }
    }
    SUBCASE("widening never increases the bound")
    {
        // Lower size bounds are excluded: the envelope slack grows with the
        // box size, so shrinking w_lo or l_lo can raise the bound. That
        // direction is covered for soundness below.
        std::mt19937_64 rng(33);
        for (int i = 0; i < 500; ++i)
        {
            Box3D const gt = testing::random_box(rng);
            BoxInterval const iv = testing::random_interval(rng, gt);
            double const base = iou_lower_bound(iv, gt);
            for (int c = 0; c < 7; ++c)
            {
                for (int side = 0; side < 2; ++side)
                {
                    if (side == 0 && (c == 3 || c == 5))
                        continue;
                    auto lo = iv.lo.as_array();
                    auto hi = iv.hi.as_array();
                    double const grow = uniform(rng, 0, 0.3);
                    if (side == 0)
                        lo[c] = std::max(lo[c] - grow, c == 4 ? 0.1 : -1e9);
                    else
                        hi[c] += grow;
                    BoxInterval const wider{Box3D::from_array(lo), Box3D::from_array(hi)};
                    CHECK(iou_lower_bound(wider, gt) <= base + 1e-12);
                }
            }
        }
    }
    SUBCASE("shrinking lower sizes stays sound")
    {
        std::mt19937_64 rng(34);
        for (int i = 0; i < 300; ++i)
        {
            Box3D const gt = testing::random_box(rng);
            BoxInterval iv = testing::random_interval(rng, gt);
            iv.lo.w = std::max(0.1, iv.lo.w * uniform(rng, 0.3, 1));
            iv.lo.l = std::max(0.1, iv.lo.l * uniform(rng, 0.3, 1));
            double const bound = iou_lower_bound(iv, gt);
            for (int j = 0; j < 100; ++j)
                CHECK(bound <= exact_iou_3d(testing::sample_in(rng, iv), gt) + 1e-9);
        }
    }
}
