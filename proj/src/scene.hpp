#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geometry.hpp"

namespace commit
{
//! Pinhole camera at the origin looking down +z (x left, y down).
struct Camera
{
    double fx{60};
    double fy{60};
    double cx{43.5};
    double cy{32};
    int width{87};
    int height{64};
    //! Sub-pixel rendering factor per axis; 1 renders directly at pixel
    //! resolution.
    int supersample{1};

    friend bool operator==(Camera const&, Camera const&) = default;
};

//! Row-major grid of intensities.
struct Image
{
    int height{0};
    int width{0};
    std::vector<double> pixels;

    Image() = default;
    Image(int h, int w) : height(h), width(w), pixels(std::size_t(h) * w, 0.0) {}

    double& at(int row, int col) { return pixels[std::size_t(row) * width + col]; }
    double at(int row, int col) const { return pixels[std::size_t(row) * width + col]; }

    friend bool operator==(Image const&, Image const&) = default;
};

struct Point3
{
    double x{0};
    double y{0};
    double z{0};

    friend bool operator==(Point3 const&, Point3 const&) = default;
};

/*!
 * Paired camera image and point cloud with a single labeled foreground
 * vehicle.
 *
 * object_mask holds the indices of the vehicle points; every other point is
 * background. The image is what the camera sees; it is regenerated from the
 * points whenever the scene is transformed.
 */
struct Scene
{
    Image image;
    std::vector<Point3> points;
    std::vector<std::size_t> object_mask;
    Box3D gt;
    Camera camera;

    friend bool operator==(Scene const&, Scene const&) = default;
};

//! Point albedo used by the rasterizer.
inline constexpr double vehicle_albedo = 0.8;
inline constexpr double ground_albedo = 0.3;

struct SceneSpec
{
    // Vehicle pose and size; y is the bottom of the box (the ground plane).
    Box3D vehicle{0, 1.6, 10, 1.8, 1.5, 4.2, 0};
    //! Vehicle surface samples per square meter of box face.
    double vehicle_density{15};
    std::size_t ground_points{300};
    double ground_half_width{8};
    double ground_near{4};
    double ground_far{24};
    //! Extra background points scattered above the ground, away from the
    //! vehicle.
    std::size_t clutter_points{0};
    Camera camera{60, 60, 43.5, 32, 87, 64, 8};
    std::uint64_t seed{0};
};

void validate(SceneSpec const& spec);
void validate(Scene const& scene);

Scene generate(SceneSpec const& spec);

// Default spec with the vehicle pose and size, and the clutter count, drawn
// from `seed`: x in [-2, 2], z in [9, 14], |r| <= 0.5, sizes within about 10%
// of the defaults, 0 to 20 clutter points.
SceneSpec random_scene_spec(std::uint64_t seed);

// Z-buffered pinhole projection: each (sub)pixel keeps the nearest point,
// sub-pixels are averaged into pixels. Points at depth <= 0 are skipped.
Image rasterize(std::span<Point3 const> points, std::span<double const> intensities,
                Camera const& camera);

// Per-point albedo: vehicle points bright, everything else ground.
std::vector<double> point_intensities(Scene const& scene);

// Re-render the image from the scene's points.
Image render(Scene const& scene);

void save_scene(Scene const& scene, std::filesystem::path const& path);
Scene load_scene(std::filesystem::path const& path);

// JSON text form shared by the file format and the external detector.
std::string scene_to_json(Scene const& scene);
Scene scene_from_json(std::string_view text);

}  // namespace commit
