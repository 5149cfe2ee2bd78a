#include "scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "errors.hpp"
#include "json.hpp"

namespace commit
{
namespace
{
using nlohmann::json;

void validate(Camera const& cam)
{
    if (!(std::isfinite(cam.fx) && std::isfinite(cam.fy) && cam.fx > 0 && cam.fy > 0))
        throw InputError("camera: focal lengths must be positive");
    if (!(std::isfinite(cam.cx) && std::isfinite(cam.cy)))
        throw InputError("camera: principal point must be finite");
    if (cam.width < 8 || cam.height < 8)
        throw InputError("camera: image must be at least 8x8");
    if (cam.supersample < 1 || cam.supersample > 64)
        throw InputError("camera: supersample must be in [1, 64]");
}

struct FaceSampler
{
    Box3D const& box;
    double cos_r = std::cos(box.r);
    double sin_r = std::sin(box.r);

    // Local (u along w, v up from the bottom, t along l) to camera frame.
    Point3 to_world(double u, double v, double t) const
    {
        return {box.x + u * cos_r - t * sin_r, box.y - v,
                box.z + u * sin_r + t * cos_r};
    }
};

double number(json const& j, std::string const& field)
{
    if (!j.is_number())
        throw ParseError(field + ": expected a number");
    double const v = j.get<double>();
    if (!std::isfinite(v))
        throw ParseError(field + ": not a finite number");
    return v;
}

json const& member(json const& j, char const* key, std::string const& where)
{
    if (!j.is_object())
        throw ParseError(where + ": expected an object");
    auto it = j.find(key);
    if (it == j.end())
        throw ParseError((where.empty() ? std::string() : where + ".") + key
                         + ": missing field");
    return *it;
}

int integer(json const& j, std::string const& field)
{
    if (!j.is_number_integer())
        throw ParseError(field + ": expected an integer");
    return j.get<int>();
}
}  // namespace

void validate(SceneSpec const& spec)
{
    validate(spec.vehicle);
    validate(spec.camera);
    if (!(spec.vehicle_density > 0 && std::isfinite(spec.vehicle_density)))
        throw InputError("scene spec: vehicle density must be positive");
    if (spec.ground_points > 0
        && !(spec.ground_half_width > 0 && spec.ground_near > 0
             && spec.ground_far > spec.ground_near))
        throw InputError("scene spec: degenerate ground extent");
    if (!(spec.vehicle.z - std::hypot(spec.vehicle.w, spec.vehicle.l) / 2 > 0))
        throw InputError("scene spec: vehicle must be in front of the camera");
}

void validate(Scene const& scene)
{
    validate(scene.camera);
    validate(scene.gt);
    if (scene.points.empty())
        throw InputError("scene: point cloud is empty");
    if (scene.image.height != scene.camera.height || scene.image.width != scene.camera.width
        || scene.image.pixels.size()
               != std::size_t(scene.image.height) * std::size_t(scene.image.width))
        throw InputError("scene: image size does not match camera");
    for (std::size_t i = 0; i < scene.points.size(); ++i)
    {
        auto const& p = scene.points[i];
        if (!(std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z)))
            throw InputError("scene: points[" + std::to_string(i) + "] is not finite");
    }
    for (std::size_t idx : scene.object_mask)
    {
        if (idx >= scene.points.size())
            throw InputError("scene: object_mask index out of range");
    }
}

SceneSpec random_scene_spec(std::uint64_t seed)
{
    std::mt19937_64 rng(seed ^ 0x5ce7e5eedULL);
    auto uniform = [&rng](double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    SceneSpec spec;
    spec.seed = seed;
    spec.vehicle.x = uniform(-2, 2);
    spec.vehicle.z = uniform(9, 14);
    spec.vehicle.w = uniform(1.6, 2.0);
    spec.vehicle.h = uniform(1.35, 1.65);
    spec.vehicle.l = uniform(3.8, 4.6);
    spec.vehicle.r = uniform(-0.5, 0.5);
    spec.clutter_points = std::size_t(std::uniform_int_distribution<int>(0, 20)(rng));
    return spec;
}

Scene generate(SceneSpec const& spec)
{
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    auto uniform = [&rng](double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    };

    Scene scene;
    scene.gt = spec.vehicle;
    scene.camera = spec.camera;

    Box3D const& b = spec.vehicle;
    FaceSampler const face{b};
    auto face_count = [&](double area) {
        return static_cast<std::size_t>(std::lround(spec.vehicle_density * area));
    };
    double const hw = b.w / 2, hl = b.l / 2;
    // Top and bottom.
    for (double v : {b.h, 0.0})
    {
        for (std::size_t i = 0, n = face_count(b.w * b.l); i < n; ++i)
            scene.points.push_back(face.to_world(uniform(-hw, hw), v, uniform(-hl, hl)));
    }
    // Front and back.
    for (double t : {hl, -hl})
    {
        for (std::size_t i = 0, n = face_count(b.w * b.h); i < n; ++i)
            scene.points.push_back(face.to_world(uniform(-hw, hw), uniform(0, b.h), t));
    }
    // Sides.
    for (double u : {hw, -hw})
    {
        for (std::size_t i = 0, n = face_count(b.l * b.h); i < n; ++i)
            scene.points.push_back(face.to_world(u, uniform(0, b.h), uniform(-hl, hl)));
    }
    scene.object_mask.resize(scene.points.size());
    for (std::size_t i = 0; i < scene.object_mask.size(); ++i)
        scene.object_mask[i] = i;

    Polygon2D const footprint = box_corners_2d(b);
    double const ground_y = b.y;
    for (std::size_t placed = 0; placed < spec.ground_points;)
    {
        Point3 const p{uniform(-spec.ground_half_width, spec.ground_half_width), ground_y,
                       uniform(spec.ground_near, spec.ground_far)};
        if (contains(footprint, {p.x, p.z}, 0))
            continue;
        scene.points.push_back(p);
        ++placed;
    }

    double const keep_out = std::hypot(b.w, b.l) / 2 + 2;
    for (std::size_t placed = 0; placed < spec.clutter_points;)
    {
        Point3 const p{uniform(-spec.ground_half_width, spec.ground_half_width),
                       ground_y - uniform(0, 2.5),
                       uniform(spec.ground_near, spec.ground_far)};
        if (std::hypot(p.x - b.x, p.z - b.z) < keep_out)
            continue;
        scene.points.push_back(p);
        ++placed;
    }

    scene.image = render(scene);
    return scene;
}

Image rasterize(std::span<Point3 const> points, std::span<double const> intensities,
                Camera const& camera)
{
    if (intensities.size() != points.size())
        throw InputError("rasterize: one intensity per point required");
    validate(camera);

    int const s = camera.supersample;
    int const sub_w = camera.width * s;
    int const sub_h = camera.height * s;
    std::vector<double> depth(std::size_t(sub_w) * sub_h,
                              std::numeric_limits<double>::infinity());
    std::vector<double> value(depth.size(), 0.0);

    for (std::size_t i = 0; i < points.size(); ++i)
    {
        Point3 const& p = points[i];
        if (!(p.z > 0))
            continue;
        // x points left in the camera frame, so it maps to decreasing columns.
        double const col = (camera.cx - camera.fx * p.x / p.z) * s;
        double const row = (camera.cy + camera.fy * p.y / p.z) * s;
        if (!(col >= 0 && row >= 0 && col < sub_w && row < sub_h))
            continue;
        std::size_t const k = std::size_t(row) * sub_w + std::size_t(col);
        // Strict comparison keeps the lower point index on depth ties.
        if (p.z < depth[k])
        {
            depth[k] = p.z;
            value[k] = intensities[i];
        }
    }

    Image image(camera.height, camera.width);
    if (s == 1)
    {
        image.pixels = std::move(value);
        return image;
    }
    double const norm = 1.0 / (double(s) * s);
    for (int r = 0; r < sub_h; ++r)
    {
        for (int c = 0; c < sub_w; ++c)
            image.at(r / s, c / s) += value[std::size_t(r) * sub_w + c];
    }
    for (double& px : image.pixels)
        px *= norm;
    return image;
}

std::vector<double> point_intensities(Scene const& scene)
{
    std::vector<double> out(scene.points.size(), ground_albedo);
    for (std::size_t idx : scene.object_mask)
        out[idx] = vehicle_albedo;
    return out;
}

Image render(Scene const& scene)
{
    auto const intensities = point_intensities(scene);
    return rasterize(scene.points, intensities, scene.camera);
}

std::string scene_to_json(Scene const& scene)
{
    json j;
    json rows = json::array();
    for (int r = 0; r < scene.image.height; ++r)
    {
        json row = json::array();
        for (int c = 0; c < scene.image.width; ++c)
            row.push_back(scene.image.at(r, c));
        rows.push_back(std::move(row));
    }
    j["image"] = std::move(rows);
    json pts = json::array();
    for (auto const& p : scene.points)
        pts.push_back({p.x, p.y, p.z});
    j["points"] = std::move(pts);
    j["object_mask"] = scene.object_mask;
    auto const& g = scene.gt;
    j["gt"] = {{"x", g.x}, {"y", g.y}, {"z", g.z}, {"w", g.w},
               {"h", g.h}, {"l", g.l}, {"r", g.r}};
    auto const& c = scene.camera;
    j["camera"] = {{"fx", c.fx},         {"fy", c.fy},
                   {"cx", c.cx},         {"cy", c.cy},
                   {"width", c.width},   {"height", c.height},
                   {"supersample", c.supersample}};
    return j.dump();
}

Scene scene_from_json(std::string_view text)
{
    json j;
    try
    {
        j = json::parse(text);
    }
    catch (json::parse_error const& e)
    {
        throw ParseError("scene: malformed JSON at byte " + std::to_string(e.byte)
                         + ": " + e.what());
    }

    Scene scene;
    json const& cam = member(j, "camera", "");
    scene.camera.fx = number(member(cam, "fx", "camera"), "camera.fx");
    scene.camera.fy = number(member(cam, "fy", "camera"), "camera.fy");
    scene.camera.cx = number(member(cam, "cx", "camera"), "camera.cx");
    scene.camera.cy = number(member(cam, "cy", "camera"), "camera.cy");
    scene.camera.width = integer(member(cam, "width", "camera"), "camera.width");
    scene.camera.height = integer(member(cam, "height", "camera"), "camera.height");
    if (auto it = cam.find("supersample"); it != cam.end())
        scene.camera.supersample = integer(*it, "camera.supersample");
    else
        scene.camera.supersample = 1;

    json const& g = member(j, "gt", "");
    static constexpr char const* box_keys[] = {"x", "y", "z", "w", "h", "l", "r"};
    std::array<double, 7> box{};
    for (std::size_t i = 0; i < 7; ++i)
        box[i] = number(member(g, box_keys[i], "gt"), std::string("gt.") + box_keys[i]);
    scene.gt = Box3D::from_array(box);

    json const& img = member(j, "image", "");
    if (!img.is_array())
        throw ParseError("image: expected an array of rows");
    scene.image = Image(int(img.size()), img.empty() ? 0 : int(img[0].size()));
    for (std::size_t r = 0; r < img.size(); ++r)
    {
        std::string const row_name = "image[" + std::to_string(r) + "]";
        if (!img[r].is_array() || int(img[r].size()) != scene.image.width)
            throw ParseError(row_name + ": rows must be arrays of equal length");
        for (std::size_t c = 0; c < img[r].size(); ++c)
            scene.image.at(int(r), int(c))
                = number(img[r][c], row_name + "[" + std::to_string(c) + "]");
    }

    json const& pts = member(j, "points", "");
    if (!pts.is_array())
        throw ParseError("points: expected an array");
    scene.points.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
    {
        std::string const name = "points[" + std::to_string(i) + "]";
        if (!pts[i].is_array() || pts[i].size() != 3)
            throw ParseError(name + ": expected [x, y, z]");
        scene.points.push_back({number(pts[i][0], name + "[0]"),
                                number(pts[i][1], name + "[1]"),
                                number(pts[i][2], name + "[2]")});
    }

    json const& mask = member(j, "object_mask", "");
    if (!mask.is_array())
        throw ParseError("object_mask: expected an array");
    for (std::size_t i = 0; i < mask.size(); ++i)
    {
        if (!mask[i].is_number_unsigned() && !mask[i].is_number_integer())
            throw ParseError("object_mask[" + std::to_string(i) + "]: expected an index");
        auto const v = mask[i].get<std::int64_t>();
        if (v < 0)
            throw ParseError("object_mask[" + std::to_string(i) + "]: negative index");
        scene.object_mask.push_back(std::size_t(v));
    }

    try
    {
        validate(scene);
    }
    catch (InputError const& e)
    {
        throw ParseError(e.what());
    }
    return scene;
}

void save_scene(Scene const& scene, std::filesystem::path const& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    out << scene_to_json(scene) << '\n';
    if (!out)
        throw IoError("failed writing " + path.string());
}

Scene load_scene(std::filesystem::path const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return scene_from_json(buf.str());
}

}  // namespace commit
