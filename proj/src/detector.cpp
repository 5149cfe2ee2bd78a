#include "detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <tuple>
#include <utility>

namespace commit
{
namespace
{
struct CellKey
{
    std::int64_t key;
    std::size_t point;
};

std::int64_t cell_coord(double v, double size)
{
    double const c = std::floor(v / size);
    return std::int64_t(std::clamp(c, -1e9, 1e9));
}

// Row-major key; the offset keeps the low word non-negative so keys sort by
// (cx, cz) and unpack with a shift.
constexpr std::int64_t cz_offset = std::int64_t{1} << 31;

std::int64_t pack(std::int64_t cx, std::int64_t cz)
{
    return cx * (std::int64_t{1} << 32) + (cz + cz_offset);
}

// Sorts by (key, point). Keys arrive in point order, so a stable counting
// sort over the occupied cell rectangle does it when that rectangle is small.
void sort_keys(std::vector<CellKey>& keys)
{
    if (keys.empty())
        return;
    std::int64_t cx0 = keys[0].key >> 32, cx1 = cx0;
    std::int64_t cz0 = keys[0].key & 0xffffffff, cz1 = cz0;
    for (auto const& k : keys)
    {
        std::int64_t const cx = k.key >> 32, cz = k.key & 0xffffffff;
        cx0 = std::min(cx0, cx);
        cx1 = std::max(cx1, cx);
        cz0 = std::min(cz0, cz);
        cz1 = std::max(cz1, cz);
    }
    double const bins = double(cx1 - cx0 + 1) * double(cz1 - cz0 + 1);
    if (bins > 16.0 * double(keys.size()) + 4096)
    {
        std::sort(keys.begin(), keys.end(), [](CellKey const& a, CellKey const& b) {
            return a.key < b.key || (a.key == b.key && a.point < b.point);
        });
        return;
    }
    std::int64_t const width = cz1 - cz0 + 1;
    auto bin = [&](CellKey const& k) {
        return std::size_t(((k.key >> 32) - cx0) * width + ((k.key & 0xffffffff) - cz0));
    };
    std::vector<std::size_t> start(std::size_t(bins) + 1, 0);
    for (auto const& k : keys)
        ++start[bin(k) + 1];
    for (std::size_t b = 1; b < start.size(); ++b)
        start[b] += start[b - 1];
    std::vector<CellKey> sorted(keys.size());
    for (auto const& k : keys)
        sorted[start[bin(k)]++] = k;
    keys.swap(sorted);
}

struct UnionFind
{
    std::vector<std::size_t> parent;

    explicit UnionFind(std::size_t n) : parent(n)
    {
        for (std::size_t i = 0; i < n; ++i)
            parent[i] = i;
    }

    std::size_t find(std::size_t i)
    {
        while (parent[i] != i)
        {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        return i;
    }

    void unite(std::size_t a, std::size_t b)
    {
        a = find(a);
        b = find(b);
        if (a != b)
            parent[std::max(a, b)] = std::min(a, b);
    }
};

double sigmoid(double t)
{
    return 1 / (1 + std::exp(-t));
}

// Mean intensity inside the image rectangle bounding the box's projection.
double patch_mean(Box3D const& box, Scene const& scene)
{
    Camera const& cam = scene.camera;
    Image const& img = scene.image;
    if (img.pixels.empty())
        return 0;
    double c0 = 1e300, c1 = -1e300, r0 = 1e300, r1 = -1e300;
    for (Vec2 const& corner : box_corners_2d(box))
    {
        if (!(corner.z > 0))
            return 0;
        for (double y : {box.y, box.y - box.h})
        {
            double const col = cam.cx - cam.fx * corner.x / corner.z;
            double const row = cam.cy + cam.fy * y / corner.z;
            c0 = std::min(c0, col);
            c1 = std::max(c1, col);
            r0 = std::min(r0, row);
            r1 = std::max(r1, row);
        }
    }
    int const col_lo = std::max(0, int(std::floor(std::max(c0, -1.0))));
    int const col_hi = std::min(img.width - 1, int(std::floor(std::min(c1, 1e6))));
    int const row_lo = std::max(0, int(std::floor(std::max(r0, -1.0))));
    int const row_hi = std::min(img.height - 1, int(std::floor(std::min(r1, 1e6))));
    if (col_lo > col_hi || row_lo > row_hi)
        return 0;
    double sum = 0;
    for (int r = row_lo; r <= row_hi; ++r)
    {
        for (int c = col_lo; c <= col_hi; ++c)
            sum += img.at(r, c);
    }
    return sum / double((row_hi - row_lo + 1) * (col_hi - col_lo + 1));
}

// Values at fractions q and 1 - q of v (nearest rank), q <= 0.5; reorders v.
std::pair<double, double> percentile_pair(std::vector<double>& v, double q)
{
    auto const n = v.size();
    auto const lo = std::size_t(std::lround(q * double(n - 1)));
    auto const hi = std::size_t(std::lround((1 - q) * double(n - 1)));
    std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(lo), v.end());
    double const at_lo = v[lo];
    std::nth_element(v.begin() + std::ptrdiff_t(lo), v.begin() + std::ptrdiff_t(hi),
                     v.end());
    return {at_lo, v[hi]};
}

Detection fit_cluster(Scene const& scene, std::span<std::size_t const> members,
                      double ground, BuiltinDetectorConfig const& cfg)
{
    auto const& pts = scene.points;
    double const n = double(members.size());
    double mx = 0, mz = 0;
    for (std::size_t i : members)
    {
        mx += pts[i].x;
        mz += pts[i].z;
    }
    mx /= n;
    mz /= n;
    double sxx = 0, szz = 0, sxz = 0;
    for (std::size_t i : members)
    {
        double const dx = pts[i].x - mx, dz = pts[i].z - mz;
        sxx += dx * dx;
        szz += dz * dz;
        sxz += dx * dz;
    }
    // The major axis becomes the box's local length axis (-sin r, cos r).
    double const major = 0.5 * std::atan2(2 * sxz, sxx - szz);
    double r = major - std::numbers::pi / 2;

    std::vector<double> u, v, ys;
    u.reserve(members.size());
    v.reserve(members.size());
    ys.reserve(members.size());
    {
        double const c = std::cos(r), s = std::sin(r);
        for (std::size_t i : members)
        {
            double const dx = pts[i].x - mx, dz = pts[i].z - mz;
            u.push_back(c * dx + s * dz);
            v.push_back(-s * dx + c * dz);
            ys.push_back(pts[i].y);
        }
    }
    auto [u_lo, u_hi] = percentile_pair(u, cfg.extent_percentile);
    auto [v_lo, v_hi] = percentile_pair(v, cfg.extent_percentile);

    // Turning the frame by +pi/2 maps (u, v) to (v, -u); by pi, to (-u, -v).
    if (u_hi - u_lo > v_hi - v_lo)
    {
        r += std::numbers::pi / 2;
        double const old_u_lo = u_lo, old_u_hi = u_hi;
        u_lo = v_lo;
        u_hi = v_hi;
        v_lo = -old_u_hi;
        v_hi = -old_u_lo;
    }
    // Canonical heading in (-pi/2, pi/2].
    if (r > std::numbers::pi / 2 || r <= -std::numbers::pi / 2)
    {
        r += r > 0 ? -std::numbers::pi : std::numbers::pi;
        std::tie(u_lo, u_hi) = std::pair(-u_hi, -u_lo);
        std::tie(v_lo, v_hi) = std::pair(-v_hi, -v_lo);
    }
    double const c = std::cos(r), s = std::sin(r);
    double const uc = (u_lo + u_hi) / 2, vc = (v_lo + v_hi) / 2;
    double const top = percentile_pair(ys, cfg.extent_percentile).first;

    constexpr double min_size = 0.05;
    Detection d;
    d.box.x = mx + c * uc - s * vc;
    d.box.z = mz + s * uc + c * vc;
    d.box.y = ground;
    d.box.w = std::max(u_hi - u_lo, min_size);
    d.box.l = std::max(v_hi - v_lo, min_size);
    d.box.h = std::max(ground - top, min_size);
    d.box.r = r;
    d.label = d.box.l >= cfg.min_vehicle_length ? "car" : "object";
    d.score = sigmoid(cfg.score_a * n + cfg.score_b * patch_mean(d.box, scene)
                      + cfg.score_c);
    return d;
}
}  // namespace

bool is_vehicle_label(std::string_view label)
{
    return label == "car" || label == "vehicle" || label == "truck" || label == "van"
           || label == "bus";
}

std::vector<Detection> detect_builtin(Scene const& scene, BuiltinDetectorConfig const& cfg)
{
    auto const& pts = scene.points;
    if (pts.empty())
        return {};

    // Ground height: median of the lower-lying half of the points, which is
    // the 75th percentile of y (y grows downward).
    std::vector<double> ys;
    ys.reserve(pts.size());
    for (auto const& p : pts)
        ys.push_back(p.y);
    auto const rank = std::size_t(std::lround(0.75 * double(ys.size() - 1)));
    std::nth_element(ys.begin(), ys.begin() + std::ptrdiff_t(rank), ys.end());
    double const ground = ys[rank];

    std::vector<CellKey> keys;
    keys.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
    {
        if (pts[i].y < ground - cfg.ground_clearance)
            keys.push_back({pack(cell_coord(pts[i].x, cfg.cell_size),
                                 cell_coord(pts[i].z, cfg.cell_size)),
                            i});
    }
    if (keys.size() < cfg.min_cluster_points)
        return {};
    sort_keys(keys);

    std::vector<std::int64_t> cells;
    std::vector<std::size_t> cell_of(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i)
    {
        if (cells.empty() || cells.back() != keys[i].key)
            cells.push_back(keys[i].key);
        cell_of[i] = cells.size() - 1;
    }

    // Forward neighbours only: (cx, cz + 1) and (cx + 1, cz - 1 .. cz + 1).
    // Their keys grow with c, so one cursor sweeps the next row.
    UnionFind uf(cells.size());
    constexpr std::int64_t row = std::int64_t{1} << 32;
    std::size_t next = 0;
    for (std::size_t c = 0; c < cells.size(); ++c)
    {
        std::int64_t const key = cells[c];
        if (c + 1 < cells.size() && cells[c + 1] == key + 1)
            uf.unite(c, c + 1);
        while (next < cells.size() && cells[next] < key + row - 1)
            ++next;
        for (std::size_t j = next; j < cells.size() && cells[j] <= key + row + 1; ++j)
            uf.unite(c, j);
    }

    // Bucket points by cluster root; keys are sorted by cell, so members of a
    // cluster stay in (cell, point) order.
    std::vector<std::size_t> start(cells.size() + 1, 0);
    for (std::size_t i = 0; i < keys.size(); ++i)
        ++start[uf.find(cell_of[i]) + 1];
    for (std::size_t c = 0; c < cells.size(); ++c)
        start[c + 1] += start[c];
    std::vector<std::size_t> members(keys.size());
    {
        std::vector<std::size_t> fill(start.begin(), start.end() - 1);
        for (std::size_t i = 0; i < keys.size(); ++i)
            members[fill[uf.find(cell_of[i])]++] = keys[i].point;
    }

    std::vector<Detection> out;
    for (std::size_t c = 0; c < cells.size(); ++c)
    {
        std::size_t const count = start[c + 1] - start[c];
        if (count >= cfg.min_cluster_points)
            out.push_back(fit_cluster(
                scene, std::span(members).subspan(start[c], count), ground, cfg));
    }
    std::stable_sort(out.begin(), out.end(), [](Detection const& a, Detection const& b) {
        return a.score > b.score;
    });
    return out;
}

double top_vehicle_confidence(std::span<Detection const> detections)
{
    double best = 0;
    for (auto const& d : detections)
    {
        if (is_vehicle_label(d.label))
            best = std::max(best, d.score);
    }
    return best;
}

std::optional<Box3D> top_vehicle_box(std::span<Detection const> detections)
{
    Detection const* best = nullptr;
    for (auto const& d : detections)
    {
        if (is_vehicle_label(d.label) && (!best || d.score > best->score))
            best = &d;
    }
    if (!best)
        return std::nullopt;
    return best->box;
}

}  // namespace commit
