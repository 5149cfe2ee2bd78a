#include "transforms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "errors.hpp"
#include "parallel.hpp"

namespace commit
{
namespace
{
// Pair distance may exceed the endpoint distance by rounding alone.
constexpr double distance_slack = 1e-12;

void require_one_dimensional(ParamSpace const& space)
{
    if (space.size() != 1)
        throw InputError("transform: rotation and shifting take one parameter");
}
}  // namespace

std::string_view to_string(TransformKind kind)
{
    switch (kind)
    {
    case TransformKind::rotation:
        return "rotation";
    case TransformKind::shifting:
        return "shifting";
    }
    return "unknown";
}

TransformKind parse_transform_kind(std::string_view name)
{
    if (name == "rotation")
        return TransformKind::rotation;
    if (name == "shifting")
        return TransformKind::shifting;
    throw InputError("transform: unknown kind '" + std::string(name)
                     + "' (expected rotation or shifting)");
}

bool ParamSpace::contains(std::span<double const> z) const
{
    if (z.size() != dims.size())
        return false;
    for (std::size_t i = 0; i < z.size(); ++i)
    {
        if (!(z[i] >= dims[i].lo && z[i] <= dims[i].hi))
            return false;
    }
    return true;
}

void validate(ParamSpace const& space)
{
    if (space.dims.empty())
        throw InputError("parameter space: at least one dimension required");
    for (auto const& d : space.dims)
    {
        if (!(std::isfinite(d.lo) && std::isfinite(d.hi) && d.lo <= d.hi))
            throw InputError("parameter space: need finite lo <= hi");
    }
}

ParamGrid::ParamGrid(ParamSpace space, std::vector<std::size_t> counts)
    : space_(std::move(space)), counts_(std::move(counts))
{
    validate(space_);
    if (counts_.size() != space_.size())
        throw InputError("grid: one count per dimension required");
    for (std::size_t k : counts_)
    {
        if (k < 1)
            throw InputError("grid: counts must be >= 1");
    }
}

std::size_t ParamGrid::cell_count() const
{
    std::size_t total = 1;
    for (std::size_t k : counts_)
        total *= k;
    return total;
}

double ParamGrid::lattice(std::size_t axis, std::size_t k) const
{
    auto const& d = space_.dims[axis];
    std::size_t const n = counts_[axis];
    if (k == 0)
        return d.lo;
    if (k == n)
        return d.hi;
    return (double(n - k) * d.lo + double(k) * d.hi) / double(n);
}

Cell ParamGrid::cell(std::size_t index) const
{
    if (index >= cell_count())
        throw InputError("grid: cell index out of range");
    Cell c;
    c.lo.resize(counts_.size());
    c.hi.resize(counts_.size());
    for (std::size_t axis = counts_.size(); axis-- > 0;)
    {
        std::size_t const k = index % counts_[axis];
        index /= counts_[axis];
        c.lo[axis] = lattice(axis, k);
        c.hi[axis] = lattice(axis, k + 1);
    }
    return c;
}

ParamGrid split(ParamSpace const& space, std::vector<std::size_t> const& counts)
{
    return ParamGrid(space, counts);
}

ParamGrid split_by_width(ParamSpace const& space, double tau)
{
    validate(space);
    if (!(tau > 0))
        throw InputError("grid: tau must be positive");
    std::vector<std::size_t> counts;
    for (auto const& d : space.dims)
    {
        auto k = std::max<std::size_t>(1, std::size_t(std::ceil(d.width() / tau)));
        // Guard against ceil landing one short through rounding.
        while (d.width() / double(k) > tau)
            ++k;
        counts.push_back(k);
    }
    return ParamGrid(space, counts);
}

Scene transform_geometry(TransformKind kind, Scene const& scene, double z)
{
    if (!std::isfinite(z))
        throw InputError("transform: parameter must be finite");
    Scene out = scene;
    switch (kind)
    {
    case TransformKind::rotation:
    {
        double const cx = scene.gt.x;
        double const cz = scene.gt.z;
        // p + (R - I)(p - c) keeps z = 0 exact.
        double const cm1 = std::cos(z) - 1;
        double const s = std::sin(z);
        for (std::size_t i : scene.object_mask)
        {
            Point3& p = out.points[i];
            double const dx = p.x - cx;
            double const dz = p.z - cz;
            p.x += cm1 * dx - s * dz;
            p.z += s * dx + cm1 * dz;
        }
        out.gt.r += z;
        break;
    }
    case TransformKind::shifting:
        for (std::size_t i : scene.object_mask)
            out.points[i].z += z;
        out.gt.z += z;
        break;
    }
    return out;
}

Scene apply(TransformKind kind, Scene const& scene, double z)
{
    Scene out = transform_geometry(kind, scene, z);
    out.image = render(out);
    return out;
}

Scene apply(TransformKind kind, Scene const& scene, double z, ParamSpace const& space)
{
    require_one_dimensional(space);
    if (!space.contains(std::span(&z, 1)))
        throw InputError("transform: parameter " + std::to_string(z)
                         + " outside the declared space");
    return apply(kind, scene, z);
}

double image_distance(Image const& a, Image const& b)
{
    if (a.pixels.size() != b.pixels.size())
        throw InputError("image_distance: size mismatch");
    double sum = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i)
    {
        double const d = a.pixels[i] - b.pixels[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

double point_distance(std::span<Point3 const> a, std::span<Point3 const> b)
{
    if (a.size() != b.size())
        throw InputError("point_distance: size mismatch");
    double sum = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        double const dx = a[i].x - b[i].x;
        double const dy = a[i].y - b[i].y;
        double const dz = a[i].z - b[i].z;
        sum += dx * dx + dy * dy + dz * dz;
    }
    return std::sqrt(sum);
}

InterpError cell_interp_error(TransformFn const& transform, Cell const& cell)
{
    std::size_t const m = cell.lo.size();
    if (cell.hi.size() != m || m == 0)
        throw InputError("cell: malformed bounds");

    // Transforms at all 2^m cell vertices, vertex bit i selecting hi on axis i.
    std::size_t const vertices = std::size_t{1} << m;
    std::vector<Scene> at(vertices);
    std::vector<double> z(m);
    for (std::size_t v = 0; v < vertices; ++v)
    {
        for (std::size_t i = 0; i < m; ++i)
            z[i] = (v >> i & 1) ? cell.hi[i] : cell.lo[i];
        at[v] = transform(z);
    }

    InterpError err;
    for (std::size_t i = 0; i < m; ++i)
    {
        double worst_x = 0, worst_p = 0;
        for (std::size_t v = 0; v < vertices; ++v)
        {
            if (v >> i & 1)
                continue;
            Scene const& a = at[v];
            Scene const& b = at[v | (std::size_t{1} << i)];
            worst_x = std::max(worst_x, image_distance(a.image, b.image));
            worst_p = std::max(worst_p, point_distance(a.points, b.points));
        }
        err.m_x += worst_x;
        err.m_p += worst_p;
    }
    return err;
}

InterpError cell_interp_error(TransformKind kind, Scene const& scene, Cell const& cell)
{
    if (cell.lo.size() != 1)
        throw InputError("transform: rotation and shifting take one parameter");
    return cell_interp_error(
        [&](std::span<double const> z) { return apply(kind, scene, z[0]); }, cell);
}

std::vector<InterpError> grid_interp_errors(TransformKind kind, Scene const& scene,
                                            ParamGrid const& grid, std::size_t threads)
{
    require_one_dimensional(grid.space());
    std::size_t const cells = grid.cell_count();
    std::vector<Scene> lattice(cells + 1);
    parallel_for(cells + 1, threads, [&](std::size_t, std::size_t k) {
        lattice[k] = apply(kind, scene, grid.lattice(0, k));
    });
    std::vector<InterpError> out(cells);
    for (std::size_t c = 0; c < cells; ++c)
    {
        out[c] = {image_distance(lattice[c].image, lattice[c + 1].image),
                  point_distance(lattice[c].points, lattice[c + 1].points)};
    }
    return out;
}

double PartitionRow::image_violation_rate() const
{
    return pairs == 0 ? 0.0 : double(image_violations) / double(pairs);
}

double PartitionRow::point_violation_rate() const
{
    return pairs == 0 ? 0.0 : double(point_violations) / double(pairs);
}

PartitionReport check_partition(TransformKind kind, Scene const& scene,
                                ParamSpace const& space, double tau,
                                std::span<double const> interval_sizes,
                                std::size_t pairs_per_interval, std::uint64_t seed)
{
    validate(space);
    require_one_dimensional(space);
    Interval const dim = space.dims[0];
    for (double s : interval_sizes)
    {
        if (!(s >= 0 && s <= dim.width()))
            throw InputError("check_partition: interval sizes must lie in [0, width of "
                             "the space]");
    }

    std::mt19937_64 rng(seed);
    auto uniform = [&rng](double lo, double hi) {
        return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    auto ratio = [](double pair, double ends) {
        if (pair == 0)
            return 0.0;
        return ends == 0 ? std::numeric_limits<double>::infinity() : pair / ends;
    };

    PartitionReport report{tau, {}};
    for (double size : interval_sizes)
    {
        PartitionRow row;
        row.size = size;
        row.pairs = pairs_per_interval;
        double sum_x = 0, sum_p = 0;
        for (std::size_t j = 0; j < pairs_per_interval; ++j)
        {
            double const a = uniform(dim.lo, dim.hi - size);
            double const b = std::min(a + size, dim.hi);
            double const z1 = uniform(a, b);
            double const z2 = uniform(a, b);
            Scene const ta = apply(kind, scene, a);
            Scene const tb = apply(kind, scene, b);
            Scene const t1 = apply(kind, scene, z1);
            Scene const t2 = apply(kind, scene, z2);

            double const ends_x = image_distance(ta.image, tb.image);
            double const ends_p = point_distance(ta.points, tb.points);
            double const pair_x = image_distance(t1.image, t2.image);
            double const pair_p = point_distance(t1.points, t2.points);
            row.image_violations += pair_x > ends_x + distance_slack;
            row.point_violations += pair_p > ends_p + distance_slack;

            double const rx = ratio(pair_x, ends_x);
            double const rp = ratio(pair_p, ends_p);
            row.max_image_ratio = std::max(row.max_image_ratio, rx);
            row.max_point_ratio = std::max(row.max_point_ratio, rp);
            sum_x += rx;
            sum_p += rp;
        }
        if (pairs_per_interval > 0)
        {
            row.mean_image_ratio = sum_x / double(pairs_per_interval);
            row.mean_point_ratio = sum_p / double(pairs_per_interval);
        }
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace commit
