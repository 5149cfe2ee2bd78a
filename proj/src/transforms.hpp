#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "scene.hpp"

namespace commit
{
/*!
 * Semantic transformations of the foreground vehicle.
 *
 * rotation: parameter in radians. Object points p move to
 * c + R(z) (p - c) with c the ground-truth center and
 *
 *     R(z) = [cos z  -sin z]   acting on (x, z) coordinates,
 *            [sin z   cos z]
 *
 * the same matrix that orients box footprints, so gt.r becomes r + z.
 * Positive angles turn +x toward +z, which is clockwise when seen from +y.
 *
 * shifting: parameter in meters; object points and the box move along +z.
 */
enum class TransformKind
{
    rotation,
    shifting,
};

std::string_view to_string(TransformKind kind);
//! Throws InputError on an unknown name.
TransformKind parse_transform_kind(std::string_view name);

struct Interval
{
    double lo{0};
    double hi{0};

    double width() const { return hi - lo; }
    friend bool operator==(Interval const&, Interval const&) = default;
};

struct ParamSpace
{
    std::vector<Interval> dims;

    std::size_t size() const { return dims.size(); }
    bool contains(std::span<double const> z) const;
};

void validate(ParamSpace const& space);

struct Cell
{
    std::vector<double> lo;
    std::vector<double> hi;

    //! Samples are drawn at the lower corner.
    std::span<double const> anchor() const { return lo; }
};

//! Affine partition of a space into prod(counts) cells, last axis fastest.
class ParamGrid
{
  public:
    ParamGrid(ParamSpace space, std::vector<std::size_t> counts);

    ParamSpace const& space() const { return space_; }
    std::vector<std::size_t> const& counts() const { return counts_; }
    std::size_t cell_count() const;

    //! Lattice coordinate k of axis `axis`, k in [0, counts[axis]].
    double lattice(std::size_t axis, std::size_t k) const;
    Cell cell(std::size_t index) const;

  private:
    ParamSpace space_;
    std::vector<std::size_t> counts_;
};

ParamGrid split(ParamSpace const& space, std::vector<std::size_t> const& counts);

//! Finest grid with every cell width at most tau.
ParamGrid split_by_width(ParamSpace const& space, double tau);

//! Object points and ground truth after the transformation; image untouched.
Scene transform_geometry(TransformKind kind, Scene const& scene, double z);

//! Full transformation: geometry plus a re-rendered image.
Scene apply(TransformKind kind, Scene const& scene, double z);
//! As above, rejecting parameters outside `space`.
Scene apply(TransformKind kind, Scene const& scene, double z, ParamSpace const& space);

double image_distance(Image const& a, Image const& b);
double point_distance(std::span<Point3 const> a, std::span<Point3 const> b);

struct InterpError
{
    double m_x{0};
    double m_p{0};
};

//! Transformation oracle over a parameter vector.
using TransformFn = std::function<Scene(std::span<double const> z)>;

/*!
 * Interpolation error bound of one cell: for every axis, the largest
 * distance between the transforms at the two ends of any cell edge along
 * that axis, summed over axes. For a one-dimensional cell [a, b] this is
 * the distance between T(a) and T(b).
 */
InterpError cell_interp_error(TransformFn const& transform, Cell const& cell);
InterpError cell_interp_error(TransformKind kind, Scene const& scene, Cell const& cell);

/*!
 * cell_interp_error for every cell of a one-dimensional grid, sharing the
 * transform at lattice points between neighbouring cells.
 */
std::vector<InterpError> grid_interp_errors(TransformKind kind, Scene const& scene,
                                            ParamGrid const& grid,
                                            std::size_t threads = 1);

struct PartitionRow
{
    double size{0};
    std::size_t pairs{0};
    std::size_t image_violations{0};
    std::size_t point_violations{0};
    //! Largest pair distance over endpoint distance seen (0 when both vanish).
    double max_image_ratio{0};
    double max_point_ratio{0};
    double mean_image_ratio{0};
    double mean_point_ratio{0};

    double image_violation_rate() const;
    double point_violation_rate() const;
};

struct PartitionReport
{
    double tau{0};
    std::vector<PartitionRow> rows;
};

/*!
 * Empirical check of the finite-partition assumption: for each interval
 * size, draws random sub-intervals of that size and random parameter pairs
 * inside them, and counts pairs whose transform distance exceeds the
 * distance between the sub-interval's endpoints. One-dimensional spaces
 * only.
 */
PartitionReport check_partition(TransformKind kind, Scene const& scene,
                                ParamSpace const& space, double tau,
                                std::span<double const> interval_sizes,
                                std::size_t pairs_per_interval, std::uint64_t seed);

}  // namespace commit
