#include "certify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "errors.hpp"

namespace commit
{
namespace
{
constexpr double inf = std::numeric_limits<double>::infinity();

// Box bounds per cell: lower and upper for each of the 7 coordinates.
constexpr std::size_t box_bounds_per_cell = 2 * Box3D::size;

// Outward padding for the widened interval, against rounding in the trig.
constexpr double widen_pad = 1e-12;

struct Range
{
    double lo;
    double hi;
};

Range multiply(Range a, Range b)
{
    double const p[] = {a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi};
    return {*std::min_element(std::begin(p), std::end(p)),
            *std::max_element(std::begin(p), std::end(p))};
}

// Percentiles pushed to 0 or 1 by a large interpolation error have no rank.
OrderIndices ranks_for(std::size_t n, PercentilePair const& q, double alpha)
{
    double const p_lo = std::max(q.q_lo, std::numeric_limits<double>::min());
    double const p_hi = std::min(q.q_hi, std::nextafter(1.0, 0.0));
    return order_statistic_indices(n, p_lo, p_hi, alpha);
}

double anchor_of(Cell const& cell)
{
    return cell.anchor()[0];
}

double width_of(Cell const& cell)
{
    return cell.hi[0] - cell.lo[0];
}

void require_one_dimensional(ParamGrid const& grid, std::span<InterpError const> errors)
{
    if (grid.space().dims.size() != 1)
        throw InputError("certify: rotation and shifting take one parameter");
    if (errors.size() != grid.cell_count())
        throw InputError("certify: " + std::to_string(errors.size())
                         + " interpolation errors for " + std::to_string(grid.cell_count())
                         + " cells");
}

DetectionCellRecord detection_cell(SampleBatch const& batch, std::size_t index,
                                   Cell const& cell, InterpError const& error,
                                   SmoothingConfig const& cfg, double alpha)
{
    DetectionCellRecord rec;
    rec.index = index;
    rec.cell = cell;
    rec.error = error;
    rec.alpha = alpha;
    PercentilePair const q = shifted_percentiles(0.5, error.m_x, error.m_p, cfg.sigma_x,
                                                 cfg.sigma_p);
    rec.q_lo = q.q_lo;
    rec.q_hi = q.q_hi;
    OrderIndices const k = ranks_for(cfg.n, q, alpha);
    rec.k_lo = k.k_lo;
    rec.k_hi = k.k_hi;
    std::vector<double> sorted = batch.confidence;
    std::sort(sorted.begin(), sorted.end());
    if (k.k_lo)
        rec.value = sorted[*k.k_lo - 1];
    rec.upper = k.k_hi ? sorted[*k.k_hi - 1] : 1.0;
    return rec;
}

IoUCellRecord iou_cell(SampleBatch const& batch, std::size_t index, Cell const& cell,
                       InterpError const& error, Box3D const& anchor_gt, TransformKind kind,
                       SmoothingConfig const& cfg, double alpha)
{
    IoUCellRecord rec;
    rec.index = index;
    rec.cell = cell;
    rec.error = error;
    rec.alpha = alpha;
    rec.gt = anchor_gt;
    PercentilePair const q = shifted_percentiles(0.5, error.m_x, error.m_p, cfg.sigma_x,
                                                 cfg.sigma_p);
    rec.q_lo = q.q_lo;
    rec.q_hi = q.q_hi;
    OrderIndices const k = ranks_for(cfg.n, q, alpha / double(box_bounds_per_cell));
    rec.k_lo = k.k_lo;
    rec.k_hi = k.k_hi;
    if (!k.k_lo || !k.k_hi)
        return rec;

    std::array<double, Box3D::size> lo{}, hi{};
    for (std::size_t c = 0; c < Box3D::size; ++c)
    {
        lo[c] = box_order_statistic(batch, c, *k.k_lo, true);
        hi[c] = box_order_statistic(batch, c, *k.k_hi, false);
    }
    BoxInterval const iv{Box3D::from_array(lo), Box3D::from_array(hi)};
    rec.interval = iv;
    try
    {
        validate(iv);
    }
    catch (InputError const&)
    {
        // Infinite sentinels, non-positive sizes or a full turn of headings.
        return rec;
    }
    BoxInterval const wide = widen_for_gt_motion(iv, anchor_gt, kind, width_of(cell));
    rec.cell_iou_lo = iou_lower_bound(wide, anchor_gt);
    rec.certifiable = true;
    return rec;
}
}  // namespace

std::size_t SampleBatch::missing() const
{
    return std::size_t(std::count(boxes.begin(), boxes.end(), std::nullopt));
}

SampleBatch sample_detector(Detector& detector, Scene const& scene,
                            SmoothingConfig const& cfg, std::uint64_t stream,
                            std::size_t threads)
{
    SampleBatch batch;
    batch.confidence.assign(cfg.n, 0.0);
    batch.boxes.assign(cfg.n, std::nullopt);
    for_each_noisy_sample(scene, cfg, stream, threads,
                          [&](Scene const& noisy, std::size_t i) {
                              auto const dets = detector.detect(noisy);
                              batch.confidence[i] = top_vehicle_confidence(dets);
                              batch.boxes[i] = top_vehicle_box(dets);
                          });
    return batch;
}

double box_order_statistic(SampleBatch const& batch, std::size_t coord, std::size_t k,
                           bool lower)
{
    std::size_t const n = batch.boxes.size();
    if (coord >= Box3D::size || k < 1 || k > n)
        throw InputError("order statistic: rank " + std::to_string(k) + " outside 1.."
                         + std::to_string(n));
    std::vector<double> present;
    present.reserve(n);
    for (auto const& b : batch.boxes)
    {
        if (b)
            present.push_back(b->as_array()[coord]);
    }
    std::sort(present.begin(), present.end());
    std::size_t const m = n - present.size();
    if (lower)
        return k <= m ? -inf : present[k - m - 1];
    return k > present.size() ? inf : present[k - 1];
}

std::optional<Box3D> median_box(SampleBatch const& batch)
{
    std::size_t const m = batch.boxes.size() - batch.missing();
    if (2 * m <= batch.boxes.size())
        return std::nullopt;
    std::array<double, Box3D::size> out{};
    std::vector<double> values;
    values.reserve(m);
    for (std::size_t c = 0; c < Box3D::size; ++c)
    {
        values.clear();
        for (auto const& b : batch.boxes)
        {
            if (b)
                values.push_back(b->as_array()[c]);
        }
        std::sort(values.begin(), values.end());
        out[c] = median_estimate(values);
    }
    return Box3D::from_array(out);
}

double per_cell_alpha(double alpha, std::size_t cells)
{
    if (!(alpha > 0 && alpha < 1))
        throw InputError("alpha: must lie in (0, 1)");
    if (cells == 0)
        throw InputError("cells: must be positive");
    double share = alpha / double(cells);
    while ((long double)share * (long double)cells > (long double)alpha)
        share = std::nextafter(share, 0.0);
    return share;
}

BoxInterval widen_for_gt_motion(BoxInterval const& interval, Box3D const& gt,
                                TransformKind kind, double width)
{
    if (!(width >= 0))
        throw InputError("cell width: must be non-negative");
    BoxInterval out = interval;
    if (width == 0)
        return out;
    switch (kind)
    {
    case TransformKind::shifting:
        // The gt moves by +d, d in [0, width]; equivalently the box moves by -d.
        out.lo.z -= width + widen_pad;
        out.hi.z += widen_pad;
        break;
    case TransformKind::rotation:
    {
        if (width > std::numbers::pi / 2)
            throw InputError("cell width: rotation cells wider than pi/2 are not supported");
        // The gt turns by +t about its center; equivalently the box turns by
        // -t, t in [0, width]. cos over [-width, 0] spans [cos width, 1], sin
        // spans [-sin width, 0].
        Range const cos_t{std::cos(width), 1};
        Range const sin_t{-std::sin(width), 0};
        Range const dx{interval.lo.x - gt.x, interval.hi.x - gt.x};
        Range const dz{interval.lo.z - gt.z, interval.hi.z - gt.z};
        Range const a = multiply(cos_t, dx), b = multiply(sin_t, dz);
        Range const c = multiply(sin_t, dx), d = multiply(cos_t, dz);
        out.lo.x = gt.x + a.lo - b.hi - widen_pad;
        out.hi.x = gt.x + a.hi - b.lo + widen_pad;
        out.lo.z = gt.z + c.lo + d.lo - widen_pad;
        out.hi.z = gt.z + c.hi + d.hi + widen_pad;
        out.lo.r -= width + widen_pad;
        out.hi.r += widen_pad;
        break;
    }
    }
    return out;
}

JointCertificate certify_joint(Detector& detector, Scene const& scene, TransformKind kind,
                               ParamGrid const& grid, std::span<InterpError const> errors,
                               SmoothingConfig const& cfg, CertifyOptions const& options)
{
    validate(cfg);
    require_one_dimensional(grid, errors);
    std::size_t const cells = grid.cell_count();
    double const alpha = per_cell_alpha(cfg.alpha, cells);

    JointCertificate out;
    DetectionCertificate& det = out.detection;
    IoUCertificate& iou = out.iou;
    det.eta = options.eta;
    det.alpha_total = cfg.alpha;
    iou.alpha_total = cfg.alpha;
    iou.gt = scene.gt;
    det.per_cell.reserve(cells);
    iou.per_cell.reserve(cells);

    for (std::size_t i = 0; i < cells; ++i)
    {
        Cell const cell = grid.cell(i);
        try
        {
            Scene const anchor = apply(kind, scene, anchor_of(cell));
            SampleBatch const batch = sample_detector(detector, anchor, cfg, i, options.threads);
            det.per_cell.push_back(detection_cell(batch, i, cell, errors[i], cfg, alpha));
            iou.per_cell.push_back(
                iou_cell(batch, i, cell, errors[i], anchor.gt, kind, cfg, alpha));
        }
        catch (...)
        {
            rethrow_with_context("cell " + std::to_string(i));
        }
    }

    // Minimum by comparison only, so the certificate equals one cell's value.
    det.certified_lo = inf;
    det.empirical_hi = -inf;
    iou.certified_iou = inf;
    for (std::size_t i = 0; i < cells; ++i)
    {
        det.certified_lo = std::min(det.certified_lo, det.per_cell[i].value.value_or(0.0));
        det.empirical_hi = std::max(det.empirical_hi, det.per_cell[i].upper);
        iou.certified_iou = std::min(
            iou.certified_iou, iou.per_cell[i].certifiable ? iou.per_cell[i].cell_iou_lo : 0.0);
    }
    det.detected = det.certified_lo >= det.eta;
    det.median_clean = smoothed_clean_values(detector, scene, cfg, options.threads).confidence;
    return out;
}

DetectionCertificate certify_detection(Detector& detector, Scene const& scene,
                                       TransformKind kind, ParamGrid const& grid,
                                       std::span<InterpError const> errors,
                                       SmoothingConfig const& cfg,
                                       CertifyOptions const& options)
{
    return certify_joint(detector, scene, kind, grid, errors, cfg, options).detection;
}

DetectionCertificate certify_detection(Detector& detector, Scene const& scene,
                                       TransformKind kind, ParamGrid const& grid,
                                       SmoothingConfig const& cfg,
                                       CertifyOptions const& options)
{
    auto const errors = grid_interp_errors(kind, scene, grid, options.threads);
    return certify_detection(detector, scene, kind, grid, errors, cfg, options);
}

IoUCertificate certify_iou(Detector& detector, Scene const& scene, TransformKind kind,
                           ParamGrid const& grid, std::span<InterpError const> errors,
                           SmoothingConfig const& cfg, CertifyOptions const& options)
{
    return certify_joint(detector, scene, kind, grid, errors, cfg, options).iou;
}

IoUCertificate certify_iou(Detector& detector, Scene const& scene, TransformKind kind,
                           ParamGrid const& grid, SmoothingConfig const& cfg,
                           CertifyOptions const& options)
{
    auto const errors = grid_interp_errors(kind, scene, grid, options.threads);
    return certify_iou(detector, scene, kind, grid, errors, cfg, options);
}

std::vector<double> attack_parameters(Interval space, double step)
{
    if (!(step > 0) || !std::isfinite(step))
        throw InputError("step: must be positive");
    if (!(space.lo <= space.hi) || !std::isfinite(space.lo) || !std::isfinite(space.hi))
        throw InputError("range: lower bound must not exceed upper bound");
    double const count = std::floor(space.width() / step + 1e-9);
    if (count > 1e7)
        throw InputError("step: more than 10^7 attack parameters");
    std::vector<double> out;
    for (std::size_t i = 0; i <= std::size_t(count); ++i)
        out.push_back(std::min(space.lo + double(i) * step, space.hi));
    return out;
}

CleanValues smoothed_clean_values(Detector& detector, Scene const& scene,
                                  SmoothingConfig const& cfg, std::size_t threads)
{
    SampleBatch batch = sample_detector(detector, scene, cfg, clean_stream, threads);
    CleanValues out;
    auto const box = median_box(batch);
    out.iou = box ? exact_iou_3d(*box, scene.gt) : 0.0;
    std::sort(batch.confidence.begin(), batch.confidence.end());
    out.confidence = median_estimate(batch.confidence);
    return out;
}

std::size_t cells_for_width(double width, double cell_width)
{
    if (!(cell_width > 0) || !std::isfinite(cell_width))
        throw InputError("cell width: must be positive");
    if (!(width >= 0) || !std::isfinite(width))
        throw InputError("range: width must be non-negative");
    double const ratio = width / cell_width;
    if (ratio > 1e7)
        throw InputError("cell width: more than 10^7 cells");
    double const nearest = std::round(ratio);
    if (std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, ratio))
        return std::max<std::size_t>(1, std::size_t(nearest));
    return std::size_t(std::ceil(ratio));
}

BenchmarkResult benchmark(Detector& detector, Scene const& scene, TransformKind kind,
                          std::span<Interval const> radii, double cell_width,
                          double attack_step, SmoothingConfig const& cfg,
                          std::size_t threads)
{
    if (radii.empty())
        throw InputError("radii: at least one range required");
    Interval hull = radii[0];
    for (Interval const& r : radii)
    {
        if (!(r.lo <= r.hi))
            throw InputError("radii: lower bound exceeds upper bound");
        hull.lo = std::min(hull.lo, r.lo);
        hull.hi = std::max(hull.hi, r.hi);
    }
    ParamGrid const grid = split({{hull}}, {cells_for_width(hull.width(), cell_width)});
    auto const errors = grid_interp_errors(kind, scene, grid, threads);

    BenchmarkResult out;
    out.master = certify_joint(detector, scene, kind, grid, errors, cfg, {0.8, threads});
    out.attack = empirical_attack(detector, scene, kind, hull, attack_step, cfg, threads);
    out.clean = smoothed_clean_values(detector, scene, cfg, threads);
    out.rows = sweep_radii(out.master, out.attack, radii);
    return out;
}

AttackResult empirical_attack(Detector& detector, Scene const& scene, TransformKind kind,
                              Interval space, double step, SmoothingConfig const& cfg,
                              std::size_t threads)
{
    validate(cfg);
    AttackResult out;
    auto const params = attack_parameters(space, step);
    out.worst_confidence = inf;
    out.worst_iou = inf;
    for (std::size_t i = 0; i < params.size(); ++i)
    {
        AttackPoint pt;
        pt.param = params[i];
        try
        {
            Scene const moved = apply(kind, scene, pt.param);
            SampleBatch batch
                = sample_detector(detector, moved, cfg, attack_stream_base + i, threads);
            pt.box = median_box(batch);
            std::sort(batch.confidence.begin(), batch.confidence.end());
            pt.confidence = median_estimate(batch.confidence);
            pt.iou = pt.box ? exact_iou_3d(*pt.box, moved.gt) : 0.0;
        }
        catch (...)
        {
            rethrow_with_context("attack parameter " + std::to_string(pt.param));
        }
        if (pt.confidence < out.worst_confidence)
        {
            out.worst_confidence = pt.confidence;
            out.argmin_confidence = pt.param;
        }
        if (pt.iou < out.worst_iou)
        {
            out.worst_iou = pt.iou;
            out.argmin_iou = pt.param;
        }
        out.points.push_back(std::move(pt));
    }
    return out;
}

std::vector<SweepRow> sweep_radii(JointCertificate const& master, AttackResult const& attack,
                                  std::span<Interval const> radii)
{
    auto const& det = master.detection.per_cell;
    auto const& iou = master.iou.per_cell;
    if (det.size() != iou.size() || det.empty())
        throw InputError("sweep: master certificate has no cells");

    std::vector<SweepRow> rows;
    for (Interval const& radius : radii)
    {
        double const tol = 1e-9 * std::max(1.0, std::abs(radius.lo) + std::abs(radius.hi));
        SweepRow row;
        row.radius = radius;
        row.certified_detection = inf;
        row.certified_iou = inf;
        double covered = 0;
        for (std::size_t i = 0; i < det.size(); ++i)
        {
            Cell const& cell = det[i].cell;
            if (cell.lo[0] < radius.lo - tol || cell.hi[0] > radius.hi + tol)
                continue;
            ++row.cells;
            covered += width_of(cell);
            row.certified_detection
                = std::min(row.certified_detection, det[i].value.value_or(0.0));
            row.certified_iou
                = std::min(row.certified_iou, iou[i].certifiable ? iou[i].cell_iou_lo : 0.0);
        }
        if (row.cells == 0 || std::abs(covered - radius.width()) > 1e-6 * std::max(1.0, radius.width()))
            throw InputError("radius [" + std::to_string(radius.lo) + ", "
                             + std::to_string(radius.hi)
                             + "]: not a union of master grid cells");
        row.empirical_confidence = inf;
        row.empirical_iou = inf;
        for (auto const& pt : attack.points)
        {
            if (pt.param < radius.lo - tol || pt.param > radius.hi + tol)
                continue;
            row.empirical_confidence = std::min(row.empirical_confidence, pt.confidence);
            row.empirical_iou = std::min(row.empirical_iou, pt.iou);
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace commit
