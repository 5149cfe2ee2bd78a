#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "detector.hpp"
#include "geometry.hpp"
#include "smoothing.hpp"
#include "transforms.hpp"

namespace commit
{
//! Noise streams; cell i of a certificate samples on stream i.
inline constexpr std::uint64_t attack_stream_base = std::uint64_t{1} << 32;
inline constexpr std::uint64_t clean_stream = std::uint64_t{1} << 33;

//! Per-sample detector outputs for one (scene, stream) batch.
struct SampleBatch
{
    //! Top vehicle confidence per sample, 0 when no vehicle was found.
    std::vector<double> confidence;
    //! Top vehicle box per sample.
    std::vector<std::optional<Box3D>> boxes;

    std::size_t missing() const;
};

SampleBatch sample_detector(Detector& detector, Scene const& scene,
                            SmoothingConfig const& cfg, std::uint64_t stream,
                            std::size_t threads);

/*!
 * Order statistic X_(k) (1-based) of coordinate `coord` of the sampled boxes,
 * with missing boxes placed at -inf (lower = true) or +inf.
 */
double box_order_statistic(SampleBatch const& batch, std::size_t coord, std::size_t k,
                           bool lower);

/*!
 * Coordinate-wise median box: entry floor(m/2) of each sorted coordinate over
 * the m samples with a box. Nullopt when at least half the samples have none.
 */
std::optional<Box3D> median_box(SampleBatch const& batch);

//! Failure budget of one cell: alpha / cells, rounded down so cells * share <= alpha.
double per_cell_alpha(double alpha, std::size_t cells);

/*!
 * Widens a box interval so that its IoU bound against `gt` also covers every
 * ground truth T(gt, z) for z in [anchor, anchor + width]. Rotation turns the
 * center interval about the gt center and lowers r; shifting lowers z.
 */
BoxInterval widen_for_gt_motion(BoxInterval const& interval, Box3D const& gt,
                                TransformKind kind, double width);

struct DetectionCellRecord
{
    std::size_t index{0};
    Cell cell;
    InterpError error;
    double q_lo{0};
    double q_hi{0};
    double alpha{0};
    std::optional<std::size_t> k_lo;
    std::optional<std::size_t> k_hi;
    //! Lower confidence bound over the cell; nullopt when uncertifiable.
    std::optional<double> value;
    //! Upper confidence bound over the cell; 1 when uncertifiable.
    double upper{1};
};

struct DetectionCertificate
{
    double certified_lo{0};
    double empirical_hi{1};
    double median_clean{0};
    bool detected{false};
    double eta{0};
    double alpha_total{0};
    std::vector<DetectionCellRecord> per_cell;
};

struct IoUCellRecord
{
    std::size_t index{0};
    Cell cell;
    InterpError error;
    double q_lo{0};
    double q_hi{0};
    //! Budget of the cell, split evenly over its 14 one-sided bounds.
    double alpha{0};
    std::optional<std::size_t> k_lo;
    std::optional<std::size_t> k_hi;
    //! Percentile interval of the sampled boxes at the anchor.
    std::optional<BoxInterval> interval;
    //! Ground truth at the anchor.
    Box3D gt;
    double cell_iou_lo{0};
    bool certifiable{false};
};

struct IoUCertificate
{
    double certified_iou{0};
    Box3D gt;
    double alpha_total{0};
    std::vector<IoUCellRecord> per_cell;
};

struct CertifyOptions
{
    double eta{0.8};
    //! Worker cap for sampling (0 = all cores).
    std::size_t threads{1};
};

struct JointCertificate
{
    DetectionCertificate detection;
    IoUCertificate iou;
};

/*!
 * Runs both certificates from one sample batch per cell. `errors` holds the
 * interpolation error of each grid cell. Each certificate is separately
 * valid with probability at least 1 - cfg.alpha.
 */
JointCertificate certify_joint(Detector& detector, Scene const& scene, TransformKind kind,
                               ParamGrid const& grid, std::span<InterpError const> errors,
                               SmoothingConfig const& cfg, CertifyOptions const& options);

DetectionCertificate certify_detection(Detector& detector, Scene const& scene,
                                       TransformKind kind, ParamGrid const& grid,
                                       SmoothingConfig const& cfg,
                                       CertifyOptions const& options = {});

DetectionCertificate certify_detection(Detector& detector, Scene const& scene,
                                       TransformKind kind, ParamGrid const& grid,
                                       std::span<InterpError const> errors,
                                       SmoothingConfig const& cfg,
                                       CertifyOptions const& options = {});

//! Certifies IoU against scene.gt moved by the transform.
IoUCertificate certify_iou(Detector& detector, Scene const& scene, TransformKind kind,
                           ParamGrid const& grid, SmoothingConfig const& cfg,
                           CertifyOptions const& options = {});

IoUCertificate certify_iou(Detector& detector, Scene const& scene, TransformKind kind,
                           ParamGrid const& grid, std::span<InterpError const> errors,
                           SmoothingConfig const& cfg, CertifyOptions const& options = {});

enum class AttackMetric
{
    confidence,
    iou,
};

struct AttackPoint
{
    double param{0};
    //! Median confidence of the smoothed detector.
    double confidence{0};
    std::optional<Box3D> box;
    //! Exact IoU of the median box against the transformed gt; 0 without a box.
    double iou{0};
};

struct AttackResult
{
    std::vector<AttackPoint> points;
    double worst_confidence{0};
    double argmin_confidence{0};
    double worst_iou{0};
    double argmin_iou{0};

    double worst(AttackMetric metric) const
    {
        return metric == AttackMetric::confidence ? worst_confidence : worst_iou;
    }
    double argmin(AttackMetric metric) const
    {
        return metric == AttackMetric::confidence ? argmin_confidence : argmin_iou;
    }
};

//! Parameters lo + i * step for i = 0 .. floor(width / step), clamped to hi.
std::vector<double> attack_parameters(Interval space, double step);

/*!
 * Enumerates the space at `step` and evaluates the smoothed detector at each
 * parameter. The first parameter wins ties for the minimum.
 */
AttackResult empirical_attack(Detector& detector, Scene const& scene, TransformKind kind,
                              Interval space, double step, SmoothingConfig const& cfg,
                              std::size_t threads = 1);

struct CleanValues
{
    double confidence{0};
    //! Exact IoU of the median box against scene.gt; 0 without a box.
    double iou{0};
};

//! Smoothed detector on the untransformed scene, on its own noise stream.
CleanValues smoothed_clean_values(Detector& detector, Scene const& scene,
                                  SmoothingConfig const& cfg, std::size_t threads = 1);

struct SweepRow
{
    Interval radius;
    std::size_t cells{0};
    double certified_detection{0};
    double certified_iou{0};
    double empirical_confidence{0};
    double empirical_iou{0};
};

//! Cell count for width / cell_width, exact when the ratio is integral up to rounding.
std::size_t cells_for_width(double width, double cell_width);

/*!
 * Certificates for nested sub-ranges from one master run: each radius takes
 * the minimum over the master cells it contains and the attack points inside
 * it. Every radius must be a union of master cells.
 */
std::vector<SweepRow> sweep_radii(JointCertificate const& master,
                                  AttackResult const& attack,
                                  std::span<Interval const> radii);

struct BenchmarkResult
{
    JointCertificate master;
    AttackResult attack;
    CleanValues clean;
    std::vector<SweepRow> rows;
};

/*!
 * Certifies and attacks the hull of the radii once, then reports each radius
 * through sweep_radii. Cells have width cell_width (rounded to fit the hull).
 */
BenchmarkResult benchmark(Detector& detector, Scene const& scene, TransformKind kind,
                          std::span<Interval const> radii, double cell_width,
                          double attack_step, SmoothingConfig const& cfg,
                          std::size_t threads = 1);

}  // namespace commit
