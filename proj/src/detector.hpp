#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geometry.hpp"
#include "scene.hpp"

namespace commit
{
struct Detection
{
    Box3D box;
    std::string label;
    double score{0};

    friend bool operator==(Detection const&, Detection const&) = default;
};

//! Labels counted as vehicles when picking the detection to certify.
bool is_vehicle_label(std::string_view label);

/*!
 * Black-box detector g(image, points). Implementations must be safe to call
 * from several threads at once; ones that cannot run requests in parallel
 * serialize internally.
 */
class Detector
{
  public:
    virtual ~Detector() = default;
    virtual std::vector<Detection> detect(Scene const& scene) = 0;
};

struct BuiltinDetectorConfig
{
    //! Points closer than this to the estimated ground plane are dropped.
    double ground_clearance{0.3};
    //! Side of the (x, z) grid used for connectivity clustering.
    double cell_size{0.5};
    std::size_t min_cluster_points{30};
    //! Projection percentiles taken as the box faces.
    double extent_percentile{0.05};
    //! Clusters at least this long are labelled "car".
    double min_vehicle_length{2.0};
    //! score = sigmoid(a * points + b * patch mean + c)
    double score_a{0.01};
    double score_b{2.0};
    double score_c{-1.0};
};

/*!
 * Deterministic geometric detector:
 *  1. ground height = median y of the lower-lying half of the points
 *     (y grows downward), points within ground_clearance of it dropped;
 *  2. remaining points clustered by 8-connectivity of occupied (x, z) cells;
 *  3. per cluster, orientation from the principal axes of (x, z), horizontal
 *     extents and center from projection percentiles, box bottom on the
 *     ground, top at the low y percentile;
 *  4. score from the cluster size and the mean image intensity inside the
 *     box's projected bounding rectangle.
 * Detections are sorted by descending score.
 */
std::vector<Detection> detect_builtin(Scene const& scene,
                                      BuiltinDetectorConfig const& cfg = {});

class BuiltinDetector : public Detector
{
  public:
    explicit BuiltinDetector(BuiltinDetectorConfig cfg = {}) : cfg_(cfg) {}

    std::vector<Detection> detect(Scene const& scene) override
    {
        return detect_builtin(scene, cfg_);
    }

    BuiltinDetectorConfig const& config() const { return cfg_; }

  private:
    BuiltinDetectorConfig cfg_;
};

//! Highest vehicle score, 0 when no vehicle was found.
double top_vehicle_confidence(std::span<Detection const> detections);

//! Box of the highest-scoring vehicle; the first one wins ties.
std::optional<Box3D> top_vehicle_box(std::span<Detection const> detections);

}  // namespace commit
