#include "commit/commit.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "certify.hpp"
#include "errors.hpp"
#include "external_detector.hpp"

struct commit_scene
{
    commit::Scene scene;
};

struct commit_detector
{
    std::unique_ptr<commit::Detector> impl;
};

namespace
{
using namespace commit;

thread_local std::string last_error;

commit_status fail(commit_status status, char const* message)
{
    last_error = message;
    return status;
}

// Runs fn, mapping library exceptions onto status codes.
template <class Fn>
commit_status guarded(Fn&& fn)
{
    last_error.clear();
    try
    {
        fn();
        return COMMIT_OK;
    }
    catch (DetectorError const& e)
    {
        switch (e.kind())
        {
        case DetectorError::Kind::protocol:
            return fail(COMMIT_DETECTOR_PROTOCOL, e.what());
        case DetectorError::Kind::timeout:
            return fail(COMMIT_DETECTOR_TIMEOUT, e.what());
        case DetectorError::Kind::process_died:
        case DetectorError::Kind::unusable:
            return fail(COMMIT_DETECTOR_DIED, e.what());
        }
        return fail(COMMIT_INTERNAL, e.what());
    }
    catch (InputError const& e)
    {
        return fail(COMMIT_INVALID_ARGUMENT, e.what());
    }
    catch (ParseError const& e)
    {
        return fail(COMMIT_PARSE, e.what());
    }
    catch (IoError const& e)
    {
        return fail(COMMIT_IO, e.what());
    }
    catch (std::bad_alloc const&)
    {
        return fail(COMMIT_INTERNAL, "out of memory");
    }
    catch (std::exception const& e)
    {
        return fail(COMMIT_INTERNAL, e.what());
    }
    catch (...)
    {
        return fail(COMMIT_INTERNAL, "unknown error");
    }
}

template <class T>
T& require(T* p, char const* name)
{
    if (!p)
        throw InputError(std::string(name) + ": null pointer");
    return *p;
}

template <class T>
T const& require(T const* p, char const* name)
{
    if (!p)
        throw InputError(std::string(name) + ": null pointer");
    return *p;
}

std::string require_text(char const* p, char const* name)
{
    if (!p)
        throw InputError(std::string(name) + ": null pointer");
    return p;
}

TransformKind to_kind(commit_transform t)
{
    switch (t)
    {
    case COMMIT_ROTATION:
        return TransformKind::rotation;
    case COMMIT_SHIFTING:
        return TransformKind::shifting;
    }
    throw InputError("transform: unknown value " + std::to_string(int(t)));
}

Box3D to_box(commit_box const& b)
{
    return {b.x, b.y, b.z, b.w, b.h, b.l, b.r};
}

commit_box from_box(Box3D const& b)
{
    return {b.x, b.y, b.z, b.w, b.h, b.l, b.r};
}

SmoothingConfig to_config(commit_smoothing const& s)
{
    SmoothingConfig cfg;
    cfg.sigma_x = s.sigma_x;
    cfg.sigma_p = s.sigma_p;
    cfg.n = s.samples;
    cfg.alpha = s.alpha;
    cfg.seed = s.seed;
    validate(cfg);
    return cfg;
}

Detector& detector_of(commit_detector* d)
{
    auto& h = require(d, "detector");
    if (!h.impl)
        throw InputError("detector: released handle");
    return *h.impl;
}

JointCertificate run_certify(commit_detector* detector, commit_scene const* scene,
                             commit_certify_request const* request)
{
    auto const& req = require(request, "request");
    auto const& sc = require(scene, "scene").scene;
    Detector& det = detector_of(detector);
    if (req.cells == 0)
        throw InputError("grid: cell count must be positive");
    TransformKind const kind = to_kind(req.transform);
    SmoothingConfig const cfg = to_config(req.smoothing);
    ParamGrid const grid = split({{{req.lo, req.hi}}}, {req.cells});
    auto const errors = grid_interp_errors(kind, sc, grid, req.threads);
    return certify_joint(det, sc, kind, grid, errors, cfg, {req.eta, req.threads});
}
}  // namespace

extern "C" {

COMMIT_API const char* commit_last_error(void)
{
    return last_error.c_str();
}

COMMIT_API const char* commit_status_name(commit_status status)
{
    switch (status)
    {
    case COMMIT_OK:
        return "ok";
    case COMMIT_INVALID_ARGUMENT:
        return "invalid argument";
    case COMMIT_PARSE:
        return "parse error";
    case COMMIT_IO:
        return "I/O error";
    case COMMIT_DETECTOR_PROTOCOL:
        return "detector protocol error";
    case COMMIT_DETECTOR_TIMEOUT:
        return "detector timeout";
    case COMMIT_DETECTOR_DIED:
        return "detector process died";
    case COMMIT_INTERNAL:
        return "internal error";
    }
    return "unknown status";
}

COMMIT_API const char* commit_version(void)
{
    return "0.1.0";
}

COMMIT_API void commit_smoothing_defaults(commit_smoothing* out)
{
    if (!out)
        return;
    SmoothingConfig const cfg;
    *out = {cfg.sigma_x, cfg.sigma_p, cfg.n, cfg.alpha, cfg.seed};
}

COMMIT_API commit_status commit_scene_generate(uint64_t seed, int randomize,
                                               commit_scene** out)
{
    return guarded([&] {
        auto& slot = require(out, "out");
        SceneSpec spec = randomize ? random_scene_spec(seed) : SceneSpec{};
        spec.seed = seed;
        slot = new commit_scene{generate(spec)};
    });
}

COMMIT_API commit_status commit_scene_load(const char* path, commit_scene** out)
{
    return guarded([&] {
        auto& slot = require(out, "out");
        slot = new commit_scene{load_scene(require_text(path, "path"))};
    });
}

COMMIT_API commit_status commit_scene_save(const commit_scene* scene, const char* path)
{
    return guarded([&] { save_scene(require(scene, "scene").scene, require_text(path, "path")); });
}

COMMIT_API commit_status commit_scene_ground_truth(const commit_scene* scene, commit_box* out)
{
    return guarded([&] { require(out, "out") = from_box(require(scene, "scene").scene.gt); });
}

COMMIT_API commit_status commit_scene_point_count(const commit_scene* scene, size_t* out)
{
    return guarded(
        [&] { require(out, "out") = require(scene, "scene").scene.points.size(); });
}

COMMIT_API commit_status commit_scene_transform(const commit_scene* scene,
                                                commit_transform transform, double param,
                                                commit_scene** out)
{
    return guarded([&] {
        auto& slot = require(out, "out");
        slot = new commit_scene{apply(to_kind(transform), require(scene, "scene").scene, param)};
    });
}

COMMIT_API void commit_scene_free(commit_scene* scene)
{
    delete scene;
}

COMMIT_API commit_status commit_detector_builtin(commit_detector** out)
{
    return guarded([&] {
        auto& slot = require(out, "out");
        slot = new commit_detector{std::make_unique<BuiltinDetector>()};
    });
}

COMMIT_API commit_status commit_detector_external(const char* command, double timeout_s,
                                                  size_t pool_size, commit_detector** out)
{
    return guarded([&] {
        auto& slot = require(out, "out");
        if (!(timeout_s > 0) || timeout_s > 1e6)
            throw InputError("timeout: must be positive seconds");
        auto const timeout = std::chrono::milliseconds(
            std::max<long long>(1, (long long)(timeout_s * 1000)));
        slot = new commit_detector{std::make_unique<ExternalDetectorPool>(
            require_text(command, "command"), timeout, pool_size)};
    });
}

COMMIT_API commit_status commit_detector_detect(commit_detector* detector,
                                                const commit_scene* scene,
                                                commit_detection* out, size_t capacity,
                                                size_t* count)
{
    return guarded([&] {
        auto& total = require(count, "count");
        if (capacity > 0 && !out)
            throw InputError("out: null pointer");
        auto const dets = detector_of(detector).detect(require(scene, "scene").scene);
        total = dets.size();
        for (std::size_t i = 0; i < dets.size() && i < capacity; ++i)
        {
            out[i].box = from_box(dets[i].box);
            out[i].score = dets[i].score;
            std::memset(out[i].label, 0, sizeof out[i].label);
            std::strncpy(out[i].label, dets[i].label.c_str(), sizeof out[i].label - 1);
        }
    });
}

COMMIT_API void commit_detector_free(commit_detector* detector)
{
    delete detector;
}

COMMIT_API commit_status commit_certify_detection(commit_detector* detector,
                                                  const commit_scene* scene,
                                                  const commit_certify_request* request,
                                                  commit_detection_result* out)
{
    return guarded([&] {
        auto& res = require(out, "out");
        auto const joint = run_certify(detector, scene, request);
        auto const& cert = joint.detection;
        res.certified_lo = cert.certified_lo;
        res.empirical_hi = cert.empirical_hi;
        res.median_clean = cert.median_clean;
        res.detected = cert.detected ? 1 : 0;
        res.uncertifiable_cells = 0;
        for (auto const& c : cert.per_cell)
            res.uncertifiable_cells += !c.value.has_value();
    });
}

COMMIT_API commit_status commit_certify_iou(commit_detector* detector,
                                            const commit_scene* scene,
                                            const commit_certify_request* request,
                                            commit_iou_result* out)
{
    return guarded([&] {
        auto& res = require(out, "out");
        auto const joint = run_certify(detector, scene, request);
        auto const& cert = joint.iou;
        res.certified_iou = cert.certified_iou;
        res.gt = from_box(cert.gt);
        res.uncertifiable_cells = 0;
        for (auto const& c : cert.per_cell)
            res.uncertifiable_cells += !c.certifiable;
    });
}

COMMIT_API commit_status commit_attack(commit_detector* detector, const commit_scene* scene,
                                       commit_transform transform, double lo, double hi,
                                       double step, const commit_smoothing* smoothing,
                                       size_t threads, commit_attack_result* out)
{
    return guarded([&] {
        auto& res = require(out, "out");
        auto const r = empirical_attack(detector_of(detector), require(scene, "scene").scene,
                                        to_kind(transform), {lo, hi}, step,
                                        to_config(require(smoothing, "smoothing")), threads);
        res.worst_confidence = r.worst_confidence;
        res.argmin_confidence = r.argmin_confidence;
        res.worst_iou = r.worst_iou;
        res.argmin_iou = r.argmin_iou;
        res.evaluations = r.points.size();
    });
}

COMMIT_API commit_status commit_clean_values(commit_detector* detector,
                                             const commit_scene* scene,
                                             const commit_smoothing* smoothing,
                                             size_t threads, double* confidence, double* iou)
{
    return guarded([&] {
        auto& conf = require(confidence, "confidence");
        auto& io = require(iou, "iou");
        auto const v = smoothed_clean_values(detector_of(detector),
                                             require(scene, "scene").scene,
                                             to_config(require(smoothing, "smoothing")),
                                             threads);
        conf = v.confidence;
        io = v.iou;
    });
}

COMMIT_API commit_status commit_check_partition(const commit_scene* scene,
                                                commit_transform transform, double lo,
                                                double hi, double tau, const double* sizes,
                                                size_t n_sizes, size_t pairs, uint64_t seed,
                                                commit_partition_row* rows)
{
    return guarded([&] {
        if (n_sizes == 0)
            throw InputError("sizes: at least one interval size required");
        auto const* size_data = &require(sizes, "sizes");
        auto* out = &require(rows, "rows");
        auto const report = check_partition(to_kind(transform), require(scene, "scene").scene,
                                            {{{lo, hi}}}, tau,
                                            std::span<double const>(size_data, n_sizes), pairs,
                                            seed);
        for (std::size_t i = 0; i < report.rows.size(); ++i)
        {
            auto const& r = report.rows[i];
            out[i] = {r.size,           r.pairs,           r.image_violations,
                      r.point_violations, r.max_image_ratio, r.max_point_ratio,
                      r.mean_image_ratio, r.mean_point_ratio};
        }
    });
}

COMMIT_API commit_status commit_benchmark(commit_detector* detector,
                                          const commit_scene* scene,
                                          commit_transform transform,
                                          const commit_interval* radii, size_t n_radii,
                                          double cell_width, double attack_step,
                                          const commit_smoothing* smoothing, size_t threads,
                                          commit_sweep_row* rows)
{
    return guarded([&] {
        if (n_radii == 0)
            throw InputError("radii: at least one range required");
        auto const* radius_data = &require(radii, "radii");
        auto* out = &require(rows, "rows");
        std::vector<Interval> ranges;
        for (std::size_t i = 0; i < n_radii; ++i)
            ranges.push_back({radius_data[i].lo, radius_data[i].hi});
        auto const result = benchmark(detector_of(detector), require(scene, "scene").scene,
                                      to_kind(transform), ranges, cell_width, attack_step,
                                      to_config(require(smoothing, "smoothing")), threads);
        for (std::size_t i = 0; i < result.rows.size(); ++i)
        {
            auto const& r = result.rows[i];
            out[i] = {{r.radius.lo, r.radius.hi},
                      r.cells,
                      r.certified_detection,
                      r.certified_iou,
                      r.empirical_confidence,
                      r.empirical_iou,
                      result.clean.confidence,
                      result.clean.iou};
        }
    });
}

COMMIT_API commit_status commit_exact_iou(const commit_box* a, const commit_box* b,
                                          double* out)
{
    return guarded([&] {
        Box3D const ba = to_box(require(a, "a")), bb = to_box(require(b, "b"));
        validate(ba);
        validate(bb);
        require(out, "out") = exact_iou_3d(ba, bb);
    });
}

COMMIT_API commit_status commit_iou_lower_bound(const commit_box* lo, const commit_box* hi,
                                                const commit_box* gt, double* out)
{
    return guarded([&] {
        BoxInterval const iv{to_box(require(lo, "lo")), to_box(require(hi, "hi"))};
        Box3D const g = to_box(require(gt, "gt"));
        validate(iv);
        validate(g);
        require(out, "out") = iou_lower_bound(iv, g);
    });
}

}  // extern "C"
