#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <unistd.h>

#include "commit/commit.h"
#include "doctest.h"

namespace
{
constexpr double deg = std::numbers::pi / 180;

std::string fake(std::string const& mode)
{
    return std::string(FAKE_DETECTOR_PATH) + " " + mode;
}

std::filesystem::path temp_dir()
{
    auto const dir = std::filesystem::temp_directory_path()
                     / ("commit_capi_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir;
}

commit_smoothing small_smoothing(size_t n)
{
    commit_smoothing s;
    commit_smoothing_defaults(&s);
    s.samples = n;
    s.seed = 5;
    return s;
}

struct Scene
{
    commit_scene* p{nullptr};
    ~Scene() { commit_scene_free(p); }
};

struct Det
{
    commit_detector* p{nullptr};
    ~Det() { commit_detector_free(p); }
};
}  // namespace

TEST_CASE("status reporting")
{
    CHECK(std::string(commit_status_name(COMMIT_OK)) == "ok");
    CHECK(std::string(commit_status_name(COMMIT_DETECTOR_TIMEOUT)) == "detector timeout");
    CHECK(std::string(commit_version()) == "0.1.0");

    CHECK(commit_scene_generate(0, 0, nullptr) == COMMIT_INVALID_ARGUMENT);
    CHECK(std::string(commit_last_error()).find("out") != std::string::npos);
    Scene s;
    CHECK(commit_scene_generate(0, 0, &s.p) == COMMIT_OK);
    CHECK(std::string(commit_last_error()).empty());
    commit_scene_free(nullptr);
    commit_detector_free(nullptr);
}

TEST_CASE("scenes")
{
    Scene s;
    REQUIRE(commit_scene_generate(3, 0, &s.p) == COMMIT_OK);
    commit_box gt;
    REQUIRE(commit_scene_ground_truth(s.p, &gt) == COMMIT_OK);
    CHECK(gt.z == 10);
    CHECK(gt.l == 4.2);
    size_t count = 0;
    REQUIRE(commit_scene_point_count(s.p, &count) == COMMIT_OK);
    CHECK(count > 700);

    SUBCASE("randomized pose")
    {
        Scene r;
        REQUIRE(commit_scene_generate(3, 1, &r.p) == COMMIT_OK);
        commit_box rgt;
        commit_scene_ground_truth(r.p, &rgt);
        CHECK(rgt.z != 10);
    }
    SUBCASE("save and load")
    {
        auto const path = (temp_dir() / "scene.json").string();
        REQUIRE(commit_scene_save(s.p, path.c_str()) == COMMIT_OK);
        Scene back;
        REQUIRE(commit_scene_load(path.c_str(), &back.p) == COMMIT_OK);
        commit_box bgt;
        commit_scene_ground_truth(back.p, &bgt);
        CHECK(bgt.x == gt.x);
        CHECK(bgt.r == gt.r);
    }
    SUBCASE("load errors")
    {
        Scene bad;
        CHECK(commit_scene_load("/nonexistent/scene.json", &bad.p) == COMMIT_IO);
        CHECK(bad.p == nullptr);
        auto const path = (temp_dir() / "broken.json").string();
        std::ofstream(path) << "{\"image\": [[0.1, 0.2]";
        CHECK(commit_scene_load(path.c_str(), &bad.p) == COMMIT_PARSE);
        CHECK(std::string(commit_last_error()).find("byte") != std::string::npos);
    }
    SUBCASE("transform")
    {
        Scene t;
        REQUIRE(commit_scene_transform(s.p, COMMIT_SHIFTING, 1.5, &t.p) == COMMIT_OK);
        commit_box tgt;
        commit_scene_ground_truth(t.p, &tgt);
        CHECK(tgt.z == gt.z + 1.5);
        CHECK(commit_scene_transform(s.p, commit_transform(7), 0, &t.p)
              == COMMIT_INVALID_ARGUMENT);
    }
}

TEST_CASE("geometry")
{
    commit_box const a{0, 0.5, 0, 1, 1, 1, 0};
    commit_box const b{0.5, 0.5, 0, 1, 1, 1, 0};
    double iou = 0;
    REQUIRE(commit_exact_iou(&a, &b, &iou) == COMMIT_OK);
    CHECK(std::abs(iou - 1.0 / 3.0) <= 1e-12);
    double bound = 0;
    REQUIRE(commit_iou_lower_bound(&b, &b, &a, &bound) == COMMIT_OK);
    CHECK(std::abs(bound - iou) <= 1e-9);
    commit_box const flat{0, 0, 0, 0, 1, 1, 0};
    CHECK(commit_exact_iou(&a, &flat, &iou) == COMMIT_INVALID_ARGUMENT);
    CHECK(commit_iou_lower_bound(&b, &a, &a, &bound) == COMMIT_INVALID_ARGUMENT);
}

TEST_CASE("builtin detector")
{
    Scene s;
    REQUIRE(commit_scene_generate(0, 0, &s.p) == COMMIT_OK);
    Det d;
    REQUIRE(commit_detector_builtin(&d.p) == COMMIT_OK);
    size_t count = 99;
    REQUIRE(commit_detector_detect(d.p, s.p, nullptr, 0, &count) == COMMIT_OK);
    REQUIRE(count >= 1);
    commit_detection out[8];
    REQUIRE(commit_detector_detect(d.p, s.p, out, 8, &count) == COMMIT_OK);
    CHECK(std::string(out[0].label) == "car");
    CHECK(out[0].score >= 0.9);
    CHECK(commit_detector_detect(d.p, s.p, nullptr, 1, &count) == COMMIT_INVALID_ARGUMENT);
}

TEST_CASE("external detector errors")
{
    Scene s;
    REQUIRE(commit_scene_generate(0, 0, &s.p) == COMMIT_OK);
    size_t count = 0;
    {
        Det d;
        REQUIRE(commit_detector_external(fake("fixed").c_str(), 5, 1, &d.p) == COMMIT_OK);
        commit_detection out[1];
        REQUIRE(commit_detector_detect(d.p, s.p, out, 1, &count) == COMMIT_OK);
        CHECK(out[0].box.z == 10.25);
        CHECK(out[0].score == 0.75);
    }
    {
        Det d;
        REQUIRE(commit_detector_external(fake("die").c_str(), 5, 1, &d.p) == COMMIT_OK);
        CHECK(commit_detector_detect(d.p, s.p, nullptr, 0, &count) == COMMIT_DETECTOR_DIED);
        CHECK(commit_detector_detect(d.p, s.p, nullptr, 0, &count) == COMMIT_DETECTOR_DIED);
    }
    {
        Det d;
        REQUIRE(commit_detector_external(fake("invalid-json").c_str(), 5, 1, &d.p) == COMMIT_OK);
        CHECK(commit_detector_detect(d.p, s.p, nullptr, 0, &count)
              == COMMIT_DETECTOR_PROTOCOL);
    }
    Det d;
    CHECK(commit_detector_external(fake("bad-handshake").c_str(), 5, 1, &d.p)
          == COMMIT_DETECTOR_PROTOCOL);
    CHECK(commit_detector_external(fake("silent").c_str(), 0.3, 1, &d.p)
          == COMMIT_DETECTOR_TIMEOUT);
    CHECK(commit_detector_external(fake("fixed").c_str(), 0, 1, &d.p)
          == COMMIT_INVALID_ARGUMENT);
    CHECK(d.p == nullptr);
}

TEST_CASE("certification entry points")
{
    Scene s;
    REQUIRE(commit_scene_generate(1, 0, &s.p) == COMMIT_OK);
    Det d;
    REQUIRE(commit_detector_builtin(&d.p) == COMMIT_OK);

    commit_certify_request req{};
    req.transform = COMMIT_ROTATION;
    req.lo = -0.2 * deg;
    req.hi = 0.2 * deg;
    req.cells = 4;
    req.smoothing = small_smoothing(100);
    req.eta = 0.5;
    req.threads = 2;

    commit_detection_result det{};
    REQUIRE(commit_certify_detection(d.p, s.p, &req, &det) == COMMIT_OK);
    CHECK(det.certified_lo > 0.5);
    CHECK(det.certified_lo <= det.median_clean);
    CHECK(det.certified_lo <= det.empirical_hi);
    CHECK(det.detected == 1);
    CHECK(det.uncertifiable_cells == 0);

    commit_iou_result iou{};
    REQUIRE(commit_certify_iou(d.p, s.p, &req, &iou) == COMMIT_OK);
    CHECK(iou.certified_iou > 0);
    CHECK(iou.certified_iou < 1);
    CHECK(iou.gt.z == 10);

    commit_attack_result atk{};
    REQUIRE(commit_attack(d.p, s.p, COMMIT_ROTATION, req.lo, req.hi, 0.1 * deg, &req.smoothing,
                          1, &atk)
            == COMMIT_OK);
    CHECK(atk.evaluations == 5);
    CHECK(atk.worst_confidence >= det.certified_lo);
    CHECK(atk.worst_iou >= iou.certified_iou);

    double conf = 0, clean_iou = 0;
    REQUIRE(commit_clean_values(d.p, s.p, &req.smoothing, 1, &conf, &clean_iou) == COMMIT_OK);
    CHECK(conf == det.median_clean);
    CHECK(clean_iou > 0.5);

    commit_interval const radii[] = {{-0.1 * deg, 0.1 * deg}, {-0.2 * deg, 0.2 * deg}};
    commit_sweep_row rows[2];
    REQUIRE(commit_benchmark(d.p, s.p, COMMIT_ROTATION, radii, 2, 0.1 * deg, 0.1 * deg,
                             &req.smoothing, 1, rows)
            == COMMIT_OK);
    CHECK(rows[0].cells == 2);
    CHECK(rows[1].cells == 4);
    CHECK(rows[1].certified_detection == det.certified_lo);
    CHECK(rows[1].certified_detection <= rows[0].certified_detection);
    CHECK(rows[1].certified_iou <= rows[0].certified_iou);
    CHECK(rows[0].clean_confidence == conf);

    SUBCASE("invalid requests")
    {
        commit_certify_request bad = req;
        bad.smoothing.samples = 0;
        CHECK(commit_certify_detection(d.p, s.p, &bad, &det) == COMMIT_INVALID_ARGUMENT);
        CHECK(std::string(commit_last_error()).find("samples") != std::string::npos);
        bad = req;
        bad.cells = 0;
        CHECK(commit_certify_iou(d.p, s.p, &bad, &iou) == COMMIT_INVALID_ARGUMENT);
        CHECK(commit_certify_detection(d.p, s.p, nullptr, &det) == COMMIT_INVALID_ARGUMENT);
        CHECK(commit_attack(d.p, s.p, COMMIT_ROTATION, 0, 1, 0, &req.smoothing, 1, &atk)
              == COMMIT_INVALID_ARGUMENT);
    }
}

TEST_CASE("partition check")
{
    Scene s;
    REQUIRE(commit_scene_generate(2, 0, &s.p) == COMMIT_OK);
    double const sizes[] = {0.001, 0.01};
    commit_partition_row rows[2];
    REQUIRE(commit_check_partition(s.p, COMMIT_SHIFTING, 0, 5, 0.01, sizes, 2, 20, 1, rows)
            == COMMIT_OK);
    CHECK(rows[0].size == 0.001);
    CHECK(rows[1].pairs == 20);
    CHECK(rows[1].point_violations == 0);
    CHECK(commit_check_partition(s.p, COMMIT_SHIFTING, 0, 5, 0.01, sizes, 0, 20, 1, rows)
          == COMMIT_INVALID_ARGUMENT);
}
