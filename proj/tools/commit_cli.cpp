// commit-cli: scene generation, certification, attacks and assumption checks
// on top of the C interface.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commit/commit.h"
#include "json.hpp"
#include "report.hpp"

namespace
{
using nlohmann::json;
using commit::report::ReportRow;

constexpr double deg = std::numbers::pi / 180;

enum Exit
{
    exit_ok = 0,
    exit_config = 1,
    exit_runtime = 2,
};

// Error carrying the process exit code.
struct Failure
{
    int code;
    std::string message;
};

[[noreturn]] void config_error(std::string message)
{
    throw Failure{exit_config, std::move(message)};
}

// Library failures: bad inputs and unreadable files are configuration
// errors, everything else happened while running.
void check(commit_status status)
{
    if (status == COMMIT_OK)
        return;
    int const code = status == COMMIT_INVALID_ARGUMENT || status == COMMIT_PARSE
                             || status == COMMIT_IO
                         ? exit_config
                         : exit_runtime;
    throw Failure{code, std::string(commit_status_name(status)) + ": " + commit_last_error()};
}

// JSON config files: a flat object whose keys are long flag names, with
// dashes or underscores. Arrays become repeated values.
class JsonConfig : public CLI::Config
{
  public:
    explicit JsonConfig(CLI::App const* root) : root_(root) {}

    std::string to_config(CLI::App const* app, bool default_also, bool, std::string) const override
    {
        json out = json::object();
        for (CLI::Option const* opt : app->get_options())
        {
            if (opt->get_lnames().empty() || opt->get_configurable() == false)
                continue;
            std::string const name = opt->get_lnames()[0];
            if (opt->count() > 0)
                out[name] = opt->as<std::string>();
            else if (default_also && !opt->get_default_str().empty())
                out[name] = opt->get_default_str();
        }
        return out.dump(2) + "\n";
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override
    {
        json j;
        try
        {
            j = json::parse(input);
        }
        catch (json::parse_error const& e)
        {
            throw CLI::ConversionError("config: malformed JSON at byte " + std::to_string(e.byte));
        }
        if (!j.is_object())
            throw CLI::ConversionError("config: expected a JSON object");
        std::vector<CLI::ConfigItem> items;
        for (auto const& [key, value] : j.items())
        {
            CLI::ConfigItem item;
            item.parents = scope();
            item.name = key;
            for (char& c : item.name)
                c = c == '_' ? '-' : c;
            auto text = [&](json const& v) -> std::string {
                if (v.is_string())
                    return v.get<std::string>();
                if (v.is_boolean())
                    return v.get<bool>() ? "true" : "false";
                if (v.is_number())
                    return v.dump();
                throw CLI::ConversionError("config." + key
                                           + ": expected a string, number or boolean");
            };
            if (value.is_array())
            {
                for (auto const& v : value)
                    item.inputs.push_back(text(v));
            }
            else
            {
                item.inputs.push_back(text(value));
            }
            items.push_back(std::move(item));
        }
        return items;
    }

  private:
    // Keys belong to the subcommand on the command line.
    std::vector<std::string> scope() const
    {
        for (CLI::App const* sub : root_->get_subcommands())
            if (sub->parsed())
                return {sub->get_name()};
        return {};
    }

    CLI::App const* root_;
};

std::pair<double, double> parse_range(std::string const& text, char const* field)
{
    auto const colon = text.find(':');
    if (colon == std::string::npos)
        config_error(std::string(field) + ": expected lo:hi, got '" + text + "'");
    try
    {
        std::size_t used = 0;
        std::string const a = text.substr(0, colon), b = text.substr(colon + 1);
        double const lo = std::stod(a, &used);
        if (used != a.size())
            throw std::invalid_argument(a);
        double const hi = std::stod(b, &used);
        if (used != b.size())
            throw std::invalid_argument(b);
        if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi)
            config_error(std::string(field) + ": need finite lo <= hi, got '" + text + "'");
        return {lo, hi};
    }
    catch (std::logic_error const&)
    {
        config_error(std::string(field) + ": expected lo:hi, got '" + text + "'");
    }
}

std::string format_plain(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string range_label(std::pair<double, double> r)
{
    return format_plain(r.first) + ":" + format_plain(r.second);
}

std::string percent_label(char const* prefix, double threshold)
{
    return prefix + format_plain(std::round(threshold * 100 * 1e6) / 1e6);
}

struct SceneHandle
{
    commit_scene* p{nullptr};
    ~SceneHandle() { commit_scene_free(p); }
};

struct DetectorHandle
{
    commit_detector* p{nullptr};
    ~DetectorHandle() { commit_detector_free(p); }
};

// Settings shared by the certification subcommands.
struct RunSettings
{
    std::string scene;
    std::string transform{"rotation"};
    std::string range;
    std::size_t grid{0};
    std::size_t samples{1000};
    std::optional<double> sigma_x;
    std::optional<double> sigma_p;
    double alpha{0.05};
    double eta{0.8};
    double iou_threshold{0.5};
    std::uint64_t seed{0};
    std::string out;
    std::size_t threads{0};
    std::optional<double> step;
    std::string detector_cmd;
    double detector_timeout{30};
    std::size_t detector_pool{1};
    bool timing{false};
    std::string radii;
    std::string metric{"both"};
};

void add_run_options(CLI::App* cmd, RunSettings& s)
{
    cmd->add_option("--scene", s.scene, "Scene JSON file");
    cmd->add_option("--transform", s.transform, "rotation or shifting")
        ->check(CLI::IsMember({"rotation", "shifting"}));
    cmd->add_option("--range", s.range,
                    "lo:hi; degrees for rotation, distance in meters for shifting "
                    "(default -30:30 or 10:15)");
    cmd->add_option("--grid", s.grid, "Number of cells (default: 0.1 deg or 0.01 m cells)");
    cmd->add_option("--samples", s.samples, "Noise samples per cell")->capture_default_str();
    cmd->add_option("--sigma-x", s.sigma_x, "Image noise (default 0.25 rotation, 0.5 shifting)");
    cmd->add_option("--sigma-p", s.sigma_p, "Point noise (default 0.25 rotation, 0.5 shifting)");
    cmd->add_option("--alpha", s.alpha, "Total failure probability")->capture_default_str();
    cmd->add_option("--eta", s.eta, "Detection threshold")->capture_default_str();
    cmd->add_option("--iou-threshold", s.iou_threshold, "Threshold named in AP@ labels")
        ->capture_default_str();
    cmd->add_option("--seed", s.seed, "Seed for all randomness")->capture_default_str();
    cmd->add_option("--out", s.out, "CSV output path (default: standard output)");
    cmd->add_option("--threads", s.threads, "Worker cap, 0 = all cores")->capture_default_str();
    cmd->add_option("--detector-cmd", s.detector_cmd,
                    "External detector command line (default: builtin detector)");
    cmd->add_option("--detector-timeout", s.detector_timeout, "Seconds per detector reply")
        ->capture_default_str();
    cmd->add_option("--detector-pool", s.detector_pool, "External detector processes")
        ->capture_default_str();
    cmd->add_flag("--timing", s.timing, "Record wall-clock runtime in the CSV");
}

// Resolved numeric view of RunSettings.
struct Run
{
    RunSettings const& s;
    commit_transform transform;
    bool rotation;
    std::pair<double, double> user_range;
    commit_smoothing smoothing{};
    double unit;  // user units to parameter units
    std::string scene_id;
    SceneHandle scene;
    commit_box gt{};
    DetectorHandle detector;

    explicit Run(RunSettings const& settings) : s(settings)
    {
        if (s.scene.empty())
            config_error("scene: required");
        rotation = s.transform == "rotation";
        transform = rotation ? COMMIT_ROTATION : COMMIT_SHIFTING;
        unit = rotation ? deg : 1.0;
        user_range = parse_range(s.range.empty() ? (rotation ? "-30:30" : "10:15") : s.range,
                                 "range");
        commit_smoothing_defaults(&smoothing);
        double const sigma = rotation ? 0.25 : 0.5;
        smoothing.sigma_x = s.sigma_x.value_or(sigma);
        smoothing.sigma_p = s.sigma_p.value_or(sigma);
        smoothing.samples = s.samples;
        smoothing.alpha = s.alpha;
        smoothing.seed = s.seed;
        if (!s.out.empty())
        {
            auto const parent = std::filesystem::path(s.out).parent_path();
            if (!parent.empty() && !std::filesystem::is_directory(parent))
                config_error("out: directory " + parent.string() + " does not exist");
        }

        scene_id = std::filesystem::path(s.scene).stem().string();
        check(commit_scene_load(s.scene.c_str(), &scene.p));
        check(commit_scene_ground_truth(scene.p, &gt));
    }

    // Parameter interval for a user range: radians, or displacement from gt.
    std::pair<double, double> params(std::pair<double, double> r) const
    {
        if (rotation)
            return {r.first * deg, r.second * deg};
        return {r.first - gt.z, r.second - gt.z};
    }

    std::size_t default_cells(std::pair<double, double> r) const
    {
        double const cell = rotation ? 0.1 : 0.01;
        return std::max<std::size_t>(1, std::size_t(std::llround(std::ceil(
                                            (r.second - r.first) / cell - 1e-9))));
    }

    double step() const
    {
        double const v = s.step.value_or(rotation ? 0.1 : 0.01);
        if (!(v > 0))
            config_error("step: must be positive");
        return v * unit;
    }

    void open_detector()
    {
        if (s.detector_cmd.empty())
            check(commit_detector_builtin(&detector.p));
        else
            check(commit_detector_external(s.detector_cmd.c_str(), s.detector_timeout,
                                           std::max<std::size_t>(1, s.detector_pool),
                                           &detector.p));
    }

    ReportRow row(std::string metric, std::size_t cells, double seconds) const
    {
        ReportRow r;
        r.scene = scene_id;
        r.transform = s.transform;
        r.radius = range_label(user_range);
        r.metric = std::move(metric);
        r.runtime_s = s.timing ? seconds : 0.0;
        r.cells = cells;
        r.n = s.samples;
        r.alpha = s.alpha;
        return r;
    }

    void emit(std::vector<ReportRow> const& rows) const
    {
        if (s.out.empty() || s.out == "-")
        {
            std::cout << commit::report::format_report(rows);
            return;
        }
        try
        {
            commit::report::write_report(rows, s.out);
        }
        catch (std::exception const& e)
        {
            throw Failure{exit_runtime, e.what()};
        }
    }
};

class Stopwatch
{
  public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

commit_certify_request make_request(Run const& run, std::size_t cells)
{
    auto const p = run.params(run.user_range);
    commit_certify_request req{};
    req.transform = run.transform;
    req.lo = p.first;
    req.hi = p.second;
    req.cells = cells;
    req.smoothing = run.smoothing;
    req.eta = run.s.eta;
    req.threads = run.s.threads;
    return req;
}

void run_certify_detection(RunSettings const& s)
{
    Run run(s);
    run.open_detector();
    std::size_t const cells = s.grid ? s.grid : run.default_cells(run.user_range);
    Stopwatch clock;
    commit_certify_request const req = make_request(run, cells);
    commit_detection_result res{};
    check(commit_certify_detection(run.detector.p, run.scene.p, &req, &res));
    ReportRow row = run.row(percent_label("Det@", s.eta), cells, clock.seconds());
    row.certified = res.certified_lo;
    row.clean = res.median_clean;
    run.emit({row});
    std::cerr << "certified confidence " << res.certified_lo << " ("
              << (res.detected ? "detected" : "not detected") << " at eta " << s.eta << ", "
              << res.uncertifiable_cells << " uncertifiable cells)\n";
}

void run_certify_iou(RunSettings const& s)
{
    Run run(s);
    run.open_detector();
    std::size_t const cells = s.grid ? s.grid : run.default_cells(run.user_range);
    Stopwatch clock;
    commit_certify_request const req = make_request(run, cells);
    commit_iou_result res{};
    check(commit_certify_iou(run.detector.p, run.scene.p, &req, &res));
    double conf = 0, clean_iou = 0;
    check(commit_clean_values(run.detector.p, run.scene.p, &run.smoothing, s.threads, &conf,
                              &clean_iou));
    ReportRow row = run.row(percent_label("AP@", s.iou_threshold), cells, clock.seconds());
    row.certified = res.certified_iou;
    row.clean = clean_iou;
    run.emit({row});
    std::cerr << "certified IoU " << res.certified_iou << " (" << res.uncertifiable_cells
              << " uncertifiable cells)\n";
}

void run_attack(RunSettings const& s)
{
    Run run(s);
    run.open_detector();
    Stopwatch clock;
    auto const p = run.params(run.user_range);
    commit_attack_result res{};
    check(commit_attack(run.detector.p, run.scene.p, run.transform, p.first, p.second,
                        run.step(), &run.smoothing, s.threads, &res));
    double conf = 0, clean_iou = 0;
    check(commit_clean_values(run.detector.p, run.scene.p, &run.smoothing, s.threads, &conf,
                              &clean_iou));
    double const seconds = clock.seconds();
    std::vector<ReportRow> rows;
    if (s.metric != "iou")
    {
        ReportRow row = run.row(percent_label("Det@", s.eta), res.evaluations, seconds);
        row.empirical = res.worst_confidence;
        row.clean = conf;
        rows.push_back(row);
    }
    if (s.metric != "confidence")
    {
        ReportRow row = run.row(percent_label("AP@", s.iou_threshold), res.evaluations, seconds);
        row.empirical = res.worst_iou;
        row.clean = clean_iou;
        rows.push_back(row);
    }
    run.emit(rows);
    std::cerr << "worst confidence " << res.worst_confidence << " at "
              << format_plain(run.rotation ? res.argmin_confidence / deg
                                           : res.argmin_confidence + run.gt.z)
              << ", worst IoU " << res.worst_iou << " over " << res.evaluations
              << " parameters\n";
}

std::vector<std::pair<double, double>> parse_radii(Run const& run, std::string const& text)
{
    std::string spec = text;
    if (spec.empty())
        spec = run.rotation ? "10,15,20,25,30" : "10:11,10:12,10:13,10:14,10:15";
    std::vector<std::pair<double, double>> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ','))
    {
        if (item.find(':') != std::string::npos)
        {
            out.push_back(parse_range(item, "radii"));
            continue;
        }
        // A bare number R means the symmetric range -R:R.
        double r = 0;
        try
        {
            std::size_t used = 0;
            r = std::stod(item, &used);
            if (used != item.size())
                throw std::invalid_argument(item);
        }
        catch (std::logic_error const&)
        {
            config_error("radii: expected R or lo:hi, got '" + item + "'");
        }
        if (!(r >= 0) || !std::isfinite(r))
            config_error("radii: radius must be non-negative, got '" + item + "'");
        out.push_back({-r, r});
    }
    if (out.empty())
        config_error("radii: at least one range required");
    return out;
}

void run_benchmark(RunSettings const& s)
{
    Run run(s);
    auto const radii = parse_radii(run, s.radii);
    std::pair<double, double> hull = radii[0];
    for (auto const& r : radii)
    {
        hull.first = std::min(hull.first, r.first);
        hull.second = std::max(hull.second, r.second);
    }
    std::size_t const cells = s.grid ? s.grid : run.default_cells(hull);
    auto const hull_params = run.params(hull);
    double const cell_width = (hull_params.second - hull_params.first) / double(cells);

    run.open_detector();
    Stopwatch clock;
    std::vector<commit_interval> ranges;
    for (auto const& r : radii)
    {
        auto const p = run.params(r);
        ranges.push_back({p.first, p.second});
    }
    std::vector<commit_sweep_row> sweep(ranges.size());
    check(commit_benchmark(run.detector.p, run.scene.p, run.transform, ranges.data(),
                           ranges.size(), cell_width, run.step(), &run.smoothing, s.threads,
                           sweep.data()));
    double const seconds = clock.seconds();

    std::vector<ReportRow> rows;
    for (std::size_t i = 0; i < sweep.size(); ++i)
    {
        auto const& r = sweep[i];
        ReportRow det = run.row(percent_label("Det@", s.eta), r.cells, seconds);
        det.radius = range_label(radii[i]);
        det.certified = r.certified_detection;
        det.empirical = r.empirical_confidence;
        det.clean = r.clean_confidence;
        rows.push_back(det);
        ReportRow iou = run.row(percent_label("AP@", s.iou_threshold), r.cells, seconds);
        iou.radius = range_label(radii[i]);
        iou.certified = r.certified_iou;
        iou.empirical = r.empirical_iou;
        iou.clean = r.clean_iou;
        rows.push_back(iou);
    }
    run.emit(rows);
}

void run_check_partition(RunSettings const& s, std::string const& sizes_text,
                         std::optional<double> tau_user, std::size_t pairs)
{
    Run run(s);
    auto const p = run.params(run.user_range);
    double const tau = tau_user.value_or(run.rotation ? 0.1 : 0.01);
    std::string const sizes_spec = sizes_text.empty()
                                       ? (run.rotation ? "0.001,0.01,0.05,0.1" : "0.001,0.005,0.01")
                                       : sizes_text;
    std::vector<double> sizes;
    std::stringstream ss(sizes_spec);
    std::string item;
    while (std::getline(ss, item, ','))
    {
        try
        {
            std::size_t used = 0;
            sizes.push_back(std::stod(item, &used) * run.unit);
            if (used != item.size())
                throw std::invalid_argument(item);
        }
        catch (std::logic_error const&)
        {
            config_error("sizes: expected a number, got '" + item + "'");
        }
    }
    std::vector<commit_partition_row> rows(sizes.size());
    check(commit_check_partition(run.scene.p, run.transform, p.first, p.second, tau * run.unit,
                                 sizes.data(), sizes.size(), pairs, s.seed, rows.data()));

    std::ostringstream out;
    out << "scene,transform,range,size,pairs,image_violations,point_violations,"
           "image_violation_rate,point_violation_rate,max_image_ratio,max_point_ratio,"
           "mean_image_ratio,mean_point_ratio\n";
    using commit::report::format_number;
    for (auto const& r : rows)
    {
        double const n = r.pairs ? double(r.pairs) : 1.0;
        out << run.scene_id << ',' << s.transform << ',' << range_label(run.user_range) << ','
            << format_plain(r.size / run.unit) << ',' << r.pairs << ',' << r.image_violations
            << ',' << r.point_violations << ',' << format_number(r.image_violations / n) << ','
            << format_number(r.point_violations / n) << ',' << format_number(r.max_image_ratio)
            << ',' << format_number(r.max_point_ratio) << ','
            << format_number(r.mean_image_ratio) << ',' << format_number(r.mean_point_ratio)
            << '\n';
    }
    if (s.out.empty() || s.out == "-")
    {
        std::cout << out.str();
        return;
    }
    std::ofstream file(s.out, std::ios::binary | std::ios::trunc);
    file << out.str();
    if (!file)
        throw Failure{exit_runtime, "out: cannot write " + s.out};
}

// "--range -30:30" would otherwise read as a short option; glue such values
// to their flag.
std::vector<std::string> glue_negative_values(int argc, char** argv)
{
    static std::string const value_flags[] = {"--range", "--radii", "--sizes"};
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i)
    {
        std::string const a = argv[i];
        bool const takes_value
            = std::find(std::begin(value_flags), std::end(value_flags), a) != std::end(value_flags);
        if (takes_value && i + 1 < argc && argv[i + 1][0] == '-' && argv[i + 1][1] != '-')
        {
            args.push_back(a + "=" + argv[++i]);
            continue;
        }
        args.push_back(a);
    }
    return args;
}
}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Certified bounds for multi-sensor detectors under rotation and shifting",
                 "commit-cli"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "JSON file with option values; flags override it");
    app.config_formatter(std::make_shared<JsonConfig>(&app));
    app.allow_config_extras(CLI::config_extras_mode::error);

    std::string gen_out;
    std::uint64_t gen_seed = 0;
    bool gen_randomize = false;
    CLI::App* gen = app.add_subcommand("gen-scene", "Write a synthetic scene");
    gen->add_option("--out", gen_out, "Scene JSON path");
    gen->add_option("--seed", gen_seed, "Scene seed")->capture_default_str();
    gen->add_flag("--randomize", gen_randomize, "Draw the vehicle pose and size from the seed");

    RunSettings det_s, iou_s, atk_s, bench_s, part_s;
    CLI::App* det = app.add_subcommand("certify-detection", "Certify the detection confidence");
    add_run_options(det, det_s);

    CLI::App* iou = app.add_subcommand("certify-iou", "Certify the IoU with the ground truth");
    add_run_options(iou, iou_s);

    CLI::App* atk = app.add_subcommand("attack", "Grid attack on the smoothed detector");
    add_run_options(atk, atk_s);
    atk->add_option("--step", atk_s.step, "Parameter step (degrees or meters)");
    atk->add_option("--metric", atk_s.metric, "confidence, iou or both")
        ->check(CLI::IsMember({"confidence", "iou", "both"}))
        ->capture_default_str();

    CLI::App* bench = app.add_subcommand("benchmark", "Certify and attack nested ranges");
    add_run_options(bench, bench_s);
    bench->add_option("--radii", bench_s.radii,
                      "Comma list of R (meaning -R:R) or lo:hi ranges "
                      "(default 10,...,30 deg or 10:11,...,10:15 m)");
    bench->add_option("--step", bench_s.step, "Attack step (degrees or meters)");

    std::string part_sizes;
    std::optional<double> part_tau;
    std::size_t part_pairs = 100;
    CLI::App* part = app.add_subcommand("check-partition",
                                        "Check the interpolation bound on random pairs");
    add_run_options(part, part_s);
    part->add_option("--sizes", part_sizes, "Comma list of interval sizes (degrees or meters)");
    part->add_option("--tau", part_tau, "Grid cell width (default 0.1 deg or 0.01 m)");
    part->add_option("--pairs", part_pairs, "Pairs per size")->capture_default_str();

    try
    {
        auto args = glue_negative_values(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    }
    catch (CLI::CallForHelp const& e)
    {
        return app.exit(e);
    }
    catch (CLI::CallForAllHelp const& e)
    {
        return app.exit(e);
    }
    catch (CLI::ConfigError const& e)
    {
        std::string message = e.what();
        std::string const prefix = "INI was not able to parse ";
        if (message.rfind(prefix, 0) == 0)
            message = "config: unknown option '" + message.substr(message.rfind('.') + 1) + "'";
        std::cerr << "error: " << message << "\n";
        return exit_config;
    }
    catch (CLI::ParseError const& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    }

    try
    {
        if (gen->parsed())
        {
            if (gen_out.empty())
                config_error("out: required");
            SceneHandle scene;
            check(commit_scene_generate(gen_seed, gen_randomize ? 1 : 0, &scene.p));
            commit_status const st = commit_scene_save(scene.p, gen_out.c_str());
            if (st == COMMIT_IO)
                throw Failure{exit_config, std::string("out: ") + commit_last_error()};
            check(st);
        }
        else if (det->parsed())
            run_certify_detection(det_s);
        else if (iou->parsed())
            run_certify_iou(iou_s);
        else if (atk->parsed())
            run_attack(atk_s);
        else if (bench->parsed())
            run_benchmark(bench_s);
        else if (part->parsed())
            run_check_partition(part_s, part_sizes, part_tau, part_pairs);
    }
    catch (Failure const& f)
    {
        std::cerr << "error: " << f.message << "\n";
        return f.code;
    }
    catch (std::exception const& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return exit_runtime;
    }
    return exit_ok;
}
