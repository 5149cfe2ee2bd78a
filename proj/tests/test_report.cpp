#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>
#include <vector>

#include "doctest.h"
#include "report.hpp"

using namespace commit::report;

namespace
{
ReportRow sample_row()
{
    ReportRow r;
    r.scene = "s";
    r.transform = "rotation";
    r.radius = "-30:30";
    r.metric = "Det@80";
    r.certified = 0.5323;
    r.empirical = 0.91;
    r.clean = 0.93;
    r.runtime_s = 0;
    r.cells = 600;
    r.n = 1000;
    r.alpha = 0.05;
    return r;
}

std::string slurp(std::filesystem::path const& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path temp_file(std::string const& name)
{
    return std::filesystem::temp_directory_path()
           / ("commit_report_" + std::to_string(::getpid()) + "_" + name);
}
}  // namespace

TEST_CASE("number formatting")
{
    CHECK(format_number(0.5323) == "0.532300");
    CHECK(format_number(1) == "1.000000");
    CHECK(format_number(-0.0) == "0.000000");
    CHECK(format_number(-1e-9) == "0.000000");
    CHECK(format_number(-0.25) == "-0.250000");
    CHECK(format_number(1.0 / 0.0) == "inf");
}

TEST_CASE("one row gives header plus one line")
{
    ReportRow const row = sample_row();
    std::vector<ReportRow> const rows{row};
    std::string const text = format_report(rows);
    CHECK(text
          == "scene,transform,radius,metric,certified,empirical,clean,runtime_s,cells,n,alpha\n"
             "s,rotation,-30:30,Det@80,0.532300,0.910000,0.930000,0.000000,600,1000,0.050000\n");

    auto const path = temp_file("one.csv");
    write_report(rows, path);
    CHECK(slurp(path) == text);
    write_report(rows, path);
    CHECK(slurp(path) == text);
    std::filesystem::remove(path);
}

TEST_CASE("missing values, quoting and order")
{
    ReportRow a = sample_row();
    a.empirical.reset();
    ReportRow b = sample_row();
    b.scene = "odd,\"name\"";
    b.metric = "AP@50";
    std::vector<ReportRow> const rows{a, b};
    std::string const text = format_report(rows);
    CHECK(text.find("Det@80,0.532300,,0.930000") != std::string::npos);
    CHECK(text.find("\"odd,\"\"name\"\"\",rotation") != std::string::npos);
    CHECK(text.find("Det@80") < text.find("AP@50"));
}

TEST_CASE("write errors")
{
    std::vector<ReportRow> const none;
    CHECK_THROWS_AS(write_report(none, temp_file("none.csv")), std::invalid_argument);
    std::vector<ReportRow> const rows{sample_row()};
    CHECK_THROWS_AS(write_report(rows, "/nonexistent/dir/out.csv"), std::runtime_error);
}
