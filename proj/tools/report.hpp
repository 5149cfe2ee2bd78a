#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>

namespace commit::report
{
struct ReportRow
{
    std::string scene;
    std::string transform;
    //! Certified range, "lo:hi" in the units given on the command line.
    std::string radius;
    //! "Det@80" style detection rows or "AP@50" style IoU rows.
    std::string metric;
    //! Missing values print as empty fields.
    std::optional<double> certified;
    std::optional<double> empirical;
    std::optional<double> clean;
    double runtime_s{0};
    std::size_t cells{0};
    std::size_t n{0};
    double alpha{0};
};

inline constexpr char const* header
    = "scene,transform,radius,metric,certified,empirical,clean,runtime_s,cells,n,alpha";

//! Fixed six-decimal rendering; negative zero prints as zero.
std::string format_number(double value);

//! Header plus one line per row, in input order, newline-terminated.
std::string format_report(std::span<ReportRow const> rows);

//! Throws std::invalid_argument for no rows, std::runtime_error if unwritable.
void write_report(std::span<ReportRow const> rows, std::filesystem::path const& path);

}  // namespace commit::report
