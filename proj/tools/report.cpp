#include "report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace commit::report
{
namespace
{
std::string field(std::string const& text)
{
    if (text.find_first_of(",\"\n\r") == std::string::npos)
        return text;
    std::string out = "\"";
    for (char c : text)
    {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

std::string optional_number(std::optional<double> const& v)
{
    return v ? format_number(*v) : std::string();
}
}  // namespace

std::string format_number(double value)
{
    if (std::isnan(value))
        return "nan";
    if (std::isinf(value))
        return value > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", value);
    std::string out = buf;
    if (out == "-0.000000")
        out = "0.000000";
    return out;
}

std::string format_report(std::span<ReportRow const> rows)
{
    std::string out = std::string(header) + "\n";
    for (auto const& r : rows)
    {
        out += field(r.scene) + ',' + field(r.transform) + ',' + field(r.radius) + ','
               + field(r.metric) + ',' + optional_number(r.certified) + ','
               + optional_number(r.empirical) + ',' + optional_number(r.clean) + ','
               + format_number(r.runtime_s) + ',' + std::to_string(r.cells) + ','
               + std::to_string(r.n) + ',' + format_number(r.alpha) + '\n';
    }
    return out;
}

void write_report(std::span<ReportRow const> rows, std::filesystem::path const& path)
{
    if (rows.empty())
        throw std::invalid_argument("report: no rows to write");
    std::string const text = format_report(rows);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("report: cannot open " + path.string() + " for writing");
    out << text;
    out.flush();
    if (!out)
        throw std::runtime_error("report: write to " + path.string() + " failed");
}

}  // namespace commit::report
