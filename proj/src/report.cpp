#include "pll/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "pll/text.hpp"

namespace pll {

void mean_std(const std::vector<double>& values, double& mean, double& std) {
    if (values.empty()) {
        mean = std::nan("");
        std = std::nan("");
        return;
    }
    const double n = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    mean = sum / n;
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    std = std::sqrt(sq / n);
}

std::string format_mean_std(double mean, double std) {
    if (!std::isfinite(mean)) return "n/a";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f(%.2f)", mean, std);
    return buf;
}

namespace {

std::string bool_field(bool b) { return b ? "on" : "off"; }

bool parse_bool_field(const std::string& s) {
    if (s == "on") return true;
    if (s == "off") return false;
    throw std::invalid_argument("expected on/off, got '" + s + "'");
}

std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path, const std::string& header) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != header) {
        throw std::runtime_error(path.string() + ": unexpected header, want '" + header + "'");
    }
    const std::size_t width = text::split(header, ',').size();
    std::vector<std::vector<std::string>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = text::split(line, ',');
        if (fields.size() != width) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(width) + " fields");
        }
        rows.push_back(std::move(fields));
    }
    return rows;
}

const char* kAggregateHeader = "method,ld,ambiguity,runs,failed,mean,std";

std::string cell_fields(const AggregateCell& c) {
    return c.method + ',' + bool_field(c.ld) + ',' + c.ambiguity + ',' + std::to_string(c.runs) + ',' +
           std::to_string(c.failed) + ',' + text::format_double(c.mean) + ',' + text::format_double(c.std);
}

AggregateCell parse_cell(const std::vector<std::string>& f) {
    AggregateCell c;
    c.method = f[0];
    c.ld = parse_bool_field(f[1]);
    c.ambiguity = f[2];
    c.runs = static_cast<std::size_t>(text::parse_int(f[3]));
    c.failed = static_cast<std::size_t>(text::parse_int(f[4]));
    c.mean = text::parse_double(f[5]);
    c.std = text::parse_double(f[6]);
    return c;
}

}  // namespace

void write_aggregate_csv(const std::filesystem::path& path, const AggregateTable& table) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kAggregateHeader << '\n';
    for (const auto& c : table.cells) out << cell_fields(c) << '\n';
}

AggregateTable read_aggregate_csv(const std::filesystem::path& path) {
    AggregateTable t;
    for (const auto& f : read_csv_rows(path, kAggregateHeader)) t.cells.push_back(parse_cell(f));
    return t;
}

// ---- published reference numbers ------------------------------------------

const std::vector<double>& reference_q_values() {
    static const std::vector<double> q = {0.2, 0.4, 0.6, 0.8, 0.9, 0.95};
    return q;
}

const std::vector<ReferenceRow>& reference_rows() {
    static const std::vector<ReferenceRow> rows = {
        {"Table 2", "Fully Supervised", "supervised", false, {63.08}, {13.87}},
        {"Table 2", "PRODEN", "proden", false,
         {58.55, 57.69, 53.87, 43.05, 32.37, 26.00}, {16.63, 15.99, 15.24, 14.76, 11.73, 10.72}},
        {"Table 2", "PRODEN", "proden", true,
         {59.73, 58.83, 55.87, 47.53, 37.58, 26.99}, {16.81, 16.12, 16.37, 14.06, 13.54, 10.32}},
        {"Table 2", "DNPL", "dnpl", false,
         {60.86, 60.37, 59.62, 59.42, 57.08, 49.44}, {16.64, 15.82, 16.45, 15.65, 16.46, 15.85}},
        {"Table 2", "LW", "lw-ce-b2", false,
         {60.64, 58.86, 55.97, 48.43, 36.09, 29.30}, {15.83, 16.03, 15.91, 14.00, 12.14, 11.57}},
        {"Table 2", "LW", "lw-ce-b2", true,
         {60.48, 60.83, 59.81, 54.61, 34.35, 22.12}, {16.75, 16.22, 16.30, 16.30, 17.91, 10.33}},
        {"Table 2", "CAVL", "cavl", false,
         {58.51, 57.60, 53.67, 43.03, 32.39, 26.03}, {16.63, 15.90, 15.24, 14.70, 11.66, 10.68}},
        {"Table 2", "CAVL", "cavl", true,
         {57.58, 54.94, 48.58, 30.75, 23.44, 21.72}, {16.52, 16.68, 15.64, 12.18, 8.19, 7.03}},
        {"Table 2", "CR", "cr", false,
         {42.42, 42.64, 41.22, 35.60, 30.70, 26.41}, {13.70, 14.37, 13.56, 12.62, 10.71, 9.27}},
        {"Table 2", "CR", "cr", true,
         {28.31, 28.55, 27.57, 22.68, 22.09, 20.94}, {10.08, 9.52, 9.57, 8.66, 7.90, 8.56}},
        {"Table 2", "PiCO", "pico", false,
         {57.23, 55.28, 49.95, 38.04, 28.34, 24.91}, {16.44, 16.71, 15.89, 12.82, 11.18, 10.26}},
        {"Table 2", "PiCO", "pico", true,
         {62.68, 61.92, 57.54, 43.87, 31.26, 24.69}, {15.88, 15.94, 15.59, 14.99, 11.52, 9.66}},

        {"Table 3", "LW-Sigmoid beta=0", "lw-sigmoid-b0", false,
         {35.68, 31.25, 26.79, 22.14, 22.47, 20.66}, {12.69, 11.01, 10.01, 9.22, 9.26, 8.84}},
        {"Table 3", "LW-Sigmoid beta=0", "lw-sigmoid-b0", true,
         {30.14, 27.88, 23.03, 20.98, 20.11, 20.00}, {10.52, 10.03, 8.03, 6.79, 6.52, 6.65}},
        {"Table 3", "LW-Sigmoid beta=1", "lw-sigmoid-b1", false,
         {57.44, 48.55, 34.54, 25.77, 24.35, 22.08}, {16.66, 15.32, 11.24, 9.85, 9.68, 9.62}},
        {"Table 3", "LW-Sigmoid beta=1", "lw-sigmoid-b1", true,
         {40.99, 33.97, 24.74, 20.75, 20.04, 20.61}, {23.27, 19.67, 10.24, 7.80, 6.99, 6.72}},
        {"Table 3", "LW-Sigmoid beta=2", "lw-sigmoid-b2", false,
         {36.72, 48.96, 49.51, 28.98, 24.54, 22.52}, {15.55, 18.35, 15.64, 11.12, 9.70, 9.40}},
        {"Table 3", "LW-Sigmoid beta=2", "lw-sigmoid-b2", true,
         {42.44, 37.82, 32.85, 21.56, 20.25, 20.53}, {23.89, 22.15, 19.30, 9.26, 6.91, 7.35}},
        {"Table 3", "LW-Cross Entropy beta=0", "lw-ce-b0", false,
         {59.44, 57.17, 53.93, 42.63, 31.81, 27.29}, {16.16, 16.03, 15.14, 14.17, 12.40, 11.04}},
        {"Table 3", "LW-Cross Entropy beta=0", "lw-ce-b0", true,
         {59.71, 58.85, 55.73, 48.13, 36.83, 27.81}, {16.81, 16.08, 16.23, 13.88, 13.21, 10.48}},
        {"Table 3", "LW-Cross Entropy beta=1", "lw-ce-b1", false,
         {60.14, 58.49, 55.58, 46.38, 33.95, 28.27}, {15.85, 16.13, 15.96, 14.55, 12.81, 11.14}},
        {"Table 3", "LW-Cross Entropy beta=1", "lw-ce-b1", true,
         {60.23, 60.01, 58.79, 51.48, 30.47, 22.05}, {16.84, 16.36, 16.14, 16.19, 15.87, 10.25}},
        {"Table 3", "LW-Cross Entropy beta=2", "lw-ce-b2", false,
         {60.64, 58.86, 55.97, 48.43, 36.09, 29.30}, {15.83, 16.03, 15.91, 14.00, 12.14, 11.57}},
        {"Table 3", "LW-Cross Entropy beta=2", "lw-ce-b2", true,
         {60.48, 60.83, 59.81, 54.61, 34.35, 22.12}, {16.75, 16.22, 16.30, 16.30, 17.91, 10.33}},

        {"Table 4", "PiCO CL off LD off", "pico-nocl", false,
         {59.35, 57.75, 53.13, 43.31, 33.30, 27.12}, {16.09, 16.27, 15.84, 13.41, 12.53, 10.52}},
        {"Table 4", "PiCO CL off LD on", "pico-nocl", true,
         {59.48, 58.77, 55.21, 45.93, 35.12, 25.81}, {16.27, 16.65, 16.52, 16.42, 13.51, 9.60}},
        {"Table 4", "PiCO CL on LD off", "pico", false,
         {57.23, 55.28, 49.95, 38.04, 28.34, 24.91}, {16.44, 16.71, 15.89, 12.82, 11.18, 10.26}},
        {"Table 4", "PiCO CL on LD on", "pico", true,
         {62.68, 61.92, 57.54, 43.87, 31.26, 24.69}, {15.88, 15.94, 15.59, 14.99, 11.52, 9.66}},
    };
    return rows;
}

std::optional<ReferenceValue> paper_reference(const std::string& method, bool ld, const std::string& ambiguity) {
    for (const auto& row : reference_rows()) {
        if (row.method != method) continue;
        const bool ld_free = method == "supervised" || method == "dnpl";
        if (!ld_free && row.ld != ld) continue;
        std::string suffix = row.label;
        if (!ld_free) suffix += ld ? " LD on" : " LD off";
        if (method == "supervised") {
            return ReferenceValue{row.means[0], row.stds[0], row.table + " " + suffix + " published SEED-V reference"};
        }
        const auto& qs = reference_q_values();
        for (std::size_t i = 0; i < qs.size(); ++i) {
            if (ambiguity == "q=" + text::format_double(qs[i])) {
                return ReferenceValue{row.means[i], row.stds[i],
                                      row.table + " " + suffix + " q=" + text::format_double(qs[i]) +
                                          " published SEED-V reference"};
            }
        }
    }
    return std::nullopt;
}

// ---- report -----------------------------------------------------------------

std::vector<ReportRow> build_report(const AggregateTable& table, bool with_reference) {
    std::vector<ReportRow> rows;
    for (const auto& c : table.cells) {
        ReportRow r{c, std::nullopt};
        if (with_reference) r.reference = paper_reference(c.method, c.ld, c.ambiguity);
        rows.push_back(std::move(r));
    }
    return rows;
}

namespace {

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

std::string render_aligned(const std::vector<std::vector<std::string>>& grid) {
    std::vector<std::size_t> widths;
    for (const auto& row : grid) {
        widths.resize(std::max(widths.size(), row.size()), 0);
        for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
    }
    std::string out;
    for (std::size_t r = 0; r < grid.size(); ++r) {
        std::string line;
        for (std::size_t i = 0; i < grid[r].size(); ++i) {
            line += i + 1 == grid[r].size() ? grid[r][i] : pad(grid[r][i], widths[i] + 2);
        }
        out += line + '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (auto w : widths) total += w + 2;
            out += std::string(total > 2 ? total - 2 : 0, '-') + '\n';
        }
    }
    return out;
}

}  // namespace

std::string render_report_text(const std::vector<ReportRow>& rows, bool with_reference) {
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header = {"method", "LD", "ambiguity", "runs", "failed", "accuracy mean(std)"};
    if (with_reference) {
        header.push_back(std::string("reference ") + kReferenceMarker);
        header.push_back("source");
    }
    grid.push_back(header);
    for (const auto& r : rows) {
        std::vector<std::string> line = {r.cell.method,
                                         bool_field(r.cell.ld),
                                         r.cell.ambiguity,
                                         std::to_string(r.cell.runs),
                                         std::to_string(r.cell.failed),
                                         format_mean_std(r.cell.mean, r.cell.std)};
        if (with_reference) {
            line.push_back(r.reference ? format_mean_std(r.reference->mean, r.reference->std) : "-");
            line.push_back(r.reference ? r.reference->source : "-");
        }
        grid.push_back(std::move(line));
    }
    std::string out = "Test accuracy (%) on the data given to the grid; mean(std) with the population std over\n"
                      "subjects x folds x seeds.\n\n";
    out += render_aligned(grid);
    if (with_reference) {
        out += "\nStored published SEED-V reference values (";
        out += kReferenceMarker;
        out += ").\nThey come from the access-restricted SEED-V dataset and are shown for orientation only;\n"
               "runs on synthetic data are not expected to match them.\n\n";
        std::vector<std::vector<std::string>> ref = {{"table", "row", "method", "LD"}};
        for (double q : reference_q_values()) ref[0].push_back("q=" + text::format_double(q));
        for (const auto& row : reference_rows()) {
            std::vector<std::string> line = {row.table, row.label, row.method,
                                             row.method == "supervised" || row.method == "dnpl" ? "-"
                                                                                                 : bool_field(row.ld)};
            for (std::size_t i = 0; i < row.means.size(); ++i) line.push_back(format_mean_std(row.means[i], row.stds[i]));
            ref.push_back(std::move(line));
        }
        out += render_aligned(ref);
    }
    return out;
}

namespace {

const char* kReportHeader = "method,ld,ambiguity,runs,failed,mean,std";
const char* kReportHeaderRef = "method,ld,ambiguity,runs,failed,mean,std,reference_mean,reference_std,reference_source";

}  // namespace

void write_report_csv(const std::filesystem::path& path, const std::vector<ReportRow>& rows, bool with_reference) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << (with_reference ? kReportHeaderRef : kReportHeader) << '\n';
    for (const auto& r : rows) {
        out << cell_fields(r.cell);
        if (with_reference) {
            if (r.reference) {
                out << ',' << text::format_double(r.reference->mean) << ',' << text::format_double(r.reference->std)
                    << ',' << r.reference->source;
            } else {
                out << ",,,";
            }
        }
        out << '\n';
    }
}

std::vector<ReportRow> read_report_csv(const std::filesystem::path& path) {
    std::string header;
    {
        std::ifstream in(path);
        if (!in || !std::getline(in, header)) throw std::runtime_error("cannot read " + path.string());
    }
    const bool with_reference = header == kReportHeaderRef;
    std::vector<ReportRow> rows;
    for (const auto& f : read_csv_rows(path, with_reference ? kReportHeaderRef : kReportHeader)) {
        ReportRow r{parse_cell(f), std::nullopt};
        if (with_reference && !f[7].empty()) {
            r.reference = ReferenceValue{text::parse_double(f[7]), text::parse_double(f[8]), f[9]};
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_report(const std::filesystem::path& dir, const AggregateTable& table, bool with_reference) {
    std::filesystem::create_directories(dir);
    const auto rows = build_report(table, with_reference);
    write_report_csv(dir / "report.csv", rows, with_reference);
    std::ofstream txt(dir / "report.txt");
    if (!txt) throw std::runtime_error("cannot write " + (dir / "report.txt").string());
    txt << render_report_text(rows, with_reference);
}

}  // namespace pll
