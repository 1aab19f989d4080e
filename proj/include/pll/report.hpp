#pragma once

// Aggregated accuracy tables and their CSV / aligned-text renderings, with optional
// side-by-side published SEED-V reference values.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pll {

/// One method × ambiguity × LD cell. Mean and std (population) are over subjects × folds × seeds.
struct AggregateCell {
    std::string method;     // variant key, e.g. "proden", "lw-ce-b2", "pico-nocl"
    bool ld = false;
    std::string ambiguity;  // "q=0.6", "wheel=<hash>" or "-" for fully supervised
    std::size_t runs = 0;    // successful runs
    std::size_t failed = 0;
    double mean = 0.0;
    double std = 0.0;

    bool operator==(const AggregateCell&) const = default;
};

struct AggregateTable {
    std::vector<AggregateCell> cells;
    bool operator==(const AggregateTable&) const = default;
};

/// Mean and population standard deviation.
void mean_std(const std::vector<double>& values, double& mean, double& std);

/// "59.73(16.81)".
std::string format_mean_std(double mean, double std);

void write_aggregate_csv(const std::filesystem::path& path, const AggregateTable& table);
AggregateTable read_aggregate_csv(const std::filesystem::path& path);

// ---- published reference numbers ------------------------------------------

inline constexpr const char* kReferenceMarker = "NOT-REPRODUCIBLE-AT-DESK-SCALE";

struct ReferenceValue {
    double mean = 0.0;
    double std = 0.0;
    std::string source;  // "Table 2 ..." citation
    bool operator==(const ReferenceValue&) const = default;
};

/// A stored row: accuracies at q = 0.2, 0.4, 0.6, 0.8, 0.9, 0.95 (a single value for the
/// fully supervised baseline).
struct ReferenceRow {
    std::string table;   // "Table 2", "Table 3", "Table 4"
    std::string label;   // row label as printed in that table
    std::string method;  // variant key
    bool ld = false;
    std::vector<double> means, stds;
};

const std::vector<double>& reference_q_values();
const std::vector<ReferenceRow>& reference_rows();

/// Published value for a cell, if one exists. Table 2 takes precedence over Tables 3 and 4.
std::optional<ReferenceValue> paper_reference(const std::string& method, bool ld, const std::string& ambiguity);

struct ReportRow {
    AggregateCell cell;
    std::optional<ReferenceValue> reference;
    bool operator==(const ReportRow&) const = default;
};

std::vector<ReportRow> build_report(const AggregateTable& table, bool with_reference);

/// report.csv and report.txt under `dir`.
void write_report(const std::filesystem::path& dir, const AggregateTable& table, bool with_reference);
std::string render_report_text(const std::vector<ReportRow>& rows, bool with_reference);
void write_report_csv(const std::filesystem::path& path, const std::vector<ReportRow>& rows, bool with_reference);
std::vector<ReportRow> read_report_csv(const std::filesystem::path& path);

}  // namespace pll
