#pragma once

// Experiment grid: method × ambiguity × LD × subject × fold × seed.
//
// Config is a flat key = value file:
//   data       = synth.csv                  (relative paths resolve against the config file)
//   methods    = supervised, dnpl, proden, cavl, lw, cr, pico
//   ld         = both                       (off | on | both)
//   ambiguity  = uniform                    (uniform | similarity)
//   q          = 0.2, 0.4, 0.6, 0.8, 0.9, 0.95
//   wheel      = wheel.txt                  (similarity only; default wheel when absent)
//   subjects   = all                        (or a list of ids)
//   folds      = 1, 2, 3
//   seeds      = 0, 1, 2, 3, 4
//   epochs = 30, batch_size = 8, learning_rate = 0.01, scheduler = cosine, threads = 1,
//   track_best_epoch = false
//
// Method tokens: supervised, dnpl, proden, cavl, cr, pico, pico-nocl, lw (= lw-ce-b2) or
// lw-<sigmoid|ce>-b<0|1|2>. A "+ld" suffix pins LD on for that token regardless of `ld`.

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pll/data.hpp"
#include "pll/harness.hpp"
#include "pll/report.hpp"

namespace pll {

/// MethodConfig from a token such as "lw-sigmoid-b1" or "pico-nocl".
MethodConfig parse_method_token(const std::string& token);

struct GridConfig {
    std::filesystem::path data;
    std::vector<MethodConfig> methods;      // one entry per (token, LD) combination
    std::vector<AmbiguitySpec> ambiguities;
    std::vector<int> subjects;               // empty = every subject of the dataset
    std::vector<int> folds = {1, 2, 3};
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    RunSpec base;                            // epochs, batch size, optimizer settings
    std::size_t threads = 1;

    static GridConfig from_key_values(const std::map<std::string, std::string>& kv,
                                      const std::filesystem::path& base_dir = {});
    static GridConfig load(const std::filesystem::path& path);
};

struct GridRun {
    std::string method;
    bool ld = false;
    std::string ambiguity;
    int subject = 0;
    int fold = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    double accuracy = 0.0;
    std::string error;
    std::string result_json;  // empty on failure
};

struct GridOutcome {
    std::vector<GridRun> runs;
    AggregateTable table;
};

/// One cell per (method, LD, ambiguity), in the order the grid enumerates them.
AggregateTable aggregate_runs(const std::vector<GridRun>& runs);

/// Runs every cell; independent runs execute on `config.threads` workers. Failures are
/// recorded per run and counted per cell.
GridOutcome run_grid(const GridConfig& config, const Dataset& data);

/// runs.csv, aggregate.csv and runs/<id>.json under `dir`.
void write_grid_outputs(const std::filesystem::path& dir, const GridOutcome& outcome);

}  // namespace pll
