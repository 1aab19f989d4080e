#pragma once

// DE-feature datasets: synthetic generation, CSV ingestion, min-max scaling and the
// trial-position 3-fold protocol.
//
// File format (one sample per row, UTF-8):
//   subject,session,trial,segment,label,f000,...,f309
// Sessions are numbered 1..3, trials 1..15, labels 0..4 in the class order of labels.hpp.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace pll {

inline constexpr int kSessions = 3;
inline constexpr int kTrialsPerSession = 15;
inline constexpr int kFolds = 3;
inline constexpr int kTrialsPerFold = kTrialsPerSession / kFolds;

struct Sample {
    int subject = 1;
    int session = 1;
    int trial = 1;
    int segment = 1;
    std::size_t label = 0;
    std::vector<double> features;

    bool operator==(const Sample&) const = default;
};

struct Dataset {
    std::size_t feature_count = 0;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    /// Distinct subject ids, ascending.
    std::vector<int> subjects() const;
    /// Row indices of one subject, in file order.
    std::vector<std::size_t> subject_indices(int subject) const;
    /// FNV-1a over the exact bytes of every field.
    std::string fingerprint() const;
    bool operator==(const Dataset&) const = default;
};

struct SynthConfig {
    int subjects = 1;
    int segments = 30;          // per trial
    std::size_t features = 310;
    std::size_t classes = 5;
    double separation = 1.0;    // scale of the class means drawn on the unit cube
    double noise = 1.0;         // within-class standard deviation
    std::uint64_t seed = 0;

    void validate() const;
    std::map<std::string, std::string> to_key_values() const;
    static SynthConfig from_key_values(const std::map<std::string, std::string>& kv);
};

/// Class of a trial: each session cycles through the classes with a session-dependent
/// offset, so every fold holds each class once per session.
std::size_t trial_class(int session, int trial, std::size_t classes = 5);

/// 3 sessions × 15 trials × `segments` samples per subject. Features are class-conditional
/// Gaussians around per-subject means, then min-max scaled per subject to [0, 1].
Dataset synth_generate(const SynthConfig& config);

void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);
/// Path of the key=value echo written next to a generated file.
std::filesystem::path config_echo_path(const std::filesystem::path& data_path);

/// Fold (1..3) holding a trial: trials 1-5, 6-10, 11-15 of every session.
int fold_of_trial(int trial);
/// Fold of every sample. Each subject needs sessions 1..3, each with trials 1..15.
std::vector<int> assign_folds(const Dataset& data);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};
/// Samples of `subject`: test = fold `test_fold`, train = the other two folds.
Split split_subject(const Dataset& data, const std::vector<int>& folds, int subject, int test_fold);

/// Per-feature min-max statistics fitted on a subset of rows.
struct MinMax {
    std::vector<double> lo, hi;

    static MinMax fit(const Dataset& data, std::span<const std::size_t> rows);
    /// (x - lo)/(hi - lo) clipped to [0, 1]; constant features map to 0.
    void apply(std::span<const double> in, std::span<double> out) const;
    std::vector<double> apply(std::span<const double> in) const;
};

}  // namespace pll
