#pragma once

// One training run: method dispatch, per-epoch shuffling, evaluation on the held-out fold.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pll/backbone.hpp"
#include "pll/data.hpp"
#include "pll/labels.hpp"
#include "pll/methods.hpp"
#include "pll/optim.hpp"

namespace pll {

/// How candidate sets are produced for a dataset.
struct AmbiguitySpec {
    enum class Mode { uniform, similarity } mode = Mode::uniform;
    double q = 0.0;
    EmotionWheel wheel = EmotionWheel::default_wheel();

    std::string key() const;  // "q=0.6" or "wheel=<hash>"
};

/// Candidate sets for every sample of the dataset, from the label stream of `seed`.
std::vector<CandidateSet> generate_candidates(const Dataset& data, const AmbiguitySpec& ambiguity,
                                              std::uint64_t seed);

struct RunSpec {
    MethodConfig method;
    int subject = 1;
    int fold = 1;  // held-out fold
    std::uint64_t seed = 0;
    int epochs = 30;
    std::size_t batch_size = 8;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    bool scheduler = true;  // cosine; ignored for supervised and DNPL
    bool track_best_epoch = false;
    std::size_t hidden = 64;
    double dropout = 0.5;
    std::string labels_source;  // provenance echo of the candidate sets
    std::optional<std::filesystem::path> diagnostics_path;

    void validate() const;
    Schedule effective_schedule() const;
};

struct DiagnosticRow {
    int epoch = 0;
    std::size_t batch = 0;
    double loss = 0.0;
    double mean_entropy = 0.0;
    std::size_t violations = 0;  // cumulative
    std::size_t fallbacks = 0;   // cumulative
};

struct RunResult {
    RunSpec spec;
    std::string dataset_fingerprint;
    std::string labels_fingerprint;
    std::size_t train_samples = 0;
    std::size_t test_samples = 0;
    double accuracy = 0.0;  // percent, final epoch
    std::vector<double> per_class_accuracy;  // percent; NaN-free, classes absent from the test fold report 0
    std::vector<std::size_t> per_class_count;
    std::vector<double> loss_curve;      // mean batch loss per epoch
    std::vector<double> entropy_curve;   // mean entropy of the training targets per epoch
    std::optional<double> best_accuracy;
    std::optional<int> best_epoch;  // 1-based
    std::size_t labels_checked = 0;
    std::size_t confinement_violations = 0;
    std::size_t fallbacks = 0;
    std::size_t empty_positive_sets = 0;
    std::size_t steps = 0;
    std::size_t prototype_norm_violations = 0;  // PiCO only
    std::size_t queue_size_violations = 0;      // PiCO only
};

/// Thrown when a loss turns non-finite.
struct NonFiniteLoss : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Hooks for per-step inspection.
struct StepObserver {
    virtual ~StepObserver() = default;
    /// Training targets of one step (rows are samples) with their candidate masks.
    virtual void on_targets(const Tensor& /*targets*/, const Tensor& /*masks*/) {}
    /// Called after every optimizer step with the batch loss.
    virtual void on_step(int /*epoch*/, std::size_t /*batch*/, double /*loss*/) {}
};

/// `trained`, when given, receives the final model.
RunResult train_run(const RunSpec& spec, const Dataset& data, const std::vector<CandidateSet>& candidates,
                    StepObserver* observer = nullptr, std::optional<Backbone>* trained = nullptr);

/// Byte-stable JSON rendering (no timing information).
std::string result_to_json(const RunResult& result);
void write_result(const std::filesystem::path& path, const RunResult& result);

/// Batches of `batch_size` over `order`; a trailing single-sample batch joins the previous one.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t batch_size);

}  // namespace pll
