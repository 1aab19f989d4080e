// pllkit: data generation, candidate labels, training, grids, reports and gradient checks.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pll/data.hpp"
#include "pll/grid.hpp"
#include "pll/harness.hpp"
#include "pll/labels.hpp"
#include "pll/method_check.hpp"
#include "pll/report.hpp"
#include "pll/text.hpp"

namespace fs = std::filesystem;
using namespace pll;

namespace {

struct MethodFlags {
    std::string method = "dnpl";
    bool ld = false;
    std::string lw_variant = "ce";
    int beta = 2;
    bool no_cl = false;

    void add_to(CLI::App* app) {
        app->add_option("--method", method, "supervised|dnpl|proden|cavl|lw|cr|pico")->required();
        app->add_flag("--ld", ld, "enable label disambiguation");
        app->add_option("--lw-variant", lw_variant, "LW loss: sigmoid|ce")->check(CLI::IsMember({"sigmoid", "ce"}));
        app->add_option("--beta", beta, "LW non-candidate weight")->check(CLI::IsMember({0, 1, 2}));
        app->add_flag("--no-cl", no_cl, "PiCO without the contrastive term");
    }

    MethodConfig config() const {
        MethodConfig m;
        m.method = parse_method(method);
        m.ld = ld;
        m.lw_variant = parse_lw_variant(lw_variant);
        m.beta = beta;
        m.pico_contrastive = !no_cl;
        m.validate();
        return m;
    }
};

int cmd_gen_data(const SynthConfig& cfg, const fs::path& out) {
    const auto data = synth_generate(cfg);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_dataset(out, data);
    auto kv = cfg.to_key_values();
    kv["samples"] = std::to_string(data.size());
    kv["fingerprint"] = data.fingerprint();
    text::write_key_values(config_echo_path(out).string(), kv);
    std::cout << "wrote " << data.size() << " samples to " << out.string() << "\n";
    return 0;
}

int cmd_gen_labels(const std::string& mode, double q, const std::string& wheel, const fs::path& data_path,
                   std::uint64_t seed, const fs::path& out) {
    const auto data = load_dataset(data_path);
    AmbiguitySpec amb;
    if (mode == "uniform") {
        amb.q = q;
    } else {
        amb.mode = AmbiguitySpec::Mode::similarity;
        if (!wheel.empty()) amb.wheel = EmotionWheel::load(wheel);
    }
    const auto sets = generate_candidates(data, amb, seed);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_candidate_file(out, sets);
    std::size_t total = 0;
    for (const auto& s : sets) total += s.count();
    std::printf("wrote %zu candidate sets to %s (mean size %.3f)\n", sets.size(), out.string().c_str(),
                sets.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(sets.size()));
    return 0;
}

int cmd_train(const MethodFlags& mf, const fs::path& data_path, const std::string& labels_path, RunSpec spec,
              const fs::path& out, bool diagnostics) {
    spec.method = mf.config();
    const auto data = load_dataset(data_path);
    std::vector<CandidateSet> sets;
    if (!labels_path.empty()) {
        sets = read_candidate_file(labels_path);
        spec.labels_source = sets.empty() ? "empty" : sets.front().provenance;
        if (sets.size() != data.size()) {
            throw std::runtime_error("label file has " + std::to_string(sets.size()) + " rows, dataset has " +
                                     std::to_string(data.size()));
        }
        for (std::size_t i = 0; i < sets.size(); ++i) {
            if (sets[i].truth != data.samples[i].label) {
                throw std::runtime_error("label file row " + std::to_string(i) + " disagrees with the dataset label");
            }
        }
    } else if (spec.method.method == Method::supervised) {
        for (const auto& s : data.samples) sets.push_back(singleton_candidates(s.label, kEmotionCount));
        spec.labels_source = "ground-truth";
    } else {
        throw std::runtime_error("--labels is required for PLL methods");
    }
    fs::create_directories(out);
    if (diagnostics) spec.diagnostics_path = out / "diagnostics.csv";
    std::optional<Backbone> model;
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = train_run(spec, data, sets, nullptr, &model);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_result(out / "result.json", result);
    save_checkpoint(out / "model.ckpt", *model,
                    {{"method", spec.method.variant_key()},
                     {"ld", spec.method.ld ? "1" : "0"},
                     {"seed", std::to_string(spec.seed)},
                     {"subject", std::to_string(spec.subject)},
                     {"fold", std::to_string(spec.fold)}});
    std::printf("%s ld=%s subject %d fold %d seed %llu: test accuracy %.2f%% (%.1f s)\n",
                spec.method.variant_key().c_str(), spec.method.ld ? "on" : "off", spec.subject, spec.fold,
                static_cast<unsigned long long>(spec.seed), result.accuracy, secs);
    return 0;
}

int cmd_grid(const fs::path& config_path, const fs::path& out, std::size_t threads) {
    auto cfg = GridConfig::load(config_path);
    if (threads > 0) cfg.threads = threads;
    if (cfg.data.empty()) throw std::runtime_error("grid config needs a 'data' entry");
    const auto data = load_dataset(cfg.data);
    const auto outcome = run_grid(cfg, data);
    write_grid_outputs(out, outcome);
    std::size_t failed = 0;
    for (const auto& r : outcome.runs) failed += r.ok ? 0 : 1;
    std::printf("%zu runs (%zu failed), %zu cells -> %s\n", outcome.runs.size(), failed, outcome.table.cells.size(),
                out.string().c_str());
    std::cout << render_report_text(build_report(outcome.table, false), false);
    return failed == 0 ? 0 : 3;
}

int cmd_report(const fs::path& in, const fs::path& out, bool with_reference) {
    const fs::path agg = fs::is_directory(in) ? in / "aggregate.csv" : in;
    const auto table = read_aggregate_csv(agg);
    write_report(out, table, with_reference);
    std::cout << render_report_text(build_report(table, with_reference), with_reference);
    return 0;
}

int cmd_gradcheck(const MethodFlags& mf, MethodCheckSetup setup) {
    const auto cfg = mf.config();
    const auto report = check_method_gradient(cfg, setup);
    std::printf("%s: max relative error %.3e over %zu coordinates, %zu refined off a kink, %zu on a kink "
                "(worst %s[%zu]: analytic %.6e numeric %.6e)%s\n",
                describe_check(cfg, setup).c_str(), report.max_rel_error, report.coords_checked, report.coords_refined,
                report.coords_on_kink,
                report.worst_entry.c_str(), report.worst_index, report.worst_analytic, report.worst_numeric,
                report.deterministic ? "" : " NON-DETERMINISTIC");
    return report.passed(1e-4) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Partial-label learning toolkit for EEG emotion recognition"};
    app.require_subcommand(1);

    // gen-data
    SynthConfig synth;
    fs::path data_out;
    auto* gd = app.add_subcommand("gen-data", "generate a synthetic DE-feature dataset");
    gd->add_option("--subjects", synth.subjects, "number of subjects")->check(CLI::PositiveNumber);
    gd->add_option("--segments", synth.segments, "segments per trial")->check(CLI::PositiveNumber);
    gd->add_option("--separation", synth.separation, "class-mean separation scale");
    gd->add_option("--noise", synth.noise, "within-class standard deviation");
    gd->add_option("--seed", synth.seed, "generator seed");
    gd->add_option("--out", data_out, "output CSV")->required();

    // gen-labels
    std::string mode = "uniform", wheel;
    double q = 0.0;
    fs::path labels_data, labels_out;
    std::uint64_t labels_seed = 0;
    auto* gl = app.add_subcommand("gen-labels", "draw candidate label sets for a dataset");
    gl->add_option("--mode", mode, "uniform|similarity")->check(CLI::IsMember({"uniform", "similarity"}));
    gl->add_option("--q", q, "inclusion probability of each non-true class (uniform mode)");
    gl->add_option("--wheel", wheel, "emotion wheel file (similarity mode; default wheel if omitted)");
    gl->add_option("--data", labels_data, "dataset CSV")->required();
    gl->add_option("--seed", labels_seed, "label seed");
    gl->add_option("--out", labels_out, "output candidate file")->required();

    // train
    MethodFlags train_flags;
    RunSpec spec;
    fs::path train_data, train_out;
    std::string train_labels;
    bool diagnostics = false, no_scheduler = false;
    auto* tr = app.add_subcommand("train", "train one method on one subject and fold");
    train_flags.add_to(tr);
    tr->add_option("--data", train_data, "dataset CSV")->required();
    tr->add_option("--labels", train_labels, "candidate file from gen-labels");
    tr->add_option("--subject", spec.subject, "subject id");
    tr->add_option("--fold", spec.fold, "held-out fold")->check(CLI::Range(1, 3));
    tr->add_option("--seed", spec.seed, "run seed");
    tr->add_option("--epochs", spec.epochs, "training epochs")->check(CLI::PositiveNumber);
    tr->add_option("--batch-size", spec.batch_size, "batch size");
    tr->add_option("--lr", spec.learning_rate, "learning rate");
    tr->add_flag("--no-scheduler", no_scheduler, "disable the cosine schedule");
    tr->add_flag("--best-epoch", spec.track_best_epoch, "also log the best-epoch test accuracy");
    tr->add_flag("--diagnostics", diagnostics, "write a per-iteration diagnostics CSV");
    tr->add_option("--out", train_out, "output directory")->required();

    // grid
    fs::path grid_config, grid_out;
    std::size_t grid_threads = 0;
    auto* gr = app.add_subcommand("grid", "run an experiment grid from a key=value config");
    gr->add_option("--config", grid_config, "grid config file")->required();
    gr->add_option("--out", grid_out, "output directory")->required();
    gr->add_option("--threads", grid_threads, "override the config's worker count");

    // report
    fs::path report_in, report_out;
    bool with_reference = false;
    auto* rp = app.add_subcommand("report", "render aggregate results");
    rp->add_option("--in", report_in, "grid output directory or aggregate.csv")->required();
    rp->add_option("--out", report_out, "report directory")->required();
    rp->add_flag("--with-paper-reference", with_reference, "add the stored published SEED-V reference values");

    // gradcheck
    MethodFlags gc_flags;
    MethodCheckSetup setup;
    std::size_t coords = setup.options.max_coords_per_entry;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of a method loss through the backbone");
    gc_flags.add_to(gc);
    gc->add_option("--eps", setup.options.eps, "central-difference step");
    gc->add_option("--seed", setup.seed, "seed of the random batch and parameters");
    gc->add_option("--epoch", setup.cr_epoch, "CR warm-up epoch t");
    gc->add_option("--total-epochs", setup.cr_total_epochs, "CR warm-up horizon T");
    gc->add_option("--coords", coords, "coordinates probed per large tensor (0 = all)");
    gc->add_flag("--batch-stats", setup.batch_stats, "batch norm from batch statistics");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gd) return cmd_gen_data(synth, data_out);
        if (*gl) return cmd_gen_labels(mode, q, wheel, labels_data, labels_seed, labels_out);
        if (*tr) {
            spec.scheduler = !no_scheduler;
            return cmd_train(train_flags, train_data, train_labels, spec, train_out, diagnostics);
        }
        if (*gr) return cmd_grid(grid_config, grid_out, grid_threads);
        if (*rp) return cmd_report(report_in, report_out, with_reference);
        if (*gc) {
            setup.options.max_coords_per_entry = coords;
            return cmd_gradcheck(gc_flags, setup);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
