#include "pll/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "pll/nn.hpp"
#include "pll/pico.hpp"
#include "pll/rng.hpp"
#include "pll/text.hpp"

namespace pll {

std::string AmbiguitySpec::key() const {
    return mode == Mode::uniform ? "q=" + text::format_double(q) : "wheel=" + wheel.hash();
}

std::vector<CandidateSet> generate_candidates(const Dataset& data, const AmbiguitySpec& ambiguity,
                                              std::uint64_t seed) {
    auto rng = make_rng(seed, Stream::labels);
    std::vector<CandidateSet> sets;
    sets.reserve(data.size());
    if (ambiguity.mode == AmbiguitySpec::Mode::uniform) {
        for (const auto& s : data.samples) sets.push_back(gen_uniform_candidates(s.label, ambiguity.q, kEmotionCount, rng));
    } else {
        const auto gamma = build_similarity(ambiguity.wheel);
        const auto prov = similarity_provenance(ambiguity.wheel);
        for (const auto& s : data.samples) sets.push_back(gen_similarity_candidates(s.label, gamma, rng, prov));
    }
    return sets;
}

void RunSpec::validate() const {
    method.validate();
    if (epochs <= 0) throw std::invalid_argument("epochs must be positive");
    if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (fold < 1 || fold > kFolds) throw std::invalid_argument("fold must be 1, 2 or 3");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
}

Schedule RunSpec::effective_schedule() const {
    if (!scheduler || method.method == Method::supervised || method.method == Method::dnpl) return Schedule::none;
    return Schedule::cosine;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t batch_size) {
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        const std::size_t end = std::min(order.size(), i + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (batches.size() > 1 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back().front());
        batches.pop_back();
    }
    return batches;
}

namespace {

struct Batch {
    Tensor x;      // (B, s)
    Tensor masks;  // (B, k)
    std::vector<std::size_t> truth;
};

// Rows of the normalized feature matrix plus their candidate masks.
Batch gather(const Tensor& features, const Tensor& masks, const std::vector<std::size_t>& truth,
             const std::vector<std::size_t>& rows) {
    const std::size_t s = features.dim(1), k = masks.dim(1);
    Batch b{Tensor({rows.size(), s}), Tensor({rows.size(), k}), {}};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(features.row(rows[i]).begin(), s, b.x.row(i).begin());
        std::copy_n(masks.row(rows[i]).begin(), k, b.masks.row(i).begin());
        b.truth.push_back(truth[rows[i]]);
    }
    return b;
}

Tensor normalized_features(const Dataset& data, const std::vector<std::size_t>& rows, const MinMax& mm) {
    Tensor out({rows.size(), data.feature_count});
    for (std::size_t i = 0; i < rows.size(); ++i) mm.apply(data.samples[rows[i]].features, out.row(i));
    return out;
}

double mean_entropy(const Tensor& targets) {
    double h = 0.0;
    for (std::size_t b = 0; b < targets.dim(0); ++b) h += entropy(targets.row(b));
    return h / static_cast<double>(targets.dim(0));
}

// Accuracy (%) and per-class accuracy on a feature matrix.
void evaluate(const Backbone& model, const Tensor& x, const std::vector<std::size_t>& truth, std::size_t classes,
              double& accuracy, std::vector<double>* per_class, std::vector<std::size_t>* per_count) {
    constexpr std::size_t chunk = 256;
    std::vector<std::size_t> hit(classes, 0), count(classes, 0);
    std::size_t correct = 0;
    const std::size_t n = x.dim(0), s = x.dim(1);
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t len = std::min(chunk, n - start);
        Tensor part({len, s});
        std::copy_n(x.values.begin() + static_cast<std::ptrdiff_t>(start * s), len * s, part.values.begin());
        const auto pred = model.predict(part);
        for (std::size_t i = 0; i < len; ++i) {
            const std::size_t y = truth[start + i];
            ++count[y];
            if (pred[i] == y) {
                ++hit[y];
                ++correct;
            }
        }
    }
    accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(n);
    if (per_class) {
        per_class->assign(classes, 0.0);
        for (std::size_t c = 0; c < classes; ++c) {
            if (count[c] > 0) (*per_class)[c] = 100.0 * static_cast<double>(hit[c]) / static_cast<double>(count[c]);
        }
    }
    if (per_count) *per_count = count;
}

class Trainer {
public:
    Trainer(const RunSpec& spec, const Dataset& data, const std::vector<CandidateSet>& candidates,
            StepObserver* observer)
        : spec_(spec),
          cfg_(spec.method),
          observer_(observer),
          model_(backbone_config(spec, data), derive_seed(spec.seed, Stream::init)),
          shuffle_rng_(make_rng(spec.seed, Stream::shuffle)),
          dropout_rng_(make_rng(spec.seed, Stream::dropout)),
          augment_rng_(make_rng(spec.seed, Stream::augment)) {
        spec.validate();
        if (candidates.size() != data.size()) {
            throw std::invalid_argument("candidate sets (" + std::to_string(candidates.size()) +
                                        ") must cover every sample (" + std::to_string(data.size()) + ")");
        }
        const auto folds = assign_folds(data);
        const auto split = split_subject(data, folds, spec.subject, spec.fold);
        const auto mm = MinMax::fit(data, split.train);
        train_x_ = normalized_features(data, split.train, mm);
        test_x_ = normalized_features(data, split.test, mm);
        train_masks_ = Tensor({split.train.size(), kEmotionCount});
        for (std::size_t i = 0; i < split.train.size(); ++i) {
            const auto& c = candidates[split.train[i]];
            if (c.classes() != kEmotionCount) throw std::invalid_argument("candidate sets must have 5 classes");
            for (std::size_t s = 0; s < kEmotionCount; ++s) train_masks_[i * kEmotionCount + s] = c.mask[s] ? 1.0 : 0.0;
            train_truth_.push_back(data.samples[split.train[i]].label);
        }
        for (std::size_t r : split.test) test_truth_.push_back(data.samples[r].label);

        result_.spec = spec;
        result_.dataset_fingerprint = data.fingerprint();
        std::string label_bytes;
        for (const auto& c : candidates) {
            label_bytes.append(reinterpret_cast<const char*>(c.mask.data()), c.mask.size());
            label_bytes += c.provenance;
            label_bytes += '\n';
        }
        result_.labels_fingerprint = text::fnv1a_hex(label_bytes);
        result_.train_samples = split.train.size();
        result_.test_samples = split.test.size();

        if (cfg_.method == Method::pico) {
            key_.emplace(model_);
            auto qrng = make_rng(spec.seed, Stream::queue);
            state_ = ContrastiveState::init(cfg_.pico_queue, cfg_.embedding_dim, kEmotionCount, qrng);
        }
    }

    RunResult run() {
        SgdConfig sc;
        sc.learning_rate = spec_.learning_rate;
        sc.momentum = spec_.momentum;
        sc.weight_decay = spec_.weight_decay;
        sc.schedule = spec_.effective_schedule();
        sc.total_epochs = spec_.epochs;
        SgdOptimizer opt(sc, model_.params());

        std::vector<std::size_t> order(train_x_.dim(0));
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (int epoch = 0; epoch < spec_.epochs; ++epoch) {
            opt.set_epoch(epoch);
            std::shuffle(order.begin(), order.end(), shuffle_rng_);
            const auto batches = make_batches(order, spec_.batch_size);
            double loss_sum = 0.0, entropy_sum = 0.0;
            for (std::size_t bi = 0; bi < batches.size(); ++bi) {
                const auto batch = gather(train_x_, train_masks_, train_truth_, batches[bi]);
                GradientSet grads(model_.params());
                double h = 0.0;
                const double loss = step(batch, epoch, grads, h);
                if (!std::isfinite(loss) || !grads.all_finite()) {
                    throw NonFiniteLoss("non-finite loss in " + cfg_.variant_key() + " at epoch " +
                                        std::to_string(epoch + 1) + ", batch " + std::to_string(bi + 1));
                }
                opt.step(model_.params(), grads);
                after_step(batch);
                ++result_.steps;
                loss_sum += loss;
                entropy_sum += h;
                if (spec_.diagnostics_path) {
                    diagnostics_.push_back({epoch + 1, bi + 1, loss, h, result_.confinement_violations,
                                            result_.fallbacks});
                }
                if (observer_) observer_->on_step(epoch, bi, loss);
            }
            const double nb = static_cast<double>(batches.size());
            result_.loss_curve.push_back(loss_sum / nb);
            result_.entropy_curve.push_back(entropy_sum / nb);
            if (spec_.track_best_epoch) {
                double acc = 0.0;
                evaluate(model_, test_x_, test_truth_, kEmotionCount, acc, nullptr, nullptr);
                if (!result_.best_accuracy || acc > *result_.best_accuracy) {
                    result_.best_accuracy = acc;
                    result_.best_epoch = epoch + 1;
                }
            }
        }
        evaluate(model_, test_x_, test_truth_, kEmotionCount, result_.accuracy, &result_.per_class_accuracy,
                 &result_.per_class_count);
        if (spec_.diagnostics_path) write_diagnostics(*spec_.diagnostics_path);
        return result_;
    }

    const Backbone& model() const { return model_; }

private:
    static BackboneConfig backbone_config(const RunSpec& spec, const Dataset& data) {
        BackboneConfig bc;
        bc.features = data.feature_count;
        bc.classes = kEmotionCount;
        bc.hidden = spec.hidden;
        bc.embedding_dim = spec.method.embedding_dim;
        bc.dropout = spec.dropout;
        return bc;
    }

    void check_targets(const Tensor& targets, const Tensor& masks, std::size_t fallbacks) {
        for (std::size_t b = 0; b < targets.dim(0); ++b) {
            ++result_.labels_checked;
            if (!is_confined(targets.row(b), masks.row(b), 1e-9)) ++result_.confinement_violations;
        }
        result_.fallbacks += fallbacks;
        if (observer_) observer_->on_targets(targets, masks);
    }

    // Loss and gradients of one batch; `h` receives the mean entropy of the training targets.
    double step(const Batch& batch, int epoch, GradientSet& grads, double& h) {
        const std::size_t bsz = batch.x.dim(0);
        switch (cfg_.method) {
            case Method::supervised: {
                auto tape = model_.forward(batch.x, PassConfig::train(), &dropout_rng_);
                auto lg = supervised_ce_loss(tape.logits, batch.truth);
                model_.backward(tape, lg.grad_logits, nullptr, grads);
                model_.update_running_stats(tape);
                h = 0.0;
                return lg.value;
            }
            case Method::dnpl: {
                auto tape = model_.forward(batch.x, PassConfig::train(), &dropout_rng_);
                auto lg = dnpl_loss(tape.logits, batch.masks);
                model_.backward(tape, lg.grad_logits, nullptr, grads);
                model_.update_running_stats(tape);
                h = mean_entropy(uniform_targets(batch.masks));
                return lg.value;
            }
            case Method::proden:
            case Method::cavl: {
                auto tape = model_.forward(batch.x, PassConfig::train(), &dropout_rng_);
                Tensor targets(batch.masks.shape);
                std::size_t fb = 0;
                if (cfg_.ld) {
                    for (std::size_t b = 0; b < bsz; ++b) {
                        const auto label = cfg_.method == Method::proden
                                               ? proden_disambiguate(tape.logits.row(b), batch.masks.row(b))
                                               : cavl_disambiguate(tape.logits.row(b), batch.masks.row(b));
                        fb += label.fallback ? 1 : 0;
                        std::copy(label.dist.begin(), label.dist.end(), targets.row(b).begin());
                    }
                } else {
                    targets = uniform_targets(batch.masks);
                }
                check_targets(targets, batch.masks, fb);
                auto lg = cross_entropy_pll(tape.logits, targets);
                model_.backward(tape, lg.grad_logits, nullptr, grads);
                model_.update_running_stats(tape);
                h = mean_entropy(targets);
                return lg.value;
            }
            case Method::lw: {
                auto tape = model_.forward(batch.x, PassConfig::train(), &dropout_rng_);
                auto lg = lw_loss(tape.logits, batch.masks, cfg_.lw_variant, cfg_.beta, cfg_.ld);
                model_.backward(tape, lg.grad_logits, nullptr, grads);
                model_.update_running_stats(tape);
                Tensor w(batch.masks.shape);
                for (std::size_t b = 0; b < bsz; ++b) {
                    auto wb = lw_weights(tape.logits.row(b), batch.masks.row(b), cfg_.ld);
                    double sum = 0.0;
                    for (std::size_t s = 0; s < wb.size(); ++s) sum += batch.masks.row(b)[s] != 0.0 ? wb[s] : 0.0;
                    for (std::size_t s = 0; s < wb.size(); ++s) {
                        w.row(b)[s] = batch.masks.row(b)[s] != 0.0 ? wb[s] / sum : 0.0;
                    }
                }
                h = mean_entropy(w);
                return lg.value;
            }
            case Method::cr: {
                const Tensor weak = gaussian_augment(batch.x, cfg_.cr_mu, cfg_.cr_sigma_weak, augment_rng_);
                const Tensor strong = gaussian_augment(batch.x, cfg_.cr_mu, cfg_.cr_sigma_strong, augment_rng_);
                std::array<ForwardTape, 3> tapes{model_.forward(batch.x, PassConfig::train(), &dropout_rng_),
                                                 model_.forward(weak, PassConfig::train(), &dropout_rng_),
                                                 model_.forward(strong, PassConfig::train(), &dropout_rng_)};
                Tensor targets(batch.masks.shape);
                std::size_t fb = 0;
                for (std::size_t b = 0; b < bsz; ++b) {
                    const auto label = cr_refine({tapes[0].logits.row(b), tapes[1].logits.row(b),
                                                  tapes[2].logits.row(b)},
                                                 batch.masks.row(b));
                    fb += label.fallback ? 1 : 0;
                    std::copy(label.dist.begin(), label.dist.end(), targets.row(b).begin());
                }
                check_targets(targets, batch.masks, fb);
                const double eta = cr_warmup(epoch, spec_.epochs, cfg_.ld);
                auto cl = cr_loss({&tapes[0].logits, &tapes[1].logits, &tapes[2].logits}, batch.masks, targets, eta);
                for (std::size_t v = 0; v < 3; ++v) {
                    model_.backward(tapes[v], cl.grad_logits[v], nullptr, grads);
                    model_.update_running_stats(tapes[v]);
                }
                h = mean_entropy(targets);
                return cl.value;
            }
            case Method::pico: {
                auto tape = model_.forward(batch.x, PassConfig::train(true), &dropout_rng_);
                const Tensor weak = gaussian_augment(batch.x, cfg_.cr_mu, cfg_.cr_sigma_weak, augment_rng_);
                const auto ktape = key_->forward(weak, PassConfig::deterministic_train(true));
                auto pl = pico_total_loss(state_, tape.logits, tape.projection, ktape.projection, batch.masks, cfg_);
                const Tensor targets =
                    cfg_.ld ? one_hot_targets(pl.proto_labels, kEmotionCount) : uniform_targets(batch.masks);
                check_targets(targets, batch.masks, 0);
                result_.empty_positive_sets += pl.empty_positive;
                model_.backward(tape, pl.grad_logits, pl.grad_q.empty() ? nullptr : &pl.grad_q, grads);
                model_.update_running_stats(tape);
                pending_q_ = tape.projection;
                pending_k_ = ktape.projection;
                pending_guess_ = pl.guessed;
                h = mean_entropy(targets);
                return pl.value;
            }
        }
        throw std::logic_error("unhandled method");
    }

    void after_step(const Batch& batch) {
        if (cfg_.method != Method::pico) return;
        momentum_update(model_.params(), key_->params(), cfg_.key_momentum);
        pico_commit(state_, pending_q_, pending_k_, batch.masks, pending_guess_, cfg_.pico_lambda);
        if (state_.max_prototype_norm_error() > 1e-6) ++result_.prototype_norm_violations;
        if (state_.queue_size() != cfg_.pico_queue || state_.queue_labels.dim(0) != cfg_.pico_queue) {
            ++result_.queue_size_violations;
        }
    }

    void write_diagnostics(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << "epoch,batch,loss,mean_entropy,confinement_violations,fallbacks\n";
        for (const auto& d : diagnostics_) {
            out << d.epoch << ',' << d.batch << ',' << text::format_double(d.loss) << ','
                << text::format_double(d.mean_entropy) << ',' << d.violations << ',' << d.fallbacks << '\n';
        }
    }

    const RunSpec& spec_;
    MethodConfig cfg_;
    StepObserver* observer_;
    Backbone model_;
    std::optional<Backbone> key_;
    ContrastiveState state_;
    nn::Rng shuffle_rng_, dropout_rng_, augment_rng_;
    Tensor train_x_, test_x_, train_masks_;
    std::vector<std::size_t> train_truth_, test_truth_;
    Tensor pending_q_, pending_k_;
    std::vector<std::size_t> pending_guess_;
    std::vector<DiagnosticRow> diagnostics_;
    RunResult result_;
};

nlohmann::ordered_json spec_json(const RunSpec& s) {
    const auto& m = s.method;
    nlohmann::ordered_json j;
    j["method"] = to_string(m.method);
    j["variant"] = m.variant_key();
    j["ld"] = m.ld;
    j["lw_variant"] = to_string(m.lw_variant);
    j["beta"] = m.beta;
    j["cr_mu"] = m.cr_mu;
    j["cr_sigma_weak"] = m.cr_sigma_weak;
    j["cr_sigma_strong"] = m.cr_sigma_strong;
    j["pico_tau"] = m.pico_tau;
    j["pico_xi"] = m.pico_xi;
    j["pico_lambda"] = m.pico_lambda;
    j["pico_queue"] = m.pico_queue;
    j["embedding_dim"] = m.embedding_dim;
    j["key_momentum"] = m.key_momentum;
    j["pico_contrastive"] = m.pico_contrastive;
    j["subject"] = s.subject;
    j["fold"] = s.fold;
    j["seed"] = s.seed;
    j["epochs"] = s.epochs;
    j["batch_size"] = s.batch_size;
    j["learning_rate"] = s.learning_rate;
    j["momentum"] = s.momentum;
    j["weight_decay"] = s.weight_decay;
    j["schedule"] = to_string(s.effective_schedule());
    j["track_best_epoch"] = s.track_best_epoch;
    j["hidden"] = s.hidden;
    j["dropout"] = s.dropout;
    j["labels_source"] = s.labels_source;
    j["normalization"] = "per-feature min-max over the training folds of the subject";
    return j;
}

}  // namespace

RunResult train_run(const RunSpec& spec, const Dataset& data, const std::vector<CandidateSet>& candidates,
                    StepObserver* observer, std::optional<Backbone>* trained) {
    Trainer trainer(spec, data, candidates, observer);
    auto result = trainer.run();
    if (trained) trained->emplace(trainer.model());
    return result;
}

std::string result_to_json(const RunResult& r) {
    nlohmann::ordered_json j;
    j["format"] = "pllkit-run-result 1";
    j["spec"] = spec_json(r.spec);
    j["dataset_fingerprint"] = r.dataset_fingerprint;
    j["labels_fingerprint"] = r.labels_fingerprint;
    j["train_samples"] = r.train_samples;
    j["test_samples"] = r.test_samples;
    j["accuracy"] = r.accuracy;
    j["per_class_accuracy"] = r.per_class_accuracy;
    j["per_class_count"] = r.per_class_count;
    j["loss_curve"] = r.loss_curve;
    j["entropy_curve"] = r.entropy_curve;
    if (r.best_accuracy) {
        j["best_accuracy"] = *r.best_accuracy;
        j["best_epoch"] = *r.best_epoch;
    }
    j["steps"] = r.steps;
    j["labels_checked"] = r.labels_checked;
    j["confinement_violations"] = r.confinement_violations;
    j["fallbacks"] = r.fallbacks;
    j["empty_positive_sets"] = r.empty_positive_sets;
    j["prototype_norm_violations"] = r.prototype_norm_violations;
    j["queue_size_violations"] = r.queue_size_violations;
    return j.dump(2) + "\n";
}

void write_result(const std::filesystem::path& path, const RunResult& result) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << result_to_json(result);
}

}  // namespace pll
