#include "pll/method_check.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <stdexcept>

#include "pll/backbone.hpp"
#include "pll/labels.hpp"
#include "pll/pico.hpp"
#include "pll/rng.hpp"

namespace pll {

std::string describe_check(const MethodConfig& method, const MethodCheckSetup& setup) {
    std::string s = method.variant_key();
    if (method.has_ld() || method.method == Method::cr) s += method.ld ? " ld=on" : " ld=off";
    if (method.method == Method::cr) {
        s += " t=" + std::to_string(setup.cr_epoch) + "/" + std::to_string(setup.cr_total_epochs);
    }
    if (setup.batch_stats) s += " bn=batch";
    return s;
}

namespace {

void randomize_batchnorm(ParameterSet& params, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> scale(0.5, 1.5), shift(-0.2, 0.2);
    for (const char* layer : {"bn1", "bn2"}) {
        const std::string l(layer);
        for (auto& v : params.at(l + ".weight").values) v = scale(rng);
        for (auto& v : params.at(l + ".bias").values) v = shift(rng);
        for (auto& v : params.at(l + ".running_mean").values) v = shift(rng);
        for (auto& v : params.at(l + ".running_var").values) v = scale(rng);
    }
}

}  // namespace

GradcheckReport check_method_gradient(const MethodConfig& cfg, const MethodCheckSetup& setup) {
    cfg.validate();
    if (setup.batch < 2) throw std::invalid_argument("method check needs at least two samples");
    auto rng = make_rng(setup.seed, Stream::init);
    const std::size_t k = kEmotionCount, bsz = setup.batch;

    BackboneConfig bc;
    bc.features = setup.features;
    bc.classes = k;
    bc.embedding_dim = cfg.embedding_dim;
    Backbone model(bc, derive_seed(setup.seed, Stream::init));
    randomize_batchnorm(model.params(), rng);

    // batch, candidate sets, truth
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Tensor x({bsz, setup.features});
    for (auto& v : x.values) v = unit(rng);
    std::vector<std::size_t> truth(bsz);
    Tensor masks({bsz, k});
    auto label_rng = make_rng(setup.seed, Stream::labels);
    for (std::size_t b = 0; b < bsz; ++b) {
        truth[b] = b % k;
        const auto c = gen_uniform_candidates(truth[b], setup.candidate_q, k, label_rng);
        for (std::size_t s = 0; s < k; ++s) masks[b * k + s] = c.mask[s] ? 1.0 : 0.0;
    }

    const PassConfig pass{setup.batch_stats, false, cfg.method == Method::pico};
    auto aug_rng = make_rng(setup.seed, Stream::augment);
    const Tensor weak = gaussian_augment(x, cfg.cr_mu, cfg.cr_sigma_weak, aug_rng);
    const Tensor strong = gaussian_augment(x, cfg.cr_mu, cfg.cr_sigma_strong, aug_rng);

    // frozen quantities at the base parameters
    const auto base = model.forward(x, pass);
    Tensor targets = uniform_targets(masks);
    Tensor lw_w(masks.shape);
    double eta = 0.0;
    ContrastiveState state;
    Tensor keys;
    std::vector<std::size_t> guessed, proto;
    switch (cfg.method) {
        case Method::proden:
        case Method::cavl:
            if (cfg.ld) {
                for (std::size_t b = 0; b < bsz; ++b) {
                    const auto l = cfg.method == Method::proden ? proden_disambiguate(base.logits.row(b), masks.row(b))
                                                                : cavl_disambiguate(base.logits.row(b), masks.row(b));
                    std::copy(l.dist.begin(), l.dist.end(), targets.row(b).begin());
                }
            }
            break;
        case Method::lw:
            for (std::size_t b = 0; b < bsz; ++b) {
                const auto w = lw_weights(base.logits.row(b), masks.row(b), cfg.ld);
                std::copy(w.begin(), w.end(), lw_w.row(b).begin());
            }
            break;
        case Method::cr: {
            const auto t1 = model.forward(weak, pass);
            const auto t2 = model.forward(strong, pass);
            for (std::size_t b = 0; b < bsz; ++b) {
                const auto l = cr_refine({base.logits.row(b), t1.logits.row(b), t2.logits.row(b)}, masks.row(b));
                std::copy(l.dist.begin(), l.dist.end(), targets.row(b).begin());
            }
            eta = cr_warmup(setup.cr_epoch, setup.cr_total_epochs, cfg.ld);
            break;
        }
        case Method::pico: {
            auto qrng = make_rng(setup.seed, Stream::queue);
            state = ContrastiveState::init(cfg.pico_queue, cfg.embedding_dim, k, qrng);
            // non-trivial prototypes so the prototype labels depend on Q
            std::normal_distribution<double> normal(0.0, 1.0);
            Tensor raw(state.prototypes.shape);
            for (auto& v : raw.values) v = normal(qrng);
            state.prototypes = nn::l2_normalize_rows(raw);
            std::fill(state.updated.begin(), state.updated.end(), 1);
            keys = model.forward(weak, PassConfig{setup.batch_stats, false, true}).projection;
            guessed.resize(bsz);
            for (std::size_t b = 0; b < bsz; ++b) guessed[b] = pico_guess(base.logits.row(b), masks.row(b));
            if (cfg.ld) {
                proto.resize(bsz);
                for (std::size_t b = 0; b < bsz; ++b) {
                    proto[b] = pico_prototype_label(base.projection.row(b), state.prototypes, masks.row(b));
                }
            }
            break;
        }
        default:
            break;
    }

    Backbone work = model;
    const Objective objective = [&](const ParameterSet& params, bool with_gradient) -> LossEval {
        work.params() = params;
        LossEval ev;
        if (with_gradient) ev.grads = GradientSet(params);
        auto run_single = [&](auto&& loss_fn) {
            const auto tape = work.forward(x, pass);
            auto lg = loss_fn(tape.logits);
            ev.value = lg.value;
            ev.kink_signature = kink_signature(tape);
            if (with_gradient) work.backward(tape, lg.grad_logits, nullptr, ev.grads);
        };
        switch (cfg.method) {
            case Method::supervised:
                run_single([&](const Tensor& z) { return supervised_ce_loss(z, truth); });
                break;
            case Method::dnpl:
                run_single([&](const Tensor& z) { return dnpl_loss(z, masks); });
                break;
            case Method::proden:
            case Method::cavl:
                run_single([&](const Tensor& z) { return cross_entropy_pll(z, targets); });
                break;
            case Method::lw:
                run_single([&](const Tensor& z) { return lw_loss_weighted(z, masks, cfg.lw_variant, cfg.beta, lw_w); });
                break;
            case Method::cr: {
                const std::array<ForwardTape, 3> tapes{work.forward(x, pass), work.forward(weak, pass),
                                                       work.forward(strong, pass)};
                const auto cl = cr_loss({&tapes[0].logits, &tapes[1].logits, &tapes[2].logits}, masks, targets, eta);
                ev.value = cl.value;
                for (const auto& t : tapes) ev.kink_signature = kink_signature(t, ev.kink_signature ^ 1u);
                if (with_gradient) {
                    for (std::size_t v = 0; v < 3; ++v) work.backward(tapes[v], cl.grad_logits[v], nullptr, ev.grads);
                }
                break;
            }
            case Method::pico: {
                const auto tape = work.forward(x, pass);
                const auto pl = pico_loss_with_labels(state, tape.logits, tape.projection, keys, masks, cfg, guessed, proto);
                ev.value = pl.value;
                ev.kink_signature = kink_signature(tape);
                if (with_gradient) {
                    work.backward(tape, pl.grad_logits, pl.grad_q.empty() ? nullptr : &pl.grad_q, ev.grads);
                }
                break;
            }
        }
        return ev;
    };
    return gradcheck(objective, model.params(), setup.options);
}

}  // namespace pll
