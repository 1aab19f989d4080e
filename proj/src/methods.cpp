#include "pll/methods.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pll/nn.hpp"

namespace pll {

std::string to_string(Method m) {
    switch (m) {
        case Method::supervised: return "supervised";
        case Method::dnpl: return "dnpl";
        case Method::proden: return "proden";
        case Method::cavl: return "cavl";
        case Method::lw: return "lw";
        case Method::cr: return "cr";
        case Method::pico: return "pico";
    }
    return "unknown";
}

Method parse_method(const std::string& s) {
    for (Method m : {Method::supervised, Method::dnpl, Method::proden, Method::cavl, Method::lw, Method::cr,
                     Method::pico}) {
        if (to_string(m) == s) return m;
    }
    throw std::invalid_argument("unknown method: " + s);
}

std::string to_string(LwVariant v) { return v == LwVariant::sigmoid ? "sigmoid" : "ce"; }

LwVariant parse_lw_variant(const std::string& s) {
    if (s == "sigmoid") return LwVariant::sigmoid;
    if (s == "ce") return LwVariant::ce;
    throw std::invalid_argument("unknown LW variant: " + s);
}

void MethodConfig::validate() const {
    if (beta < 0 || beta > 2) throw std::invalid_argument("beta must be 0, 1 or 2");
    if (cr_sigma_weak < 0.0 || cr_sigma_strong < 0.0) throw std::invalid_argument("noise sigma must be >= 0");
    if (!(pico_tau > 0.0)) throw std::invalid_argument("temperature must be positive");
    if (pico_xi < 0.0) throw std::invalid_argument("contrastive weight must be >= 0");
    if (!(pico_lambda > 0.0 && pico_lambda < 1.0)) throw std::invalid_argument("prototype lambda must lie in (0, 1)");
    if (pico_queue == 0) throw std::invalid_argument("queue length must be positive");
    if (embedding_dim == 0) throw std::invalid_argument("embedding dimension must be positive");
    if (!(key_momentum > 0.0 && key_momentum < 1.0)) throw std::invalid_argument("key momentum must lie in (0, 1)");
}

std::string MethodConfig::variant_key() const {
    switch (method) {
        case Method::lw: return "lw-" + to_string(lw_variant) + "-b" + std::to_string(beta);
        case Method::pico: return pico_contrastive ? "pico" : "pico-nocl";
        default: return to_string(method);
    }
}

bool MethodConfig::has_ld() const { return method != Method::supervised && method != Method::dnpl; }

bool is_confined(std::span<const double> dist, std::span<const double> mask, double tol) {
    if (dist.size() != mask.size()) return false;
    double sum = 0.0;
    for (std::size_t s = 0; s < dist.size(); ++s) {
        if (!std::isfinite(dist[s]) || dist[s] < 0.0) return false;
        if (mask[s] == 0.0 && dist[s] != 0.0) return false;
        sum += dist[s];
    }
    return std::abs(sum - 1.0) <= tol;
}

double entropy(std::span<const double> dist) {
    double h = 0.0;
    for (double p : dist) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

Tensor mask_batch(const std::vector<const CandidateSet*>& sets) {
    if (sets.empty()) throw std::invalid_argument("mask_batch: empty batch");
    const std::size_t k = sets.front()->classes();
    Tensor m({sets.size(), k});
    for (std::size_t b = 0; b < sets.size(); ++b) {
        if (sets[b]->classes() != k) throw ShapeError("mask_batch: inconsistent class counts");
        for (std::size_t s = 0; s < k; ++s) m[b * k + s] = sets[b]->mask[s] ? 1.0 : 0.0;
    }
    return m;
}

Tensor uniform_targets(const Tensor& masks) {
    require_rank(masks, 2, "uniform_targets");
    Tensor t(masks.shape);
    for (std::size_t b = 0; b < masks.dim(0); ++b) {
        const auto m = masks.row(b);
        const double n = std::accumulate(m.begin(), m.end(), 0.0);
        if (n <= 0.0) throw std::invalid_argument("uniform_targets: empty candidate set");
        auto row = t.row(b);
        for (std::size_t s = 0; s < m.size(); ++s) row[s] = m[s] != 0.0 ? 1.0 / n : 0.0;
    }
    return t;
}

Tensor one_hot_targets(std::span<const std::size_t> classes, std::size_t k) {
    Tensor t({classes.size(), k});
    for (std::size_t b = 0; b < classes.size(); ++b) t[b * k + classes[b]] = 1.0;
    return t;
}

namespace {

void check_logits_masks(const Tensor& logits, const Tensor& masks, const char* what) {
    require_rank(logits, 2, what);
    require_shape(masks, logits.shape, what);
    if (logits.dim(0) == 0) throw std::invalid_argument(std::string(what) + ": empty batch");
}

}  // namespace

LossGrad supervised_ce_loss(const Tensor& logits, std::span<const std::size_t> truth) {
    require_rank(logits, 2, "supervised_ce_loss");
    if (truth.size() != logits.dim(0)) throw ShapeError("supervised_ce_loss: one label per row required");
    return cross_entropy_pll(logits, one_hot_targets(truth, logits.dim(1)));
}

LossGrad cross_entropy_pll(const Tensor& logits, const Tensor& targets) {
    check_logits_masks(logits, targets, "cross_entropy_pll");
    const std::size_t batch = logits.dim(0), k = logits.dim(1);
    const double inv_b = 1.0 / static_cast<double>(batch);
    LossGrad out{0.0, Tensor(logits.shape)};
    std::vector<double> dp(k);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto p = nn::softmax(logits.row(b));
        const auto t = targets.row(b);
        double v = 0.0;
        for (std::size_t s = 0; s < k; ++s) {
            if (t[s] == 0.0) {
                dp[s] = 0.0;
                continue;
            }
            v -= t[s] * nn::clamped_log(p[s]);
            dp[s] = -t[s] * nn::clamped_log_derivative(p[s]) * inv_b;
        }
        out.value += v * inv_b;
        nn::softmax_backward(p, dp, out.grad_logits.row(b));
    }
    return out;
}

LossGrad dnpl_loss(const Tensor& logits, const Tensor& masks) {
    check_logits_masks(logits, masks, "dnpl_loss");
    const std::size_t batch = logits.dim(0), k = logits.dim(1);
    const double inv_b = 1.0 / static_cast<double>(batch);
    LossGrad out{0.0, Tensor(logits.shape)};
    std::vector<double> dp(k);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto p = nn::softmax(logits.row(b));
        const auto m = masks.row(b);
        double mass = 0.0;
        for (std::size_t s = 0; s < k; ++s) mass += m[s] * p[s];
        out.value -= nn::clamped_log(std::min(mass, 1.0)) * inv_b;
        const double d_mass = -nn::clamped_log_derivative(mass) * inv_b;
        for (std::size_t s = 0; s < k; ++s) dp[s] = m[s] * d_mass;
        nn::softmax_backward(p, dp, out.grad_logits.row(b));
    }
    return out;
}

DisambiguatedLabel proden_disambiguate(std::span<const double> logits, std::span<const double> mask) {
    DisambiguatedLabel label;
    label.method = Method::proden;
    const auto p = nn::softmax(logits);
    double mass = 0.0;
    for (std::size_t s = 0; s < p.size(); ++s) mass += mask[s] != 0.0 ? p[s] : 0.0;
    label.dist.assign(p.size(), 0.0);
    if (mass <= nn::kLogEps) {
        std::vector<std::uint8_t> m(mask.size());
        for (std::size_t s = 0; s < m.size(); ++s) m[s] = mask[s] != 0.0;
        label.dist = uniformize(m);
        label.fallback = true;
        return label;
    }
    for (std::size_t s = 0; s < p.size(); ++s) label.dist[s] = mask[s] != 0.0 ? p[s] / mass : 0.0;
    return label;
}

double cavl_score(double logit) { return std::abs(logit - 1.0) * logit; }

DisambiguatedLabel cavl_disambiguate(std::span<const double> logits, std::span<const double> mask) {
    DisambiguatedLabel label;
    label.method = Method::cavl;
    const double n = std::accumulate(mask.begin(), mask.end(), 0.0);
    if (n <= 0.0) throw std::invalid_argument("cavl_disambiguate: empty candidate set");
    std::size_t best = mask.size();
    double best_score = 0.0;
    for (std::size_t s = 0; s < mask.size(); ++s) {
        if (mask[s] == 0.0) continue;
        const double score = cavl_score(logits[s]) / n;
        if (best == mask.size() || score > best_score) {
            best = s;
            best_score = score;
        }
    }
    label.dist.assign(mask.size(), 0.0);
    label.dist[best] = 1.0;
    return label;
}

std::vector<double> lw_weights(std::span<const double> logits, std::span<const double> mask, bool ld) {
    std::vector<double> w(logits.size(), 1.0);
    if (!ld) return w;
    const auto p = nn::softmax(logits);
    double in_mass = 0.0, out_mass = 0.0;
    std::size_t in_count = 0, out_count = 0;
    for (std::size_t s = 0; s < p.size(); ++s) {
        if (mask[s] != 0.0) {
            in_mass += p[s];
            ++in_count;
        } else {
            out_mass += p[s];
            ++out_count;
        }
    }
    for (std::size_t s = 0; s < p.size(); ++s) {
        const bool cand = mask[s] != 0.0;
        const double mass = cand ? in_mass : out_mass;
        const double count = static_cast<double>(cand ? in_count : out_count);
        w[s] = mass > 0.0 ? p[s] / mass : 1.0 / count;
    }
    return w;
}

LossGrad lw_loss_weighted(const Tensor& logits, const Tensor& masks, LwVariant variant, int beta,
                          const Tensor& weights) {
    check_logits_masks(logits, masks, "lw_loss");
    require_shape(weights, logits.shape, "lw_loss weights");
    if (beta < 0 || beta > 2) throw std::invalid_argument("lw_loss: beta must be 0, 1 or 2");
    const std::size_t batch = logits.dim(0), k = logits.dim(1);
    const double inv_b = 1.0 / static_cast<double>(batch);
    const double bt = static_cast<double>(beta);
    LossGrad out{0.0, Tensor(logits.shape)};
    std::vector<double> dp(k);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto z = logits.row(b);
        const auto m = masks.row(b);
        const auto w = weights.row(b);
        auto g = out.grad_logits.row(b);
        double v = 0.0;
        if (variant == LwVariant::sigmoid) {
            for (std::size_t s = 0; s < k; ++s) {
                if (m[s] != 0.0) {
                    const double sg = nn::sigmoid(-z[s]);
                    v += w[s] * sg;
                    g[s] = -w[s] * sg * (1.0 - sg) * inv_b;
                } else {
                    const double sg = nn::sigmoid(z[s]);
                    v += bt * w[s] * sg;
                    g[s] = bt * w[s] * sg * (1.0 - sg) * inv_b;
                }
            }
        } else {
            const auto p = nn::softmax(z);
            for (std::size_t s = 0; s < k; ++s) {
                if (m[s] != 0.0) {
                    v -= w[s] * nn::clamped_log(p[s]);
                    dp[s] = -w[s] * nn::clamped_log_derivative(p[s]) * inv_b;
                } else if (beta != 0) {
                    v -= bt * w[s] * nn::clamped_log(1.0 - p[s]);
                    dp[s] = bt * w[s] * nn::clamped_log_derivative(1.0 - p[s]) * inv_b;
                } else {
                    dp[s] = 0.0;
                }
            }
            nn::softmax_backward(p, dp, g);
        }
        out.value += v * inv_b;
    }
    return out;
}

LossGrad lw_loss(const Tensor& logits, const Tensor& masks, LwVariant variant, int beta, bool ld) {
    check_logits_masks(logits, masks, "lw_loss");
    Tensor weights(logits.shape);
    for (std::size_t b = 0; b < logits.dim(0); ++b) {
        const auto w = lw_weights(logits.row(b), masks.row(b), ld);
        std::copy(w.begin(), w.end(), weights.row(b).begin());
    }
    return lw_loss_weighted(logits, masks, variant, beta, weights);
}

Tensor gaussian_augment(const Tensor& x, double mu, double sigma, std::mt19937_64& rng) {
    if (sigma < 0.0) throw std::invalid_argument("gaussian_augment: sigma must be >= 0");
    Tensor out(x.shape);
    if (sigma == 0.0) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + mu;
        return out;
    }
    std::normal_distribution<double> noise(mu, sigma);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + noise(rng);
    return out;
}

DisambiguatedLabel cr_refine(std::array<std::span<const double>, 3> view_logits, std::span<const double> mask) {
    DisambiguatedLabel label;
    label.method = Method::cr;
    const std::size_t k = mask.size();
    std::array<std::vector<double>, 3> probs;
    for (std::size_t v = 0; v < 3; ++v) {
        if (view_logits[v].size() != k) throw ShapeError("cr_refine: view width differs from mask");
        probs[v] = nn::softmax(view_logits[v]);
    }
    label.dist.assign(k, 0.0);
    double mass = 0.0;
    for (std::size_t s = 0; s < k; ++s) {
        if (mask[s] == 0.0) continue;
        const double log_mean = (std::log(probs[0][s]) + std::log(probs[1][s]) + std::log(probs[2][s])) / 3.0;
        label.dist[s] = std::exp(log_mean);
        mass += label.dist[s];
    }
    if (mass <= nn::kLogEps) {
        std::vector<std::uint8_t> m(k);
        for (std::size_t s = 0; s < k; ++s) m[s] = mask[s] != 0.0;
        label.dist = uniformize(m);
        label.fallback = true;
        return label;
    }
    for (double& d : label.dist) d /= mass;
    return label;
}

double cr_warmup(int epoch, int total_epochs, bool ld) {
    if (!ld) return 0.0;
    if (total_epochs <= 0) throw std::invalid_argument("cr_warmup: total epochs must be positive");
    if (epoch < 0 || epoch > total_epochs) throw std::invalid_argument("cr_warmup: epoch outside [0, T]");
    return static_cast<double>(epoch) / static_cast<double>(total_epochs);
}

CrLoss cr_loss(const std::array<const Tensor*, 3>& views, const Tensor& masks, const Tensor& targets, double eta) {
    for (const Tensor* v : views) check_logits_masks(*v, masks, "cr_loss");
    require_shape(targets, masks.shape, "cr_loss targets");
    const std::size_t batch = masks.dim(0), k = masks.dim(1);
    const double inv_b = 1.0 / static_cast<double>(batch);
    CrLoss out;
    out.eta = eta;
    for (auto& g : out.grad_logits) g = Tensor(masks.shape);
    std::vector<double> dp(k);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto m = masks.row(b);
        const auto y = targets.row(b);

        // supervised part on the original view: push mass off the non-candidates
        const auto p0 = nn::softmax(views[0]->row(b));
        std::fill(dp.begin(), dp.end(), 0.0);
        for (std::size_t s = 0; s < k; ++s) {
            if (m[s] != 0.0) continue;
            out.supervised -= nn::clamped_log(1.0 - p0[s]) * inv_b;
            dp[s] = nn::clamped_log_derivative(1.0 - p0[s]) * inv_b;
        }
        nn::softmax_backward(p0, dp, out.grad_logits[0].row(b));

        // consistency part, every view against the refined target
        for (std::size_t v = 0; v < 3; ++v) {
            const auto p = nn::softmax(views[v]->row(b));
            for (std::size_t s = 0; s < k; ++s) {
                if (y[s] > 0.0) {
                    out.consistency += y[s] * (std::log(y[s]) - nn::clamped_log(p[s])) * inv_b;
                    dp[s] = -eta * y[s] * nn::clamped_log_derivative(p[s]) * inv_b;
                } else {
                    dp[s] = 0.0;
                }
            }
            std::vector<double> gz(k);
            nn::softmax_backward(p, dp, gz);
            auto g = out.grad_logits[v].row(b);
            for (std::size_t s = 0; s < k; ++s) g[s] += gz[s];
        }
    }
    out.value = out.supervised + eta * out.consistency;
    return out;
}

CrLoss cr_loss(const std::array<const Tensor*, 3>& views, const Tensor& masks, int epoch, int total_epochs, bool ld) {
    for (const Tensor* v : views) check_logits_masks(*v, masks, "cr_loss");
    Tensor targets(masks.shape);
    for (std::size_t b = 0; b < masks.dim(0); ++b) {
        const auto label = cr_refine({views[0]->row(b), views[1]->row(b), views[2]->row(b)}, masks.row(b));
        std::copy(label.dist.begin(), label.dist.end(), targets.row(b).begin());
    }
    return cr_loss(views, masks, targets, cr_warmup(epoch, total_epochs, ld));
}

}  // namespace pll
