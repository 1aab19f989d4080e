#include "pll/pico.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pll/nn.hpp"

namespace pll {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Lowest index wins ties.
std::size_t masked_argmax(std::span<const double> values, std::span<const double> mask) {
    std::size_t best = values.size();
    for (std::size_t s = 0; s < values.size(); ++s) {
        if (mask[s] == 0.0) continue;
        if (best == values.size() || values[s] > values[best]) best = s;
    }
    if (best == values.size()) throw std::invalid_argument("empty candidate set");
    return best;
}

double log_sum_exp(std::span<const double> x) {
    const double m = *std::max_element(x.begin(), x.end());
    double s = 0.0;
    for (double v : x) s += std::exp(v - m);
    return m + std::log(s);
}

}  // namespace

ContrastiveState ContrastiveState::init(std::size_t queue_size, std::size_t dim, std::size_t classes,
                                        std::mt19937_64& rng) {
    if (queue_size == 0 || dim == 0 || classes == 0) throw std::invalid_argument("ContrastiveState: empty dimensions");
    std::normal_distribution<double> normal(0.0, 1.0);
    ContrastiveState st;
    Tensor raw({queue_size, dim});
    for (auto& v : raw.values) v = normal(rng);
    st.queue = nn::l2_normalize_rows(raw);
    st.queue_labels = Tensor({queue_size, classes});
    for (auto& v : st.queue_labels.values) v = normal(rng);
    st.prototypes = Tensor({classes, dim});
    st.updated.assign(classes, 0);
    return st;
}

void ContrastiveState::enqueue(const Tensor& keys, const Tensor& labels) {
    require_rank(keys, 2, "enqueue keys");
    if (keys.dim(1) != dim()) throw ShapeError("enqueue: key width differs from queue");
    require_shape(labels, {keys.dim(0), classes()}, "enqueue labels");
    const std::size_t d = dim(), k = classes();
    for (std::size_t b = 0; b < keys.dim(0); ++b) {
        std::copy_n(keys.row(b).begin(), d, queue.row(cursor).begin());
        std::copy_n(labels.row(b).begin(), k, queue_labels.row(cursor).begin());
        cursor = (cursor + 1) % queue_size();
    }
}

void ContrastiveState::update_prototypes(const Tensor& q, std::span<const std::size_t> cls, double lambda) {
    require_rank(q, 2, "update_prototypes");
    if (q.dim(1) != dim()) throw ShapeError("update_prototypes: embedding width differs");
    if (cls.size() != q.dim(0)) throw ShapeError("update_prototypes: one class per row required");
    if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("update_prototypes: lambda must lie in (0, 1)");
    const std::size_t d = dim();
    std::vector<double> blend(d);
    for (std::size_t b = 0; b < q.dim(0); ++b) {
        if (cls[b] >= classes()) throw std::out_of_range("update_prototypes: class out of range");
        auto proto = prototypes.row(cls[b]);
        const auto qi = q.row(b);
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            blend[j] = lambda * proto[j] + (1.0 - lambda) * qi[j];
            sq += blend[j] * blend[j];
        }
        if (!(sq > 0.0)) continue;
        const double inv = 1.0 / std::sqrt(sq);
        for (std::size_t j = 0; j < d; ++j) proto[j] = blend[j] * inv;
        updated[cls[b]] = 1;
    }
}

double ContrastiveState::max_prototype_norm_error() const {
    double worst = 0.0;
    for (std::size_t c = 0; c < classes(); ++c) {
        if (!updated[c]) continue;
        double sq = 0.0;
        for (double v : prototypes.row(c)) sq += v * v;
        worst = std::max(worst, std::abs(std::sqrt(sq) - 1.0));
    }
    return worst;
}

ContrastiveLoss pico_unsup_contrastive(const Tensor& q, const Tensor& k, const Tensor& queue, double tau) {
    require_rank(q, 2, "pico_unsup_contrastive");
    require_shape(k, q.shape, "pico_unsup_contrastive keys");
    require_rank(queue, 2, "pico_unsup_contrastive queue");
    if (queue.dim(0) == 0) throw std::invalid_argument("pico_unsup_contrastive: empty queue");
    if (queue.dim(1) != q.dim(1)) throw ShapeError("pico_unsup_contrastive: queue width differs");
    if (!(tau > 0.0)) throw std::invalid_argument("pico_unsup_contrastive: tau must be positive");
    const std::size_t batch = q.dim(0), n = queue.dim(0), d = q.dim(1);
    const double inv_b = 1.0 / static_cast<double>(batch);

    // the denominator is shared by every sample: one log-sum-exp over batch × queue
    std::vector<double> logits(batch * n);
    for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t m = 0; m < n; ++m) logits[i * n + m] = dot(q.row(i), queue.row(m)) / tau;
    }
    const double lse = log_sum_exp(logits);

    ContrastiveLoss out;
    out.grad_q = Tensor(q.shape);
    out.value = lse;
    for (std::size_t i = 0; i < batch; ++i) {
        out.value -= dot(q.row(i), k.row(i)) / tau * inv_b;
        auto g = out.grad_q.row(i);
        const auto ki = k.row(i);
        for (std::size_t j = 0; j < d; ++j) g[j] = -ki[j] / tau * inv_b;
        for (std::size_t m = 0; m < n; ++m) {
            const double w = std::exp(logits[i * n + m] - lse) / tau;
            const auto qm = queue.row(m);
            for (std::size_t j = 0; j < d; ++j) g[j] += w * qm[j];
        }
    }
    return out;
}

std::size_t pico_guess(std::span<const double> logits, std::span<const double> mask) {
    if (logits.size() != mask.size()) throw ShapeError("pico_guess: width mismatch");
    return masked_argmax(nn::softmax(logits), mask);
}

std::vector<std::size_t> pool_classes(const Tensor& pool_labels) {
    require_rank(pool_labels, 2, "pool_classes");
    std::vector<std::size_t> cls(pool_labels.dim(0));
    for (std::size_t r = 0; r < cls.size(); ++r) {
        const auto row = pool_labels.row(r);
        cls[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return cls;
}

std::vector<std::vector<std::size_t>> positive_sets(std::span<const std::size_t> guessed,
                                                    std::span<const std::size_t> pool_class) {
    std::vector<std::vector<std::size_t>> sets(guessed.size());
    for (std::size_t i = 0; i < guessed.size(); ++i) {
        for (std::size_t r = 0; r < pool_class.size(); ++r) {
            if (pool_class[r] == guessed[i]) sets[i].push_back(r);
        }
    }
    return sets;
}

ContrastiveLoss pico_sup_contrastive(const Tensor& q, const Tensor& pool,
                                     const std::vector<std::vector<std::size_t>>& positives, double tau) {
    require_rank(q, 2, "pico_sup_contrastive");
    require_rank(pool, 2, "pico_sup_contrastive pool");
    if (pool.dim(1) != q.dim(1)) throw ShapeError("pico_sup_contrastive: pool width differs");
    if (positives.size() != q.dim(0)) throw ShapeError("pico_sup_contrastive: one positive set per sample");
    if (!(tau > 0.0)) throw std::invalid_argument("pico_sup_contrastive: tau must be positive");
    const std::size_t batch = q.dim(0), n = pool.dim(0), d = q.dim(1);
    const double inv_b = 1.0 / static_cast<double>(batch);
    ContrastiveLoss out;
    out.grad_q = Tensor(q.shape);
    std::vector<double> sims(n);
    for (std::size_t i = 0; i < batch; ++i) {
        const auto& pos = positives[i];
        if (pos.empty()) {
            ++out.empty_positive;
            continue;
        }
        for (std::size_t a = 0; a < n; ++a) sims[a] = dot(q.row(i), pool.row(a)) / tau;
        const double lse = log_sum_exp(sims);
        const double inv_p = 1.0 / static_cast<double>(pos.size());
        double li = 0.0;
        auto g = out.grad_q.row(i);
        for (std::size_t p : pos) {
            if (p >= n) throw std::out_of_range("pico_sup_contrastive: positive index out of range");
            li -= (sims[p] - lse) * inv_p;
            const auto kp = pool.row(p);
            for (std::size_t j = 0; j < d; ++j) g[j] -= kp[j] * inv_p / tau * inv_b;
        }
        for (std::size_t a = 0; a < n; ++a) {
            const double w = std::exp(sims[a] - lse) / tau * inv_b;
            const auto ka = pool.row(a);
            for (std::size_t j = 0; j < d; ++j) g[j] += w * ka[j];
        }
        out.value += li * inv_b;
    }
    return out;
}

std::size_t pico_prototype_label(std::span<const double> q, const Tensor& prototypes, std::span<const double> mask) {
    require_rank(prototypes, 2, "pico_prototype_label");
    if (prototypes.dim(0) != mask.size() || prototypes.dim(1) != q.size()) {
        throw ShapeError("pico_prototype_label: shape mismatch");
    }
    std::vector<double> sims(mask.size());
    for (std::size_t c = 0; c < sims.size(); ++c) sims[c] = dot(q, prototypes.row(c));
    return masked_argmax(nn::softmax(sims), mask);
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "concat_rows");
    require_rank(b, 2, "concat_rows");
    if (a.dim(1) != b.dim(1)) throw ShapeError("concat_rows: width mismatch");
    Tensor out({a.dim(0) + b.dim(0), a.dim(1)});
    std::copy(a.values.begin(), a.values.end(), out.values.begin());
    std::copy(b.values.begin(), b.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

PicoLoss pico_total_loss(const ContrastiveState& state, const Tensor& logits, const Tensor& q, const Tensor& k,
                         const Tensor& masks, const MethodConfig& config) {
    require_rank(logits, 2, "pico_total_loss");
    require_shape(masks, logits.shape, "pico_total_loss masks");
    const std::size_t batch = logits.dim(0);
    std::vector<std::size_t> guessed(batch), proto;
    for (std::size_t b = 0; b < batch; ++b) guessed[b] = pico_guess(logits.row(b), masks.row(b));
    if (config.ld) {
        require_shape(q, {batch, state.dim()}, "pico_total_loss query embeddings");
        proto.resize(batch);
        for (std::size_t b = 0; b < batch; ++b) proto[b] = pico_prototype_label(q.row(b), state.prototypes, masks.row(b));
    }
    return pico_loss_with_labels(state, logits, q, k, masks, config, std::move(guessed), std::move(proto));
}

PicoLoss pico_loss_with_labels(const ContrastiveState& state, const Tensor& logits, const Tensor& q, const Tensor& k,
                               const Tensor& masks, const MethodConfig& config, std::vector<std::size_t> guessed,
                               std::vector<std::size_t> proto_labels) {
    require_rank(logits, 2, "pico_loss");
    require_shape(masks, logits.shape, "pico_loss masks");
    const std::size_t batch = logits.dim(0), classes = logits.dim(1);
    if (guessed.size() != batch) throw ShapeError("pico_loss: one guessed label per sample");
    if (config.ld && proto_labels.size() != batch) throw ShapeError("pico_loss: one prototype label per sample");
    const double xi = config.effective_xi();
    const Tensor uniform = uniform_targets(masks);

    PicoLoss out;
    out.guessed = std::move(guessed);
    out.proto_labels = std::move(proto_labels);
    auto ce = cross_entropy_pll(logits, config.ld ? one_hot_targets(out.proto_labels, classes) : uniform);
    out.ce = ce.value;
    out.grad_logits = std::move(ce.grad_logits);
    out.value = out.ce;
    if (xi == 0.0) return out;

    require_shape(q, {batch, state.dim()}, "pico_loss query embeddings");
    require_shape(k, q.shape, "pico_loss key embeddings");
    ContrastiveLoss cl;
    if (config.ld) {
        const Tensor pool = concat_rows(k, state.queue);
        const auto cls = pool_classes(concat_rows(uniform, state.queue_labels));
        cl = pico_sup_contrastive(q, pool, positive_sets(out.guessed, cls), config.pico_tau);
    } else {
        cl = pico_unsup_contrastive(q, k, state.queue, config.pico_tau);
    }
    out.contrastive = cl.value;
    out.empty_positive = cl.empty_positive;
    out.value += xi * cl.value;
    out.grad_q = std::move(cl.grad_q);
    for (auto& g : out.grad_q.values) g *= xi;
    return out;
}

void pico_commit(ContrastiveState& state, const Tensor& q, const Tensor& k, const Tensor& masks,
                 std::span<const std::size_t> guessed, double lambda) {
    state.update_prototypes(q, guessed, lambda);
    state.enqueue(k, uniform_targets(masks));
}

}  // namespace pll
