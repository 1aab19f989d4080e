#pragma once

// Prototype-guided contrastive PLL: embedding queue, pseudo-label pool, class prototypes
// and the losses that use them.
//
// Q holds query embeddings (B, d) from the trained network, K key embeddings (B, d) from the
// momentum copy. Both are unit rows. K, the queue and the prototypes carry no gradient.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "pll/methods.hpp"
#include "pll/tensor.hpp"

namespace pll {

struct ContrastiveState {
    Tensor queue;         // (N_q, d), unit rows
    Tensor queue_labels;  // (N_q, k) pseudo-label pool
    Tensor prototypes;    // (k, d), zero until a class receives its first update
    std::vector<std::uint8_t> updated;  // per class
    std::size_t cursor = 0;

    /// Gaussian queue (rows then normalized), Gaussian pool labels, zero prototypes.
    static ContrastiveState init(std::size_t queue_size, std::size_t dim, std::size_t classes, std::mt19937_64& rng);

    std::size_t queue_size() const { return queue.empty() ? 0 : queue.dim(0); }
    std::size_t dim() const { return queue.empty() ? 0 : queue.dim(1); }
    std::size_t classes() const { return queue_labels.empty() ? 0 : queue_labels.dim(1); }

    /// FIFO: overwrite the oldest rows with `keys` and `labels`, in batch order.
    void enqueue(const Tensor& keys, const Tensor& labels);
    /// proto_c ← normalize(λ·proto_c + (1 - λ)·Q_i) for c = classes[i], in batch order.
    void update_prototypes(const Tensor& q, std::span<const std::size_t> classes, double lambda);
    /// Largest | ||proto_c|| - 1 | over the classes updated so far (0 when none).
    double max_prototype_norm_error() const;
};

struct ContrastiveLoss {
    double value = 0.0;
    Tensor grad_q;  // dLoss/dQ, (B, d)
    std::size_t empty_positive = 0;
};

/// Mean over i of -log[exp(Q_i·K_i/τ) / Σ_{i'} Σ_n exp(Q_{i'}·queue_n/τ)].
ContrastiveLoss pico_unsup_contrastive(const Tensor& q, const Tensor& k, const Tensor& queue, double tau);

/// argmax over candidates of softmax(logits)·Ŷ̄; lowest index wins ties.
std::size_t pico_guess(std::span<const double> logits, std::span<const double> mask);
/// Argmax of each pool label row, lowest index on ties.
std::vector<std::size_t> pool_classes(const Tensor& pool_labels);
/// Indices of pool rows whose class equals guessed[i], per sample.
std::vector<std::vector<std::size_t>> positive_sets(std::span<const std::size_t> guessed,
                                                    std::span<const std::size_t> pool_class);

/// Mean over i of -(1/|S_i|) Σ_{p∈S_i} log[exp(Q_i·pool_p/τ) / Σ_a exp(Q_i·pool_a/τ)].
/// Samples with empty S_i contribute 0 and are counted.
ContrastiveLoss pico_sup_contrastive(const Tensor& q, const Tensor& pool,
                                     const std::vector<std::vector<std::size_t>>& positives, double tau);

/// argmax over candidates of softmax(prototypes·Q_i)·Ŷ̄; lowest index wins ties.
std::size_t pico_prototype_label(std::span<const double> q, const Tensor& prototypes, std::span<const double> mask);

/// cat(a, b) along rows.
Tensor concat_rows(const Tensor& a, const Tensor& b);

struct PicoLoss {
    double value = 0.0;
    double ce = 0.0;
    double contrastive = 0.0;
    Tensor grad_logits;
    Tensor grad_q;  // empty when the contrastive weight is 0
    std::vector<std::size_t> guessed;
    std::vector<std::size_t> proto_labels;  // only with LD
    std::size_t empty_positive = 0;
};

/// CE on one-hot prototype labels (LD) or on Ŷ̄ (no LD), plus ξ times the supervised (LD)
/// or unsupervised (no LD) contrastive term. Reads `state` without modifying it.
PicoLoss pico_total_loss(const ContrastiveState& state, const Tensor& logits, const Tensor& q, const Tensor& k,
                         const Tensor& masks, const MethodConfig& config);

/// Same with the guessed and prototype labels supplied by the caller (prototype labels are
/// read only with LD).
PicoLoss pico_loss_with_labels(const ContrastiveState& state, const Tensor& logits, const Tensor& q, const Tensor& k,
                               const Tensor& masks, const MethodConfig& config, std::vector<std::size_t> guessed,
                               std::vector<std::size_t> proto_labels);

/// After the optimizer step: prototypes from the detached Q and the guessed labels, then
/// enqueue K with the batch's Ŷ̄.
void pico_commit(ContrastiveState& state, const Tensor& q, const Tensor& k, const Tensor& masks,
                 std::span<const std::size_t> guessed, double lambda);

}  // namespace pll
