#pragma once

// Loss functions and label-disambiguation rules of the PLL strategies.
//
// Logits and candidate masks are (B, k) tensors; masks hold exact 0/1 values. Each loss
// returns its batch-mean value together with dLoss/dlogits. Disambiguated targets are
// treated as constants of the iteration that produced them: no gradient flows through them.

#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pll/labels.hpp"
#include "pll/tensor.hpp"

namespace pll {

enum class Method { supervised, dnpl, proden, cavl, lw, cr, pico };
enum class LwVariant { sigmoid, ce };

std::string to_string(Method m);
Method parse_method(const std::string& s);
std::string to_string(LwVariant v);
LwVariant parse_lw_variant(const std::string& s);

struct MethodConfig {
    Method method = Method::dnpl;
    bool ld = false;  // label disambiguation
    LwVariant lw_variant = LwVariant::ce;
    int beta = 2;
    double cr_mu = 0.5;
    double cr_sigma_weak = 0.2;
    double cr_sigma_strong = 0.8;
    double pico_tau = 0.07;
    double pico_xi = 0.5;       // contrastive weight; forced to 0 when !pico_contrastive
    double pico_lambda = 0.99;  // prototype moving average
    std::size_t pico_queue = 1000;
    std::size_t embedding_dim = 64;
    double key_momentum = 0.999;
    bool pico_contrastive = true;

    void validate() const;
    /// Compact name of the variant, e.g. "lw-ce-b2", "pico-nocl".
    std::string variant_key() const;
    /// Whether the method has a label-disambiguation branch to toggle.
    bool has_ld() const;
    double effective_xi() const { return pico_contrastive ? pico_xi : 0.0; }
};

struct DisambiguatedLabel {
    std::vector<double> dist;
    Method method = Method::dnpl;
    std::size_t iteration = 0;
    bool fallback = false;  // degenerate prediction mass replaced by the uniform candidate distribution
};

/// Sum 1 ± tol and no mass outside the mask.
bool is_confined(std::span<const double> dist, std::span<const double> mask, double tol = 1e-9);
double entropy(std::span<const double> dist);

struct LossGrad {
    double value = 0.0;
    Tensor grad_logits;
};

/// Mask tensor (B, k) from candidate sets.
Tensor mask_batch(const std::vector<const CandidateSet*>& sets);
/// Uniform candidate distributions (B, k) from a mask tensor.
Tensor uniform_targets(const Tensor& masks);
/// One-hot rows (B, k).
Tensor one_hot_targets(std::span<const std::size_t> classes, std::size_t k);

/// Mean over the batch of -Σ y log clamp(softmax).
LossGrad supervised_ce_loss(const Tensor& logits, std::span<const std::size_t> truth);

/// Mean over the batch of -log clamp(Σ_{s∈Y} softmax_s, ε, 1).
LossGrad dnpl_loss(const Tensor& logits, const Tensor& masks);

/// Mean over the batch of -Σ_s targets_s log clamp(softmax_s). Rows of `targets` are distributions.
LossGrad cross_entropy_pll(const Tensor& logits, const Tensor& targets);

/// Softmax masked to the candidates and renormalized; uniform fallback when that mass underflows.
DisambiguatedLabel proden_disambiguate(std::span<const double> logits, std::span<const double> mask);

/// Label importance |z - 1|·z on raw logits.
double cavl_score(double logit);
/// One-hot at argmax over candidates of score·(1/|Y|); lowest index wins ties.
DisambiguatedLabel cavl_disambiguate(std::span<const double> logits, std::span<const double> mask);

/// Per-class weights: with LD, softmax renormalized within the candidates and within the
/// non-candidates separately; without LD, all ones.
std::vector<double> lw_weights(std::span<const double> logits, std::span<const double> mask, bool ld);

/// Leveraged-weighting loss. Sigmoid variant: Σ_{Y} w σ(-z) + β Σ_{not Y} w σ(z).
/// CE variant: -[Σ_{Y} w log p + β Σ_{not Y} w log(1 - p)]. Weights are detached.
LossGrad lw_loss(const Tensor& logits, const Tensor& masks, LwVariant variant, int beta, bool ld);
/// Same with caller-supplied (frozen) weights, one row per sample.
LossGrad lw_loss_weighted(const Tensor& logits, const Tensor& masks, LwVariant variant, int beta,
                          const Tensor& weights);

/// x + Normal(mu, sigma) per entry, without re-clamping.
Tensor gaussian_augment(const Tensor& x, double mu, double sigma, std::mt19937_64& rng);

/// Geometric mean of the three views' softmaxes on the candidates, renormalized.
DisambiguatedLabel cr_refine(std::array<std::span<const double>, 3> view_logits, std::span<const double> mask);

struct CrLoss {
    double value = 0.0;
    double supervised = 0.0;   // L_s
    double consistency = 0.0;  // L_u
    double eta = 0.0;
    std::array<Tensor, 3> grad_logits;
};

/// η for epoch t of T: t/T with LD, 0 without.
double cr_warmup(int epoch, int total_epochs, bool ld);

/// L_s + η·L_u with L_s = mean -Σ_{not Y} log clamp(1 - softmax) on view 0 and
/// L_u = mean Σ_{views} KL(Y' || softmax(view)). `targets` holds Y' per sample.
CrLoss cr_loss(const std::array<const Tensor*, 3>& views, const Tensor& masks, const Tensor& targets, double eta);
/// Convenience form that refines the targets from the views themselves.
CrLoss cr_loss(const std::array<const Tensor*, 3>& views, const Tensor& masks, int epoch, int total_epochs, bool ld);

}  // namespace pll
