#pragma once

// Encoder/classifier network plus a contrastive projection head.
//
//   input (B, s) -> [conv(1->5, w3) -> batchnorm -> leaky relu]     (B, 5, s-2)
//                -> [conv(5->10, w3) -> batchnorm -> leaky relu]    (B, 10, s-4)
//                -> flatten                                          (B, 10(s-4))   "embedding"
//   classifier:  dense(10(s-4) -> hidden) -> leaky relu -> dropout -> dense(hidden -> k)
//   projection:  dense(10(s-4) -> N_emb) -> L2 normalize

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "pll/nn.hpp"
#include "pll/params.hpp"
#include "pll/tensor.hpp"

namespace pll {

struct BackboneConfig {
    std::size_t features = 310;
    std::size_t classes = 5;
    std::size_t hidden = 64;
    std::size_t embedding_dim = 64;
    std::size_t conv1_channels = 5;
    std::size_t conv2_channels = 10;
    double dropout = 0.5;
    double leaky_slope = nn::kLeakySlope;

    std::size_t embedding_size() const { return conv2_channels * (features - 4); }
    void validate() const;
    bool operator==(const BackboneConfig&) const = default;
};

/// How a forward pass treats the stochastic / stateful layers.
struct PassConfig {
    bool batch_stats = false;  // batch norm from batch statistics (train) or running stats (eval)
    bool dropout = false;
    bool project = false;      // also run the projection head

    static PassConfig train(bool project = false) { return {true, true, project}; }
    static PassConfig eval(bool project = false) { return {false, false, project}; }
    /// Batch statistics without dropout: deterministic, still exercises the train-mode backward.
    static PassConfig deterministic_train(bool project = false) { return {true, false, project}; }
};

/// Everything a backward pass needs from one forward pass.
struct ForwardTape {
    bool complete = false;
    PassConfig pass;
    std::size_t batch = 0;
    Tensor input;  // (B, 1, s)
    Tensor conv1, bn1, act1;
    Tensor conv2, bn2, act2;
    nn::BatchNormCache bn1_cache, bn2_cache;
    Tensor embedding;  // (B, 10(s-4))
    Tensor fc1, hidden, dropout_mask, hidden_dropped;
    Tensor logits;  // (B, k)
    Tensor projection_raw, projection;  // (B, N_emb), only when pass.project
};

/// FNV-1a over the sign of every leaky-ReLU input of the tape, chained from `seed`. Two
/// passes with equal signatures lie on the same linear piece of the activations.
std::uint64_t kink_signature(const ForwardTape& tape, std::uint64_t seed = 14695981039346656037ull);

class Backbone {
public:
    Backbone(BackboneConfig config, std::uint64_t init_seed);

    const BackboneConfig& config() const { return config_; }
    std::uint64_t init_seed() const { return init_seed_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

    /// Full recorded pass over a (B, s) batch. `rng` is required when pass.dropout.
    ForwardTape forward(const Tensor& batch, PassConfig pass, nn::Rng* rng = nullptr) const;

    /// Accumulates parameter gradients of a loss whose derivatives with respect to the tape's
    /// logits and (optionally) projection are given.
    void backward(const ForwardTape& tape, const Tensor& grad_logits, const Tensor* grad_projection,
                  GradientSet& grads) const;
    GradientSet backward(const ForwardTape& tape, const Tensor& grad_logits,
                         const Tensor* grad_projection = nullptr) const;

    /// Folds the tape's batch statistics into the running mean/variance.
    void update_running_stats(const ForwardTape& tape);

    // Stage-wise access, mainly for inspection and tests.
    Tensor encode(const Tensor& batch, PassConfig pass = PassConfig::eval()) const;
    Tensor classify(const Tensor& embedding, PassConfig pass = PassConfig::eval(), nn::Rng* rng = nullptr) const;
    Tensor project(const Tensor& embedding) const;

    /// Predicted classes in eval mode.
    std::vector<std::size_t> predict(const Tensor& batch) const;

private:
    void encode_into(ForwardTape& tape) const;
    void classify_into(ForwardTape& tape, nn::Rng* rng) const;
    void project_into(ForwardTape& tape) const;

    BackboneConfig config_;
    std::uint64_t init_seed_;
    ParameterSet params_;
    struct Slots {
        std::size_t conv1_w, conv1_b, bn1_w, bn1_b, bn1_mean, bn1_var;
        std::size_t conv2_w, conv2_b, bn2_w, bn2_b, bn2_mean, bn2_var;
        std::size_t fc1_w, fc1_b, fc2_w, fc2_b, proj_w, proj_b;
    } slot_{};
};

/// θ_key <- m·θ_key + (1-m)·θ_query for every entry, running statistics included.
void momentum_update(const ParameterSet& query, ParameterSet& key, double momentum);

/// Query network trained by gradients and its momentum-averaged key copy.
struct QueryKeyPair {
    Backbone query;
    Backbone key;
    double momentum = 0.999;

    QueryKeyPair(const Backbone& q, double m);
    void momentum_update();
};

// ---- checkpoints -----------------------------------------------------------
//
// Text format, one item per line:
//   pllkit-checkpoint 1
//   config <key>=<value> ...
//   tensor <name> <trainable 0|1> <rank> <dims...>
//   <values separated by spaces, shortest round-trip decimal>
//   ...
//   end
// Values round-trip bit-exactly.

struct Checkpoint {
    BackboneConfig config;
    std::uint64_t init_seed = 0;
    std::map<std::string, std::string> extra;  // free-form config echo (seed, method, ...)
    ParameterSet params;
};

void save_checkpoint(const std::filesystem::path& path, const Backbone& model,
                     const std::map<std::string, std::string>& extra = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Rebuilds a model from a checkpoint; parameter layout must match the config.
Backbone restore_backbone(const Checkpoint& ckpt);

}  // namespace pll
