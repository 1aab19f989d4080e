#include "pll/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pll {

std::string to_string(Schedule s) { return s == Schedule::cosine ? "cosine" : "none"; }

Schedule parse_schedule(const std::string& s) {
    if (s == "cosine") return Schedule::cosine;
    if (s == "none") return Schedule::none;
    throw std::invalid_argument("unknown scheduler: " + s);
}

SgdOptimizer::SgdOptimizer(SgdConfig config, const ParameterSet& params)
    : config_(config), lr_(config.learning_rate) {
    if (!(config_.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (config_.schedule == Schedule::cosine && config_.total_epochs <= 0) {
        throw std::invalid_argument("cosine schedule needs a positive epoch count");
    }
    velocity_.reserve(params.size());
    for (const auto& e : params.entries()) {
        velocity_.push_back(e.trainable ? Tensor(e.value.shape) : Tensor());
    }
}

void SgdOptimizer::set_epoch(int epoch) {
    if (config_.schedule == Schedule::none) {
        lr_ = config_.learning_rate;
        return;
    }
    const double t = static_cast<double>(epoch) / static_cast<double>(config_.total_epochs);
    lr_ = config_.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void SgdOptimizer::step(ParameterSet& params, const GradientSet& grads) {
    if (!grads.congruent(params) || velocity_.size() != params.size()) {
        throw ShapeError("sgd_step: gradients do not match the parameter layout");
    }
    const double m = config_.momentum, wd = config_.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params.entry(i).trainable) continue;
        Tensor& theta = params[i];
        Tensor& v = velocity_[i];
        const Tensor& g = grads[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            v[j] = m * v[j] + (g[j] + wd * theta[j]);
            theta[j] -= lr_ * v[j];
        }
    }
}

}  // namespace pll
