#pragma once

#include <string>
#include <vector>

#include "pll/params.hpp"

namespace pll {

enum class Schedule { none, cosine };

std::string to_string(Schedule s);
Schedule parse_schedule(const std::string& s);

struct SgdConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    Schedule schedule = Schedule::cosine;
    int total_epochs = 30;
};

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient:
///   v <- m*v + (g + wd*theta);  theta <- theta - lr*v
/// The cosine schedule sets lr_t = lr * (1 + cos(pi*t/T)) / 2 at epoch t.
class SgdOptimizer {
public:
    SgdOptimizer(SgdConfig config, const ParameterSet& params);

    void step(ParameterSet& params, const GradientSet& grads);
    void set_epoch(int epoch);

    double current_lr() const { return lr_; }
    const SgdConfig& config() const { return config_; }
    const std::vector<Tensor>& velocity() const { return velocity_; }

private:
    SgdConfig config_;
    double lr_;
    std::vector<Tensor> velocity_;
};

}  // namespace pll
