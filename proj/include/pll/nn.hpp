#pragma once

// Layer primitives for the fixed backbone, each with an analytic backward pass.
//
// Activations are batch-major. Convolutions use kernel width 3, stride 1 and no
// padding, so every convolution shortens the sequence by two.

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "pll/tensor.hpp"

namespace pll::nn {

inline constexpr std::size_t kKernelWidth = 3;
/// Lower clamp applied to every probability before a logarithm.
inline constexpr double kLogEps = 1e-7;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kLeakySlope = 0.01;

using Rng = std::mt19937_64;

// ---- convolution -----------------------------------------------------------

/// Valid cross-correlation. input (B, C_in, L) or (C_in, L); kernel (C_out, C_in, 3); bias (C_out).
Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

struct Conv1dGrads {
    Tensor input;   // empty unless requested
    Tensor kernel;
    Tensor bias;
};

/// grad_out has the forward output's shape. Parameter gradients are accumulated into
/// `kernel_grad`/`bias_grad`; the input gradient is returned when `want_input`.
Tensor conv1d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                       Tensor& kernel_grad, Tensor& bias_grad, bool want_input);

// ---- batch normalization ---------------------------------------------------

struct BatchNormCache {
    std::vector<double> mean;      // per channel
    std::vector<double> variance;  // biased, per channel
    std::vector<double> inv_std;
    Tensor normalized;             // x-hat
    bool batch_stats = true;
};

/// Train-mode batch norm over (B, C, L): statistics per channel over batch and length.
Tensor batchnorm1d_train(const Tensor& input, const Tensor& scale, const Tensor& shift,
                         BatchNormCache& cache, double eps = kBatchNormEps);

/// Eval-mode batch norm using running statistics.
Tensor batchnorm1d_eval(const Tensor& input, const Tensor& scale, const Tensor& shift,
                        const Tensor& running_mean, const Tensor& running_var, BatchNormCache& cache,
                        double eps = kBatchNormEps);

/// Exponential moving average of the running statistics; the variance fed in is unbiased.
void batchnorm1d_update_running(const BatchNormCache& cache, std::size_t count_per_channel,
                                Tensor& running_mean, Tensor& running_var,
                                double momentum = kBatchNormMomentum);

Tensor batchnorm1d_backward(const BatchNormCache& cache, const Tensor& scale, const Tensor& grad_out,
                            Tensor& scale_grad, Tensor& shift_grad);

// ---- pointwise -------------------------------------------------------------

Tensor leaky_relu(const Tensor& input, double slope = kLeakySlope);
Tensor leaky_relu_backward(const Tensor& input, const Tensor& grad_out, double slope = kLeakySlope);

// ---- dense -----------------------------------------------------------------

/// Affine map W·x + b. input (D_in) or (B, D_in); weights (D_out, D_in); bias (D_out).
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

Tensor dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                      Tensor& weight_grad, Tensor& bias_grad, bool want_input);

// ---- dropout ---------------------------------------------------------------

/// Inverted dropout. Returns the scaled keep-mask (0 or 1/(1-rate)) in `mask`.
/// With `train == false` or rate 0 the input passes through and the mask is all ones.
Tensor dropout(const Tensor& input, double rate, bool train, Rng* rng, Tensor& mask);

// ---- probability helpers ---------------------------------------------------

std::vector<double> softmax(std::span<const double> logits);
/// Row-wise softmax of a (B, k) tensor.
Tensor softmax_rows(const Tensor& logits);
double sigmoid(double x);
Tensor sigmoid(const Tensor& x);
double clamp(double x, double lo, double hi);
Tensor clamp(const Tensor& x, double lo, double hi);

/// log(max(p, kLogEps)) and its derivative with respect to p (zero on the clamped side).
double clamped_log(double p);
double clamped_log_derivative(double p);

/// Chain rule through a softmax: given p = softmax(z) and dL/dp, writes dL/dz.
void softmax_backward(std::span<const double> probs, std::span<const double> grad_probs,
                      std::span<double> grad_logits);

// ---- L2 normalization ------------------------------------------------------

/// Row-wise unit-norm projection. Rows with norm below kLogEps are shifted by kLogEps
/// per component before normalizing so the output is always unit-norm.
Tensor l2_normalize_rows(const Tensor& input);
Tensor l2_normalize_rows_backward(const Tensor& input, const Tensor& output, const Tensor& grad_out);

}  // namespace pll::nn
