#include "pll/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pll::nn {

namespace {

// Views any rank-2 (C, L) operand as a batch of one.
Tensor as_batched(const Tensor& t, std::size_t rank_unbatched) {
    if (t.rank() == rank_unbatched) {
        Shape s = t.shape;
        s.insert(s.begin(), 1);
        return t.reshaped(std::move(s));
    }
    return t;
}

}  // namespace

// ---- convolution -----------------------------------------------------------

Tensor conv1d(const Tensor& input_any, const Tensor& kernel, const Tensor& bias) {
    const bool unbatched = input_any.rank() == 2;
    const Tensor input = as_batched(input_any, 2);
    require_rank(input, 3, "conv1d input");
    require_rank(kernel, 3, "conv1d kernel");
    const std::size_t batch = input.dim(0), c_in = input.dim(1), len = input.dim(2);
    const std::size_t c_out = kernel.dim(0);
    if (kernel.dim(1) != c_in || kernel.dim(2) != kKernelWidth) {
        throw ShapeError("conv1d: kernel " + shape_string(kernel.shape) + " does not fit input " +
                         shape_string(input.shape));
    }
    require_shape(bias, {c_out}, "conv1d bias");
    if (len < kKernelWidth) {
        throw ShapeError("conv1d: input length " + std::to_string(len) + " shorter than kernel");
    }
    const std::size_t out_len = len - kKernelWidth + 1;
    Tensor out({batch, c_out, out_len});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < c_out; ++o) {
            double* y = out.data() + (b * c_out + o) * out_len;
            std::fill(y, y + out_len, bias[o]);
            for (std::size_t c = 0; c < c_in; ++c) {
                const double* x = input.data() + (b * c_in + c) * len;
                const double* w = kernel.data() + (o * c_in + c) * kKernelWidth;
                const double w0 = w[0], w1 = w[1], w2 = w[2];
                for (std::size_t l = 0; l < out_len; ++l) {
                    y[l] += w0 * x[l] + w1 * x[l + 1] + w2 * x[l + 2];
                }
            }
        }
    }
    if (unbatched) return out.reshaped({c_out, out_len});
    return out;
}

Tensor conv1d_backward(const Tensor& input_any, const Tensor& kernel, const Tensor& grad_out_any,
                       Tensor& kernel_grad, Tensor& bias_grad, bool want_input) {
    const bool unbatched = input_any.rank() == 2;
    const Tensor input = as_batched(input_any, 2);
    const Tensor grad_out = as_batched(grad_out_any, 2);
    const std::size_t batch = input.dim(0), c_in = input.dim(1), len = input.dim(2);
    const std::size_t c_out = kernel.dim(0), out_len = len - kKernelWidth + 1;
    require_shape(grad_out, {batch, c_out, out_len}, "conv1d_backward grad_out");
    require_shape(kernel_grad, kernel.shape, "conv1d_backward kernel_grad");
    require_shape(bias_grad, {c_out}, "conv1d_backward bias_grad");

    Tensor grad_in;
    if (want_input) grad_in = Tensor(input.shape);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < c_out; ++o) {
            const double* g = grad_out.data() + (b * c_out + o) * out_len;
            bias_grad[o] += std::accumulate(g, g + out_len, 0.0);
            for (std::size_t c = 0; c < c_in; ++c) {
                const double* x = input.data() + (b * c_in + c) * len;
                double* dw = kernel_grad.data() + (o * c_in + c) * kKernelWidth;
                double s0 = 0.0, s1 = 0.0, s2 = 0.0;
                for (std::size_t l = 0; l < out_len; ++l) {
                    s0 += g[l] * x[l];
                    s1 += g[l] * x[l + 1];
                    s2 += g[l] * x[l + 2];
                }
                dw[0] += s0;
                dw[1] += s1;
                dw[2] += s2;
                if (want_input) {
                    const double* w = kernel.data() + (o * c_in + c) * kKernelWidth;
                    double* dx = grad_in.data() + (b * c_in + c) * len;
                    for (std::size_t l = 0; l < out_len; ++l) {
                        dx[l] += g[l] * w[0];
                        dx[l + 1] += g[l] * w[1];
                        dx[l + 2] += g[l] * w[2];
                    }
                }
            }
        }
    }
    if (want_input && unbatched) return grad_in.reshaped({c_in, len});
    return grad_in;
}

// ---- batch normalization ---------------------------------------------------

namespace {

void check_bn_params(const Tensor& input, const Tensor& scale, const Tensor& shift) {
    require_rank(input, 3, "batchnorm1d input");
    require_shape(scale, {input.dim(1)}, "batchnorm1d scale");
    require_shape(shift, {input.dim(1)}, "batchnorm1d shift");
}

Tensor bn_apply(const Tensor& input, const Tensor& scale, const Tensor& shift, BatchNormCache& cache) {
    const std::size_t batch = input.dim(0), channels = input.dim(1), len = input.dim(2);
    cache.normalized = Tensor(input.shape);
    Tensor out(input.shape);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t off = (b * channels + c) * len;
            const double m = cache.mean[c], is = cache.inv_std[c], g = scale[c], s = shift[c];
            for (std::size_t l = 0; l < len; ++l) {
                const double xh = (input[off + l] - m) * is;
                cache.normalized[off + l] = xh;
                out[off + l] = g * xh + s;
            }
        }
    }
    return out;
}

}  // namespace

Tensor batchnorm1d_train(const Tensor& input, const Tensor& scale, const Tensor& shift,
                         BatchNormCache& cache, double eps) {
    check_bn_params(input, scale, shift);
    const std::size_t batch = input.dim(0), channels = input.dim(1), len = input.dim(2);
    const std::size_t count = batch * len;
    if (count < 2) {
        throw ShapeError("batchnorm1d: train mode needs at least two values per channel, got shape " +
                         shape_string(input.shape));
    }
    cache.batch_stats = true;
    cache.mean.assign(channels, 0.0);
    cache.variance.assign(channels, 0.0);
    cache.inv_std.assign(channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        double sum = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double* x = input.data() + (b * channels + c) * len;
            sum += std::accumulate(x, x + len, 0.0);
        }
        const double mean = sum / static_cast<double>(count);
        double sq = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double* x = input.data() + (b * channels + c) * len;
            for (std::size_t l = 0; l < len; ++l) sq += (x[l] - mean) * (x[l] - mean);
        }
        cache.mean[c] = mean;
        cache.variance[c] = sq / static_cast<double>(count);
        cache.inv_std[c] = 1.0 / std::sqrt(cache.variance[c] + eps);
    }
    return bn_apply(input, scale, shift, cache);
}

Tensor batchnorm1d_eval(const Tensor& input, const Tensor& scale, const Tensor& shift,
                        const Tensor& running_mean, const Tensor& running_var, BatchNormCache& cache,
                        double eps) {
    check_bn_params(input, scale, shift);
    const std::size_t channels = input.dim(1);
    require_shape(running_mean, {channels}, "batchnorm1d running_mean");
    require_shape(running_var, {channels}, "batchnorm1d running_var");
    cache.batch_stats = false;
    cache.mean = running_mean.values;
    cache.variance = running_var.values;
    cache.inv_std.resize(channels);
    for (std::size_t c = 0; c < channels; ++c) cache.inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps);
    return bn_apply(input, scale, shift, cache);
}

void batchnorm1d_update_running(const BatchNormCache& cache, std::size_t count_per_channel,
                                Tensor& running_mean, Tensor& running_var, double momentum) {
    const double n = static_cast<double>(count_per_channel);
    const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
    for (std::size_t c = 0; c < cache.mean.size(); ++c) {
        running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * cache.mean[c];
        running_var[c] = (1.0 - momentum) * running_var[c] + momentum * cache.variance[c] * unbias;
    }
}

Tensor batchnorm1d_backward(const BatchNormCache& cache, const Tensor& scale, const Tensor& grad_out,
                            Tensor& scale_grad, Tensor& shift_grad) {
    const Tensor& xhat = cache.normalized;
    require_shape(grad_out, xhat.shape, "batchnorm1d_backward grad_out");
    const std::size_t batch = xhat.dim(0), channels = xhat.dim(1), len = xhat.dim(2);
    const double count = static_cast<double>(batch * len);
    Tensor grad_in(xhat.shape);
    for (std::size_t c = 0; c < channels; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t off = (b * channels + c) * len;
            for (std::size_t l = 0; l < len; ++l) {
                sum_g += grad_out[off + l];
                sum_gx += grad_out[off + l] * xhat[off + l];
            }
        }
        scale_grad[c] += sum_gx;
        shift_grad[c] += sum_g;
        const double k = scale[c] * cache.inv_std[c];
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t off = (b * channels + c) * len;
            for (std::size_t l = 0; l < len; ++l) {
                if (cache.batch_stats) {
                    grad_in[off + l] =
                        k * (grad_out[off + l] - sum_g / count - xhat[off + l] * sum_gx / count);
                } else {
                    grad_in[off + l] = k * grad_out[off + l];
                }
            }
        }
    }
    return grad_in;
}

// ---- pointwise -------------------------------------------------------------

Tensor leaky_relu(const Tensor& input, double slope) {
    Tensor out(input.shape);
    for (std::size_t i = 0; i < input.size(); ++i) {
        out[i] = input[i] >= 0.0 ? input[i] : slope * input[i];
    }
    return out;
}

Tensor leaky_relu_backward(const Tensor& input, const Tensor& grad_out, double slope) {
    require_shape(grad_out, input.shape, "leaky_relu_backward");
    Tensor out(input.shape);
    for (std::size_t i = 0; i < input.size(); ++i) {
        out[i] = input[i] >= 0.0 ? grad_out[i] : slope * grad_out[i];
    }
    return out;
}

// ---- dense -----------------------------------------------------------------

Tensor dense(const Tensor& input_any, const Tensor& weights, const Tensor& bias) {
    const bool unbatched = input_any.rank() == 1;
    const Tensor input = as_batched(input_any, 1);
    require_rank(input, 2, "dense input");
    require_rank(weights, 2, "dense weights");
    const std::size_t batch = input.dim(0), d_in = input.dim(1), d_out = weights.dim(0);
    if (weights.dim(1) != d_in) {
        throw ShapeError("dense: weights " + shape_string(weights.shape) + " do not fit input " +
                         shape_string(input_any.shape));
    }
    require_shape(bias, {d_out}, "dense bias");
    Tensor out({batch, d_out});
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = input.data() + b * d_in;
        for (std::size_t o = 0; o < d_out; ++o) {
            const double* w = weights.data() + o * d_in;
            double acc = 0.0;
            for (std::size_t i = 0; i < d_in; ++i) acc += w[i] * x[i];
            out[b * d_out + o] = acc + bias[o];
        }
    }
    if (unbatched) return out.reshaped({d_out});
    return out;
}

Tensor dense_backward(const Tensor& input_any, const Tensor& weights, const Tensor& grad_out_any,
                      Tensor& weight_grad, Tensor& bias_grad, bool want_input) {
    const bool unbatched = input_any.rank() == 1;
    const Tensor input = as_batched(input_any, 1);
    const Tensor grad_out = as_batched(grad_out_any, 1);
    const std::size_t batch = input.dim(0), d_in = input.dim(1), d_out = weights.dim(0);
    require_shape(grad_out, {batch, d_out}, "dense_backward grad_out");
    require_shape(weight_grad, weights.shape, "dense_backward weight_grad");
    require_shape(bias_grad, {d_out}, "dense_backward bias_grad");
    Tensor grad_in;
    if (want_input) grad_in = Tensor(input.shape);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = input.data() + b * d_in;
        for (std::size_t o = 0; o < d_out; ++o) {
            const double g = grad_out[b * d_out + o];
            if (g == 0.0) continue;
            bias_grad[o] += g;
            double* dw = weight_grad.data() + o * d_in;
            for (std::size_t i = 0; i < d_in; ++i) dw[i] += g * x[i];
            if (want_input) {
                const double* w = weights.data() + o * d_in;
                double* dx = grad_in.data() + b * d_in;
                for (std::size_t i = 0; i < d_in; ++i) dx[i] += g * w[i];
            }
        }
    }
    if (want_input && unbatched) return grad_in.reshaped({d_in});
    return grad_in;
}

// ---- dropout ---------------------------------------------------------------

Tensor dropout(const Tensor& input, double rate, bool train, Rng* rng, Tensor& mask) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
    mask = Tensor(input.shape, 1.0);
    if (!train || rate == 0.0) return input;
    if (rng == nullptr) throw std::invalid_argument("dropout: train mode needs an rng");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor out(input.shape);
    for (std::size_t i = 0; i < input.size(); ++i) {
        mask[i] = unif(*rng) < rate ? 0.0 : keep_scale;
        out[i] = input[i] * mask[i];
    }
    return out;
}

// ---- probability helpers ---------------------------------------------------

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    if (logits.empty()) return out;
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

Tensor softmax_rows(const Tensor& logits) {
    require_rank(logits, 2, "softmax_rows");
    Tensor out(logits.shape);
    for (std::size_t b = 0; b < logits.dim(0); ++b) {
        const auto p = softmax(logits.row(b));
        std::copy(p.begin(), p.end(), out.row(b).begin());
    }
    return out;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
    Tensor out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
    return out;
}

double clamp(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

Tensor clamp(const Tensor& x, double lo, double hi) {
    Tensor out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = clamp(x[i], lo, hi);
    return out;
}

double clamped_log(double p) { return std::log(std::max(p, kLogEps)); }

double clamped_log_derivative(double p) { return p > kLogEps ? 1.0 / p : 0.0; }

void softmax_backward(std::span<const double> probs, std::span<const double> grad_probs,
                      std::span<double> grad_logits) {
    double dot = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * grad_probs[i];
    for (std::size_t i = 0; i < probs.size(); ++i) grad_logits[i] = probs[i] * (grad_probs[i] - dot);
}

// ---- L2 normalization ------------------------------------------------------

namespace {

// Row actually normalized: the input, or the input shifted off the origin.
std::vector<double> normalization_base(std::span<const double> v, double& norm) {
    std::vector<double> u(v.begin(), v.end());
    norm = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
    if (norm < kLogEps) {
        for (double& x : u) x += kLogEps;
        norm = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
    }
    return u;
}

}  // namespace

Tensor l2_normalize_rows(const Tensor& input) {
    require_rank(input, 2, "l2_normalize_rows");
    Tensor out(input.shape);
    for (std::size_t b = 0; b < input.dim(0); ++b) {
        double norm = 0.0;
        const auto u = normalization_base(input.row(b), norm);
        auto y = out.row(b);
        for (std::size_t i = 0; i < u.size(); ++i) y[i] = u[i] / norm;
    }
    return out;
}

Tensor l2_normalize_rows_backward(const Tensor& input, const Tensor& output, const Tensor& grad_out) {
    require_shape(grad_out, input.shape, "l2_normalize_rows_backward");
    Tensor grad_in(input.shape);
    for (std::size_t b = 0; b < input.dim(0); ++b) {
        double norm = 0.0;
        normalization_base(input.row(b), norm);
        const auto y = output.row(b);
        const auto g = grad_out.row(b);
        const double dot = std::inner_product(y.begin(), y.end(), g.begin(), 0.0);
        auto dx = grad_in.row(b);
        for (std::size_t i = 0; i < y.size(); ++i) dx[i] = (g[i] - y[i] * dot) / norm;
    }
    return grad_in;
}

}  // namespace pll::nn
