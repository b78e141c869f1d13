#pragma once

#include "fibnet/tensor.hpp"

#include <cstddef>
#include <span>
#include <type_traits>
#include <vector>

namespace fibnet {

enum class Mode { train, infer };

// ---------------------------------------------------------------------------
// Convolution. Weights are laid out (kh, kw, in_c, out_c), bias (out_c).
// ---------------------------------------------------------------------------

struct ConvGeometry {
    std::size_t kernel = 3;
    std::size_t in_c = 1;
    std::size_t out_c = 1;
    std::size_t stride = 1;
    Padding padding = Padding::same;

    [[nodiscard]] std::size_t weight_count() const { return kernel * kernel * in_c * out_c; }
    // (k*k*in_c + 1) * out_c
    [[nodiscard]] std::size_t trainable_count() const { return (kernel * kernel * in_c + 1) * out_c; }
};

template <typename T>
struct ConvParams {
    ConvGeometry geometry;
    std::vector<T> weights;
    std::vector<T> bias;

    static ConvParams zeros(const ConvGeometry &g) { return {g, std::vector<T>(g.weight_count()), std::vector<T>(g.out_c)}; }
    [[nodiscard]] std::size_t trainable_count() const { return weights.size() + bias.size(); }
};

template <typename T>
struct ConvGrads {
    BasicTensor<T> grad_x;
    std::vector<T> grad_w;
    std::vector<T> grad_b;
};

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T> &x, std::span<const T> weights, std::span<const T> bias, const ConvGeometry &g);

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T> &x, std::span<const T> weights, const ConvGeometry &g,
                             const BasicTensor<T> &grad_out);

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T> &x, const ConvParams<T> &p) {
    return conv2d_forward<T>(x, p.weights, p.bias, p.geometry);
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T> &x, const ConvParams<T> &p, const BasicTensor<T> &grad_out) {
    return conv2d_backward<T>(x, p.weights, p.geometry, grad_out);
}

// Per-channel 3x3 filtering, stride 1, same padding. Weights (3, 3, c, 1), bias (c).
template <typename T>
BasicTensor<T> depthwise_forward(const BasicTensor<T> &x, std::span<const T> weights, std::span<const T> bias);

template <typename T>
ConvGrads<T> depthwise_backward(const BasicTensor<T> &x, std::span<const T> weights, const BasicTensor<T> &grad_out);

// Depthwise 3x3 followed by a 1x1 pointwise projection.
template <typename T>
struct DwscParams {
    std::size_t in_c = 1;
    std::size_t out_c = 1;
    std::vector<T> depthwise_weights;  // (3, 3, in_c, 1)
    std::vector<T> depthwise_bias;     // (in_c)
    std::vector<T> pointwise_weights;  // (1, 1, in_c, out_c)
    std::vector<T> pointwise_bias;     // (out_c)

    static DwscParams zeros(std::size_t in_c, std::size_t out_c) {
        return {in_c, out_c, std::vector<T>(9 * in_c), std::vector<T>(in_c), std::vector<T>(in_c * out_c), std::vector<T>(out_c)};
    }
    [[nodiscard]] ConvGeometry pointwise_geometry() const { return {1, in_c, out_c, 1, Padding::same}; }
    [[nodiscard]] std::size_t depthwise_count() const { return depthwise_weights.size() + depthwise_bias.size(); }
    [[nodiscard]] std::size_t pointwise_count() const { return pointwise_weights.size() + pointwise_bias.size(); }
    [[nodiscard]] std::size_t trainable_count() const { return depthwise_count() + pointwise_count(); }
};

template <typename T>
struct DwscGrads {
    BasicTensor<T> grad_x;
    std::vector<T> depthwise_w;
    std::vector<T> depthwise_b;
    std::vector<T> pointwise_w;
    std::vector<T> pointwise_b;
};

template <typename T>
BasicTensor<T> dwsc_forward(const BasicTensor<T> &x, const DwscParams<T> &p);

template <typename T>
DwscGrads<T> dwsc_backward(const BasicTensor<T> &x, const DwscParams<T> &p, const BasicTensor<T> &grad_out);

// ---------------------------------------------------------------------------
// Batch normalization over (n, h, w) per channel.
// ---------------------------------------------------------------------------

struct BatchNormSettings {
    double momentum = 0.99;
    double epsilon = 1e-5;
};

template <typename T>
struct BatchNormParams {
    std::vector<T> gamma;
    std::vector<T> beta;
    std::vector<T> running_mean;
    std::vector<T> running_var;
    BatchNormSettings settings;

    static BatchNormParams identity(std::size_t c, BatchNormSettings s = {}) {
        return {std::vector<T>(c, T(1)), std::vector<T>(c, T(0)), std::vector<T>(c, T(0)), std::vector<T>(c, T(1)), s};
    }
    [[nodiscard]] std::size_t channels() const { return gamma.size(); }
    [[nodiscard]] std::size_t trainable_count() const { return gamma.size() + beta.size(); }
};

template <typename T>
struct BatchNormCache {
    Mode mode = Mode::train;
    BasicTensor<T> x_hat;
    std::vector<T> inv_std;
};

template <typename T>
struct BatchNormGrads {
    BasicTensor<T> grad_x;
    std::vector<T> grad_gamma;
    std::vector<T> grad_beta;
};

// Train mode normalizes with batch statistics (biased variance) and updates
// running = momentum * running + (1 - momentum) * batch. Infer mode uses the
// running statistics and leaves them untouched.
template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T> &x, std::span<const T> gamma, std::span<const T> beta,
                                 std::span<T> running_mean, std::span<T> running_var, Mode mode,
                                 const BatchNormSettings &settings, BatchNormCache<T> *cache);

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T> &cache, std::span<const T> gamma, const BasicTensor<T> &grad_out);

template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T> &x, BatchNormParams<T> &p, Mode mode,
                                 std::type_identity_t<BatchNormCache<T>> *cache = nullptr) {
    return batchnorm_forward<T>(x, p.gamma, p.beta, p.running_mean, p.running_var, mode, p.settings, cache);
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T> &x);

// Gradient passes where the pre-activation is strictly positive; zero at 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T> &pre_activation, const BasicTensor<T> &grad_out);

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

struct PoolGeometry {
    std::size_t pool = 2;
    std::size_t stride = 2;
    Padding padding = Padding::same;
};

template <typename T>
struct MaxPoolResult {
    BasicTensor<T> out;
    std::vector<std::size_t> argmax;  // flat input offset per output element
};

// Padded cells never take part. Ties go to the first element in row-major
// window order.
template <typename T>
MaxPoolResult<T> maxpool_forward(const BasicTensor<T> &x, const PoolGeometry &g);

template <typename T>
BasicTensor<T> maxpool_backward(const Shape &input_shape, std::span<const std::size_t> argmax, const BasicTensor<T> &grad_out);

// Mean over in-bounds elements only.
template <typename T>
BasicTensor<T> avgpool_forward(const BasicTensor<T> &x, const PoolGeometry &g);

template <typename T>
BasicTensor<T> avgpool_backward(const Shape &input_shape, const PoolGeometry &g, const BasicTensor<T> &grad_out);

inline constexpr PoolGeometry kAvg2MaxGeometry{3, 2, Padding::same};

template <typename T>
struct Avg2MaxResult {
    BasicTensor<T> out;
    std::vector<std::size_t> argmax;
};

// avgpool(x, 3, 2, same) - 2 * maxpool(x, 3, 2, same)
template <typename T>
Avg2MaxResult<T> avg2max_forward(const BasicTensor<T> &x);

template <typename T>
BasicTensor<T> avg2max_pool(const BasicTensor<T> &x) {
    return avg2max_forward(x).out;
}

template <typename T>
BasicTensor<T> avg2max_backward(const Shape &input_shape, std::span<const std::size_t> argmax, const BasicTensor<T> &grad_out);

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T> &x);

template <typename T>
BasicTensor<T> global_avg_pool_backward(const Shape &input_shape, const BasicTensor<T> &grad_out);

// ---------------------------------------------------------------------------
// Dense head and loss
// ---------------------------------------------------------------------------

template <typename T>
struct DenseParams {
    std::size_t in = 1;
    std::size_t out = 1;
    std::vector<T> weights;  // (in, out)
    std::vector<T> bias;     // (out)

    static DenseParams zeros(std::size_t in, std::size_t out) { return {in, out, std::vector<T>(in * out), std::vector<T>(out)}; }
    [[nodiscard]] std::size_t trainable_count() const { return weights.size() + bias.size(); }
};

template <typename T>
struct DenseGrads {
    BasicTensor<T> grad_x;
    std::vector<T> grad_w;
    std::vector<T> grad_b;
};

// x is (n, h, w, c) with h*w*c == in; the result is (n, 1, 1, out).
template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T> &x, std::span<const T> weights, std::span<const T> bias, std::size_t in,
                             std::size_t out);

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T> &x, std::span<const T> weights, std::size_t in, std::size_t out,
                             const BasicTensor<T> &grad_out);

template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T> &x, const DenseParams<T> &p) {
    return dense_forward<T>(x, p.weights, p.bias, p.in, p.out);
}

template <typename T>
struct SoftmaxLoss {
    double loss = 0.0;
    BasicTensor<T> grad_logits;
    BasicTensor<T> probs;
};

// Mean categorical cross-entropy over the batch; grad = (probs - onehot) / n.
template <typename T>
SoftmaxLoss<T> softmax_cce(const BasicTensor<T> &logits, std::span<const std::size_t> labels);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T> &logits);

}  // namespace fibnet
