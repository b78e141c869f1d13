#include "fibnet/layers.hpp"

#include <cmath>

namespace fibnet {

template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T> &x, std::span<const T> gamma, std::span<const T> beta,
                                 std::span<T> running_mean, std::span<T> running_var, Mode mode,
                                 const BatchNormSettings &settings, BatchNormCache<T> *cache) {
    const Shape &s = x.shape();
    const std::size_t c = s.c;
    if (gamma.size() != c || beta.size() != c || running_mean.size() != c || running_var.size() != c) {
        throw ShapeError("batchnorm: parameters sized for " + std::to_string(gamma.size()) + " channels, input has " +
                         std::to_string(c));
    }
    const std::size_t pixels = s.n * s.h * s.w;
    const auto *xd = x.data().data();

    std::vector<T> mean(c);
    std::vector<T> var(c);
    if (mode == Mode::train) {
        // Accumulate in double so float batches keep their precision.
        std::vector<double> sum(c, 0.0);
        for (std::size_t p = 0; p < pixels; ++p) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                sum[ch] += static_cast<double>(xd[p * c + ch]);
            }
        }
        std::vector<double> mu(c);
        for (std::size_t ch = 0; ch < c; ++ch) {
            mu[ch] = sum[ch] / static_cast<double>(pixels);
        }
        std::vector<double> sq(c, 0.0);
        for (std::size_t p = 0; p < pixels; ++p) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double d = static_cast<double>(xd[p * c + ch]) - mu[ch];
                sq[ch] += d * d;
            }
        }
        const double m = settings.momentum;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double v = sq[ch] / static_cast<double>(pixels);
            mean[ch] = static_cast<T>(mu[ch]);
            var[ch] = static_cast<T>(v);
            running_mean[ch] = static_cast<T>(m * static_cast<double>(running_mean[ch]) + (1.0 - m) * mu[ch]);
            running_var[ch] = static_cast<T>(m * static_cast<double>(running_var[ch]) + (1.0 - m) * v);
        }
    } else {
        for (std::size_t ch = 0; ch < c; ++ch) {
            mean[ch] = running_mean[ch];
            var[ch] = running_var[ch];
        }
    }

    std::vector<T> inv_std(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var[ch]) + settings.epsilon));
    }

    BasicTensor<T> out(s);
    BasicTensor<T> x_hat(s);
    auto *od = out.data().data();
    auto *hd = x_hat.data().data();
    for (std::size_t p = 0; p < pixels; ++p) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t i = p * c + ch;
            hd[i] = (xd[i] - mean[ch]) * inv_std[ch];
            od[i] = gamma[ch] * hd[i] + beta[ch];
        }
    }
    if (cache != nullptr) {
        cache->mode = mode;
        cache->x_hat = std::move(x_hat);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T> &cache, std::span<const T> gamma, const BasicTensor<T> &grad_out) {
    const Shape &s = cache.x_hat.shape();
    if (grad_out.shape() != s) {
        throw ShapeError("batchnorm_backward: grad_out shape " + to_string(grad_out.shape()) + " expected " + to_string(s));
    }
    const std::size_t c = s.c;
    const std::size_t pixels = s.n * s.h * s.w;
    const auto *gd = grad_out.data().data();
    const auto *hd = cache.x_hat.data().data();

    std::vector<double> sum_g(c, 0.0);
    std::vector<double> sum_gh(c, 0.0);
    for (std::size_t p = 0; p < pixels; ++p) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t i = p * c + ch;
            sum_g[ch] += static_cast<double>(gd[i]);
            sum_gh[ch] += static_cast<double>(gd[i]) * static_cast<double>(hd[i]);
        }
    }

    BatchNormGrads<T> grads{BasicTensor<T>(s), std::vector<T>(c), std::vector<T>(c)};
    for (std::size_t ch = 0; ch < c; ++ch) {
        grads.grad_gamma[ch] = static_cast<T>(sum_gh[ch]);
        grads.grad_beta[ch] = static_cast<T>(sum_g[ch]);
    }
    auto *gx = grads.grad_x.data().data();
    if (cache.mode == Mode::infer) {
        for (std::size_t p = 0; p < pixels; ++p) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                const std::size_t i = p * c + ch;
                gx[i] = gamma[ch] * cache.inv_std[ch] * gd[i];
            }
        }
        return grads;
    }
    // dx = gamma * inv_std / M * (M * dy - sum(dy) - x_hat * sum(dy * x_hat))
    const double m = static_cast<double>(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t i = p * c + ch;
            const double scale = static_cast<double>(gamma[ch]) * static_cast<double>(cache.inv_std[ch]) / m;
            gx[i] = static_cast<T>(scale * (m * static_cast<double>(gd[i]) - sum_g[ch] - static_cast<double>(hd[i]) * sum_gh[ch]));
        }
    }
    return grads;
}

#define FIBNET_INSTANTIATE_BN(T)                                                                                           \
    template BasicTensor<T> batchnorm_forward(const BasicTensor<T> &, std::span<const T>, std::span<const T>, std::span<T>, \
                                              std::span<T>, Mode, const BatchNormSettings &, BatchNormCache<T> *);          \
    template BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T> &, std::span<const T>, const BasicTensor<T> &);

FIBNET_INSTANTIATE_BN(float)
FIBNET_INSTANTIATE_BN(double)

}  // namespace fibnet
