#include "fibnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fibnet {

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T> &x) {
    BasicTensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] > T(0) ? x[i] : T(0);
    }
    return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T> &pre_activation, const BasicTensor<T> &grad_out) {
    if (pre_activation.shape() != grad_out.shape()) {
        throw ShapeError("relu_backward: shape mismatch " + to_string(pre_activation.shape()) + " vs " + to_string(grad_out.shape()));
    }
    BasicTensor<T> g(grad_out.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = pre_activation[i] > T(0) ? grad_out[i] : T(0);
    }
    return g;
}

template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T> &x, std::span<const T> weights, std::span<const T> bias, std::size_t in,
                             std::size_t out) {
    const Shape &s = x.shape();
    if (s.h * s.w * s.c != in) {
        throw ShapeError("dense: flattened input length " + std::to_string(s.h * s.w * s.c) + " does not match in=" + std::to_string(in));
    }
    if (weights.size() != in * out || bias.size() != out) {
        throw ShapeError("dense: parameter sizes do not match (" + std::to_string(in) + ", " + std::to_string(out) + ")");
    }
    BasicTensor<T> y(Shape{s.n, 1, 1, out});
    for (std::size_t n = 0; n < s.n; ++n) {
        const T *xr = x.data().data() + n * in;
        T *yr = y.data().data() + n * out;
        std::copy(bias.begin(), bias.end(), yr);
        for (std::size_t i = 0; i < in; ++i) {
            const T xv = xr[i];
            const T *wr = weights.data() + i * out;
            for (std::size_t j = 0; j < out; ++j) {
                yr[j] += xv * wr[j];
            }
        }
    }
    return y;
}

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T> &x, std::span<const T> weights, std::size_t in, std::size_t out,
                             const BasicTensor<T> &grad_out) {
    const Shape &s = x.shape();
    if (s.h * s.w * s.c != in || grad_out.shape() != Shape{s.n, 1, 1, out}) {
        throw ShapeError("dense_backward: grad_out shape " + to_string(grad_out.shape()) + " incompatible with input " + to_string(s));
    }
    DenseGrads<T> g{BasicTensor<T>(s), std::vector<T>(in * out), std::vector<T>(out)};
    for (std::size_t n = 0; n < s.n; ++n) {
        const T *xr = x.data().data() + n * in;
        const T *gr = grad_out.data().data() + n * out;
        T *gxr = g.grad_x.data().data() + n * in;
        for (std::size_t j = 0; j < out; ++j) {
            g.grad_b[j] += gr[j];
        }
        for (std::size_t i = 0; i < in; ++i) {
            const T *wr = weights.data() + i * out;
            T *gwr = g.grad_w.data() + i * out;
            T acc = 0;
            for (std::size_t j = 0; j < out; ++j) {
                acc += wr[j] * gr[j];
                gwr[j] += xr[i] * gr[j];
            }
            gxr[i] = acc;
        }
    }
    return g;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T> &logits) {
    const Shape &s = logits.shape();
    const std::size_t k = s.h * s.w * s.c;
    BasicTensor<T> probs(s);
    for (std::size_t n = 0; n < s.n; ++n) {
        const T *z = logits.data().data() + n * k;
        T *p = probs.data().data() + n * k;
        const T zmax = *std::max_element(z, z + k);
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            total += std::exp(static_cast<double>(z[j] - zmax));
        }
        for (std::size_t j = 0; j < k; ++j) {
            p[j] = static_cast<T>(std::exp(static_cast<double>(z[j] - zmax)) / total);
        }
    }
    return probs;
}

template <typename T>
SoftmaxLoss<T> softmax_cce(const BasicTensor<T> &logits, std::span<const std::size_t> labels) {
    const Shape &s = logits.shape();
    const std::size_t k = s.h * s.w * s.c;
    if (labels.size() != s.n) {
        throw ShapeError("softmax_cce: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(s.n));
    }
    SoftmaxLoss<T> r{0.0, BasicTensor<T>(s), BasicTensor<T>(s)};
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(s.n);
    for (std::size_t n = 0; n < s.n; ++n) {
        if (labels[n] >= k) {
            throw std::out_of_range("softmax_cce: label " + std::to_string(labels[n]) + " out of range for " + std::to_string(k) +
                                    " classes");
        }
        const T *z = logits.data().data() + n * k;
        const T zmax = *std::max_element(z, z + k);
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            total += std::exp(static_cast<double>(z[j] - zmax));
        }
        const double log_total = std::log(total);
        loss -= static_cast<double>(z[labels[n]] - zmax) - log_total;
        T *p = r.probs.data().data() + n * k;
        T *g = r.grad_logits.data().data() + n * k;
        for (std::size_t j = 0; j < k; ++j) {
            const double pj = std::exp(static_cast<double>(z[j] - zmax) - log_total);
            p[j] = static_cast<T>(pj);
            g[j] = static_cast<T>((pj - (j == labels[n] ? 1.0 : 0.0)) * inv_n);
        }
    }
    r.loss = loss * inv_n;
    return r;
}

#define FIBNET_INSTANTIATE_DENSE(T)                                                                                        \
    template BasicTensor<T> relu_forward(const BasicTensor<T> &);                                                          \
    template BasicTensor<T> relu_backward(const BasicTensor<T> &, const BasicTensor<T> &);                                 \
    template BasicTensor<T> dense_forward(const BasicTensor<T> &, std::span<const T>, std::span<const T>, std::size_t,     \
                                          std::size_t);                                                                    \
    template DenseGrads<T> dense_backward(const BasicTensor<T> &, std::span<const T>, std::size_t, std::size_t,            \
                                          const BasicTensor<T> &);                                                         \
    template BasicTensor<T> softmax(const BasicTensor<T> &);                                                               \
    template SoftmaxLoss<T> softmax_cce(const BasicTensor<T> &, std::span<const std::size_t>);

FIBNET_INSTANTIATE_DENSE(float)
FIBNET_INSTANTIATE_DENSE(double)

}  // namespace fibnet
