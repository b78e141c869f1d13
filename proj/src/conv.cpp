#include "fibnet/layers.hpp"
#include "fibnet/parallel.hpp"

#include <algorithm>

namespace fibnet {

namespace {

template <typename T>
void check_conv_input(const BasicTensor<T> &x, std::span<const T> weights, const ConvGeometry &g) {
    if (x.shape().c != g.in_c) {
        throw ShapeError("conv2d: input has " + std::to_string(x.shape().c) + " channels, layer expects " + std::to_string(g.in_c));
    }
    if (weights.size() != g.weight_count()) {
        throw ShapeError("conv2d: weight length " + std::to_string(weights.size()) + " does not match geometry");
    }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T> &x, std::span<const T> weights, std::span<const T> bias, const ConvGeometry &g) {
    check_conv_input(x, weights, g);
    if (bias.size() != g.out_c) {
        throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) + " does not match out_c " + std::to_string(g.out_c));
    }
    const Shape &s = x.shape();
    const PaddingGeometry gy = pad_geometry(s.h, g.kernel, g.stride, g.padding);
    const PaddingGeometry gx = pad_geometry(s.w, g.kernel, g.stride, g.padding);
    BasicTensor<T> out(Shape{s.n, gy.out, gx.out, g.out_c});
    const T *xd = x.data().data();
    const T *wd = weights.data();
    T *od = out.data().data();
    const std::size_t k = g.kernel;
    const std::size_t in_c = g.in_c;
    const std::size_t out_c = g.out_c;

    parallel_for(s.n * gy.out, [&](std::size_t row) {
        const std::size_t n = row / gy.out;
        const std::size_t oy = row % gy.out;
        for (std::size_t ox = 0; ox < gx.out; ++ox) {
            T *o = od + out.offset(n, oy, ox, 0);
            std::copy(bias.begin(), bias.end(), o);
            for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(gy.pad_before);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.h)) {
                    continue;
                }
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t ix =
                        static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(gx.pad_before);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.w)) {
                        continue;
                    }
                    const T *xp = xd + x.offset(n, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), 0);
                    const T *wp = wd + (ky * k + kx) * in_c * out_c;
                    for (std::size_t ci = 0; ci < in_c; ++ci) {
                        const T xv = xp[ci];
                        const T *wr = wp + ci * out_c;
                        for (std::size_t oc = 0; oc < out_c; ++oc) {
                            o[oc] += xv * wr[oc];
                        }
                    }
                }
            }
        }
    });
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T> &x, std::span<const T> weights, const ConvGeometry &g,
                             const BasicTensor<T> &grad_out) {
    check_conv_input(x, weights, g);
    const Shape &s = x.shape();
    const PaddingGeometry gy = pad_geometry(s.h, g.kernel, g.stride, g.padding);
    const PaddingGeometry gx = pad_geometry(s.w, g.kernel, g.stride, g.padding);
    const Shape expected{s.n, gy.out, gx.out, g.out_c};
    if (grad_out.shape() != expected) {
        throw ShapeError("conv2d_backward: grad_out shape " + to_string(grad_out.shape()) + " expected " + to_string(expected));
    }
    const std::size_t k = g.kernel;
    const std::size_t in_c = g.in_c;
    const std::size_t out_c = g.out_c;

    ConvGrads<T> grads{BasicTensor<T>(s), std::vector<T>(g.weight_count()), std::vector<T>(out_c)};
    // One partial weight/bias gradient per batch element, reduced in batch order.
    std::vector<std::vector<T>> part_w(s.n, std::vector<T>(g.weight_count()));
    std::vector<std::vector<T>> part_b(s.n, std::vector<T>(out_c));
    const T *xd = x.data().data();
    const T *wd = weights.data();
    const T *gd = grad_out.data().data();
    T *gxd = grads.grad_x.data().data();

    parallel_for(s.n, [&](std::size_t n) {
        T *gw = part_w[n].data();
        T *gb = part_b[n].data();
        for (std::size_t oy = 0; oy < gy.out; ++oy) {
            for (std::size_t ox = 0; ox < gx.out; ++ox) {
                const T *go = gd + grad_out.offset(n, oy, ox, 0);
                for (std::size_t oc = 0; oc < out_c; ++oc) {
                    gb[oc] += go[oc];
                }
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(gy.pad_before);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.h)) {
                        continue;
                    }
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(gx.pad_before);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.w)) {
                            continue;
                        }
                        const std::size_t xo = x.offset(n, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), 0);
                        const T *xp = xd + xo;
                        T *gxp = gxd + xo;
                        const std::size_t wo = (ky * k + kx) * in_c * out_c;
                        for (std::size_t ci = 0; ci < in_c; ++ci) {
                            const T xv = xp[ci];
                            const T *wr = wd + wo + ci * out_c;
                            T *gwr = gw + wo + ci * out_c;
                            T acc = 0;
                            for (std::size_t oc = 0; oc < out_c; ++oc) {
                                acc += wr[oc] * go[oc];
                                gwr[oc] += xv * go[oc];
                            }
                            gxp[ci] += acc;
                        }
                    }
                }
            }
        }
    });
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t i = 0; i < grads.grad_w.size(); ++i) {
            grads.grad_w[i] += part_w[n][i];
        }
        for (std::size_t i = 0; i < out_c; ++i) {
            grads.grad_b[i] += part_b[n][i];
        }
    }
    return grads;
}

template <typename T>
BasicTensor<T> depthwise_forward(const BasicTensor<T> &x, std::span<const T> weights, std::span<const T> bias) {
    const Shape &s = x.shape();
    if (weights.size() != 9 * s.c || bias.size() != s.c) {
        throw ShapeError("depthwise: parameters sized for " + std::to_string(bias.size()) + " channels, input has " +
                         std::to_string(s.c));
    }
    const PaddingGeometry gy = same_pad_geometry(s.h, 3, 1);
    const PaddingGeometry gx = same_pad_geometry(s.w, 3, 1);
    BasicTensor<T> out(s);
    parallel_for(s.n * s.h, [&](std::size_t row) {
        const std::size_t n = row / s.h;
        const std::size_t oy = row % s.h;
        for (std::size_t ox = 0; ox < s.w; ++ox) {
            T *o = &out(n, oy, ox, 0);
            std::copy(bias.begin(), bias.end(), o);
            for (std::size_t ky = 0; ky < 3; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(gy.pad_before);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.h)) {
                    continue;
                }
                for (std::size_t kx = 0; kx < 3; ++kx) {
                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(gx.pad_before);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.w)) {
                        continue;
                    }
                    const T *xp = &x(n, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), 0);
                    const T *wp = weights.data() + (ky * 3 + kx) * s.c;
                    for (std::size_t ch = 0; ch < s.c; ++ch) {
                        o[ch] += xp[ch] * wp[ch];
                    }
                }
            }
        }
    });
    return out;
}

template <typename T>
ConvGrads<T> depthwise_backward(const BasicTensor<T> &x, std::span<const T> weights, const BasicTensor<T> &grad_out) {
    const Shape &s = x.shape();
    if (grad_out.shape() != s || weights.size() != 9 * s.c) {
        throw ShapeError("depthwise_backward: grad_out shape " + to_string(grad_out.shape()) + " expected " + to_string(s));
    }
    const PaddingGeometry gy = same_pad_geometry(s.h, 3, 1);
    const PaddingGeometry gx = same_pad_geometry(s.w, 3, 1);
    ConvGrads<T> grads{BasicTensor<T>(s), std::vector<T>(9 * s.c), std::vector<T>(s.c)};
    std::vector<std::vector<T>> part_w(s.n, std::vector<T>(9 * s.c));
    std::vector<std::vector<T>> part_b(s.n, std::vector<T>(s.c));
    parallel_for(s.n, [&](std::size_t n) {
        T *gw = part_w[n].data();
        T *gb = part_b[n].data();
        for (std::size_t oy = 0; oy < s.h; ++oy) {
            for (std::size_t ox = 0; ox < s.w; ++ox) {
                const T *go = &grad_out(n, oy, ox, 0);
                for (std::size_t ch = 0; ch < s.c; ++ch) {
                    gb[ch] += go[ch];
                }
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(gy.pad_before);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.h)) {
                        continue;
                    }
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(gx.pad_before);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.w)) {
                            continue;
                        }
                        const std::size_t xo = x.offset(n, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), 0);
                        const T *xp = x.data().data() + xo;
                        T *gxp = grads.grad_x.data().data() + xo;
                        const T *wp = weights.data() + (ky * 3 + kx) * s.c;
                        T *gwp = gw + (ky * 3 + kx) * s.c;
                        for (std::size_t ch = 0; ch < s.c; ++ch) {
                            gxp[ch] += wp[ch] * go[ch];
                            gwp[ch] += xp[ch] * go[ch];
                        }
                    }
                }
            }
        }
    });
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t i = 0; i < grads.grad_w.size(); ++i) {
            grads.grad_w[i] += part_w[n][i];
        }
        for (std::size_t i = 0; i < s.c; ++i) {
            grads.grad_b[i] += part_b[n][i];
        }
    }
    return grads;
}

template <typename T>
BasicTensor<T> dwsc_forward(const BasicTensor<T> &x, const DwscParams<T> &p) {
    if (x.shape().c != p.in_c) {
        throw ShapeError("dwsc: input has " + std::to_string(x.shape().c) + " channels, layer expects " + std::to_string(p.in_c));
    }
    const BasicTensor<T> mid = depthwise_forward<T>(x, p.depthwise_weights, p.depthwise_bias);
    return conv2d_forward<T>(mid, p.pointwise_weights, p.pointwise_bias, p.pointwise_geometry());
}

template <typename T>
DwscGrads<T> dwsc_backward(const BasicTensor<T> &x, const DwscParams<T> &p, const BasicTensor<T> &grad_out) {
    if (x.shape().c != p.in_c) {
        throw ShapeError("dwsc_backward: input has " + std::to_string(x.shape().c) + " channels, layer expects " +
                         std::to_string(p.in_c));
    }
    const BasicTensor<T> mid = depthwise_forward<T>(x, p.depthwise_weights, p.depthwise_bias);
    ConvGrads<T> pw = conv2d_backward<T>(mid, p.pointwise_weights, p.pointwise_geometry(), grad_out);
    ConvGrads<T> dw = depthwise_backward<T>(x, p.depthwise_weights, pw.grad_x);
    return {std::move(dw.grad_x), std::move(dw.grad_w), std::move(dw.grad_b), std::move(pw.grad_w), std::move(pw.grad_b)};
}

#define FIBNET_INSTANTIATE_CONV(T)                                                                                         \
    template BasicTensor<T> conv2d_forward(const BasicTensor<T> &, std::span<const T>, std::span<const T>,                 \
                                           const ConvGeometry &);                                                          \
    template ConvGrads<T> conv2d_backward(const BasicTensor<T> &, std::span<const T>, const ConvGeometry &,                \
                                          const BasicTensor<T> &);                                                         \
    template BasicTensor<T> depthwise_forward(const BasicTensor<T> &, std::span<const T>, std::span<const T>);             \
    template ConvGrads<T> depthwise_backward(const BasicTensor<T> &, std::span<const T>, const BasicTensor<T> &);          \
    template BasicTensor<T> dwsc_forward(const BasicTensor<T> &, const DwscParams<T> &);                                   \
    template DwscGrads<T> dwsc_backward(const BasicTensor<T> &, const DwscParams<T> &, const BasicTensor<T> &);

FIBNET_INSTANTIATE_CONV(float)
FIBNET_INSTANTIATE_CONV(double)

}  // namespace fibnet
