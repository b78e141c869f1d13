#include "fibnet/layers.hpp"

#include <stdexcept>

namespace fibnet {

namespace {

void check_pool(const PoolGeometry &g) {
    if (g.pool != 2 && g.pool != 3) {
        throw std::invalid_argument("pooling: pool side must be 2 or 3, got " + std::to_string(g.pool));
    }
    if (g.stride == 0) {
        throw std::invalid_argument("pooling: stride must be >= 1");
    }
}

// In-bounds window range [begin, end) along one axis.
struct Span1 {
    std::size_t begin;
    std::size_t end;
};

Span1 window(std::size_t o, const PaddingGeometry &g, std::size_t in_side) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(o * g.stride) - static_cast<std::ptrdiff_t>(g.pad_before);
    const std::ptrdiff_t stop = start + static_cast<std::ptrdiff_t>(g.kernel);
    const auto b = static_cast<std::size_t>(std::max<std::ptrdiff_t>(start, 0));
    const auto e = static_cast<std::size_t>(std::min<std::ptrdiff_t>(stop, static_cast<std::ptrdiff_t>(in_side)));
    return {b, e};
}

}  // namespace

template <typename T>
MaxPoolResult<T> maxpool_forward(const BasicTensor<T> &x, const PoolGeometry &g) {
    check_pool(g);
    const Shape &s = x.shape();
    const PaddingGeometry gy = pad_geometry(s.h, g.pool, g.stride, g.padding);
    const PaddingGeometry gx = pad_geometry(s.w, g.pool, g.stride, g.padding);
    MaxPoolResult<T> r{BasicTensor<T>(Shape{s.n, gy.out, gx.out, s.c}), {}};
    r.argmax.resize(r.out.size());
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t oy = 0; oy < gy.out; ++oy) {
            const Span1 wy = window(oy, gy, s.h);
            for (std::size_t ox = 0; ox < gx.out; ++ox) {
                const Span1 wx = window(ox, gx, s.w);
                for (std::size_t ch = 0; ch < s.c; ++ch) {
                    std::size_t best = x.offset(n, wy.begin, wx.begin, ch);
                    for (std::size_t iy = wy.begin; iy < wy.end; ++iy) {
                        for (std::size_t ix = wx.begin; ix < wx.end; ++ix) {
                            const std::size_t i = x.offset(n, iy, ix, ch);
                            if (x[i] > x[best]) {
                                best = i;
                            }
                        }
                    }
                    const std::size_t o = r.out.offset(n, oy, ox, ch);
                    r.out[o] = x[best];
                    r.argmax[o] = best;
                }
            }
        }
    }
    return r;
}

template <typename T>
BasicTensor<T> maxpool_backward(const Shape &input_shape, std::span<const std::size_t> argmax, const BasicTensor<T> &grad_out) {
    if (argmax.size() != grad_out.size()) {
        throw ShapeError("maxpool_backward: argmax map has " + std::to_string(argmax.size()) + " entries, grad_out has " +
                         std::to_string(grad_out.size()));
    }
    BasicTensor<T> grad_x(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        grad_x[argmax[i]] += grad_out[i];
    }
    return grad_x;
}

template <typename T>
BasicTensor<T> avgpool_forward(const BasicTensor<T> &x, const PoolGeometry &g) {
    check_pool(g);
    const Shape &s = x.shape();
    const PaddingGeometry gy = pad_geometry(s.h, g.pool, g.stride, g.padding);
    const PaddingGeometry gx = pad_geometry(s.w, g.pool, g.stride, g.padding);
    BasicTensor<T> out(Shape{s.n, gy.out, gx.out, s.c});
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t oy = 0; oy < gy.out; ++oy) {
            const Span1 wy = window(oy, gy, s.h);
            for (std::size_t ox = 0; ox < gx.out; ++ox) {
                const Span1 wx = window(ox, gx, s.w);
                const auto count = static_cast<T>((wy.end - wy.begin) * (wx.end - wx.begin));
                for (std::size_t ch = 0; ch < s.c; ++ch) {
                    T sum = 0;
                    for (std::size_t iy = wy.begin; iy < wy.end; ++iy) {
                        for (std::size_t ix = wx.begin; ix < wx.end; ++ix) {
                            sum += x(n, iy, ix, ch);
                        }
                    }
                    out(n, oy, ox, ch) = sum / count;
                }
            }
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> avgpool_backward(const Shape &input_shape, const PoolGeometry &g, const BasicTensor<T> &grad_out) {
    check_pool(g);
    const Shape &s = input_shape;
    const PaddingGeometry gy = pad_geometry(s.h, g.pool, g.stride, g.padding);
    const PaddingGeometry gx = pad_geometry(s.w, g.pool, g.stride, g.padding);
    const Shape expected{s.n, gy.out, gx.out, s.c};
    if (grad_out.shape() != expected) {
        throw ShapeError("avgpool_backward: grad_out shape " + to_string(grad_out.shape()) + " expected " + to_string(expected));
    }
    BasicTensor<T> grad_x(s);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t oy = 0; oy < gy.out; ++oy) {
            const Span1 wy = window(oy, gy, s.h);
            for (std::size_t ox = 0; ox < gx.out; ++ox) {
                const Span1 wx = window(ox, gx, s.w);
                const auto count = static_cast<T>((wy.end - wy.begin) * (wx.end - wx.begin));
                for (std::size_t ch = 0; ch < s.c; ++ch) {
                    const T share = grad_out(n, oy, ox, ch) / count;
                    for (std::size_t iy = wy.begin; iy < wy.end; ++iy) {
                        for (std::size_t ix = wx.begin; ix < wx.end; ++ix) {
                            grad_x(n, iy, ix, ch) += share;
                        }
                    }
                }
            }
        }
    }
    return grad_x;
}

template <typename T>
Avg2MaxResult<T> avg2max_forward(const BasicTensor<T> &x) {
    BasicTensor<T> avg = avgpool_forward(x, kAvg2MaxGeometry);
    MaxPoolResult<T> mx = maxpool_forward(x, kAvg2MaxGeometry);
    for (std::size_t i = 0; i < avg.size(); ++i) {
        avg[i] = avg[i] - T(2) * mx.out[i];
    }
    return {std::move(avg), std::move(mx.argmax)};
}

template <typename T>
BasicTensor<T> avg2max_backward(const Shape &input_shape, std::span<const std::size_t> argmax, const BasicTensor<T> &grad_out) {
    BasicTensor<T> grad_x = avgpool_backward(input_shape, kAvg2MaxGeometry, grad_out);
    if (argmax.size() != grad_out.size()) {
        throw ShapeError("avg2max_backward: argmax map does not match grad_out");
    }
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        grad_x[argmax[i]] -= T(2) * grad_out[i];
    }
    return grad_x;
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T> &x) {
    const Shape &s = x.shape();
    BasicTensor<T> out(Shape{s.n, 1, 1, s.c});
    const auto count = static_cast<double>(s.h * s.w);
    std::vector<double> sum(s.c);
    for (std::size_t n = 0; n < s.n; ++n) {
        std::fill(sum.begin(), sum.end(), 0.0);
        for (std::size_t y = 0; y < s.h; ++y) {
            for (std::size_t xx = 0; xx < s.w; ++xx) {
                for (std::size_t ch = 0; ch < s.c; ++ch) {
                    sum[ch] += static_cast<double>(x(n, y, xx, ch));
                }
            }
        }
        for (std::size_t ch = 0; ch < s.c; ++ch) {
            out(n, 0, 0, ch) = static_cast<T>(sum[ch] / count);
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const Shape &input_shape, const BasicTensor<T> &grad_out) {
    const Shape &s = input_shape;
    if (grad_out.shape() != Shape{s.n, 1, 1, s.c}) {
        throw ShapeError("global_avg_pool_backward: grad_out shape " + to_string(grad_out.shape()) + " does not match input " +
                         to_string(s));
    }
    BasicTensor<T> grad_x(s);
    const auto count = static_cast<T>(s.h * s.w);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t y = 0; y < s.h; ++y) {
            for (std::size_t xx = 0; xx < s.w; ++xx) {
                for (std::size_t ch = 0; ch < s.c; ++ch) {
                    grad_x(n, y, xx, ch) = grad_out(n, 0, 0, ch) / count;
                }
            }
        }
    }
    return grad_x;
}

#define FIBNET_INSTANTIATE_POOL(T)                                                                                         \
    template MaxPoolResult<T> maxpool_forward(const BasicTensor<T> &, const PoolGeometry &);                               \
    template BasicTensor<T> maxpool_backward(const Shape &, std::span<const std::size_t>, const BasicTensor<T> &);         \
    template BasicTensor<T> avgpool_forward(const BasicTensor<T> &, const PoolGeometry &);                                 \
    template BasicTensor<T> avgpool_backward(const Shape &, const PoolGeometry &, const BasicTensor<T> &);                 \
    template Avg2MaxResult<T> avg2max_forward(const BasicTensor<T> &);                                                     \
    template BasicTensor<T> avg2max_backward(const Shape &, std::span<const std::size_t>, const BasicTensor<T> &);         \
    template BasicTensor<T> global_avg_pool(const BasicTensor<T> &);                                                       \
    template BasicTensor<T> global_avg_pool_backward(const Shape &, const BasicTensor<T> &);

FIBNET_INSTANTIATE_POOL(float)
FIBNET_INSTANTIATE_POOL(double)

}  // namespace fibnet
