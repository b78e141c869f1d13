#include "fibnet/tensor.hpp"

#include <algorithm>

namespace fibnet {

std::string to_string(const Shape &s) {
    return "(" + std::to_string(s.n) + "," + std::to_string(s.h) + "," + std::to_string(s.w) + "," + std::to_string(s.c) + ")";
}

PaddingGeometry same_pad_geometry(std::size_t in_side, std::size_t kernel, std::size_t stride) {
    if (in_side == 0 || kernel == 0 || stride == 0) {
        throw std::invalid_argument("same_pad_geometry: arguments must be >= 1");
    }
    PaddingGeometry g;
    g.kernel = kernel;
    g.stride = stride;
    g.out = (in_side + stride - 1) / stride;
    const std::size_t needed = (g.out - 1) * stride + kernel;
    const std::size_t total = needed > in_side ? needed - in_side : 0;
    g.pad_before = total / 2;
    g.pad_after = total - g.pad_before;
    return g;
}

PaddingGeometry valid_pad_geometry(std::size_t in_side, std::size_t kernel, std::size_t stride) {
    if (in_side < kernel || stride == 0) {
        throw std::invalid_argument("valid_pad_geometry: input side " + std::to_string(in_side) + " smaller than kernel " +
                                    std::to_string(kernel));
    }
    PaddingGeometry g;
    g.kernel = kernel;
    g.stride = stride;
    g.out = (in_side - kernel) / stride + 1;
    return g;
}

PaddingGeometry pad_geometry(std::size_t in_side, std::size_t kernel, std::size_t stride, Padding mode) {
    return mode == Padding::same ? same_pad_geometry(in_side, kernel, stride) : valid_pad_geometry(in_side, kernel, stride);
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T> &a, const BasicTensor<T> &b) {
    const Shape &sa = a.shape();
    const Shape &sb = b.shape();
    if (sa.n != sb.n) {
        throw ShapeError("concat_channels: batch mismatch " + to_string(sa) + " vs " + to_string(sb));
    }
    if (sa.h != sb.h) {
        throw ShapeError("concat_channels: height mismatch " + to_string(sa) + " vs " + to_string(sb));
    }
    if (sa.w != sb.w) {
        throw ShapeError("concat_channels: width mismatch " + to_string(sa) + " vs " + to_string(sb));
    }
    BasicTensor<T> out(Shape{sa.n, sa.h, sa.w, sa.c + sb.c});
    auto dst = out.data().begin();
    auto pa = a.data().begin();
    auto pb = b.data().begin();
    const std::size_t pixels = sa.n * sa.h * sa.w;
    for (std::size_t p = 0; p < pixels; ++p) {
        dst = std::copy_n(pa, sa.c, dst);
        dst = std::copy_n(pb, sb.c, dst);
        pa += static_cast<std::ptrdiff_t>(sa.c);
        pb += static_cast<std::ptrdiff_t>(sb.c);
    }
    return out;
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T> &x, std::size_t begin, std::size_t end) {
    const Shape &s = x.shape();
    if (begin >= end || end > s.c) {
        throw ShapeError("slice_channels: invalid range [" + std::to_string(begin) + "," + std::to_string(end) + ") for " +
                         to_string(s));
    }
    const std::size_t width = end - begin;
    BasicTensor<T> out(Shape{s.n, s.h, s.w, width});
    auto dst = out.data().begin();
    const std::size_t pixels = s.n * s.h * s.w;
    for (std::size_t p = 0; p < pixels; ++p) {
        dst = std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(p * s.c + begin), width, dst);
    }
    return out;
}

template Tensor concat_channels(const Tensor &, const Tensor &);
template Tensor64 concat_channels(const Tensor64 &, const Tensor64 &);
template Tensor slice_channels(const Tensor &, std::size_t, std::size_t);
template Tensor64 slice_channels(const Tensor64 &, std::size_t, std::size_t);

}  // namespace fibnet
