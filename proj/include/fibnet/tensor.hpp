#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fibnet {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// (batch, rows, cols, channels)
struct Shape {
    std::size_t n = 1;
    std::size_t h = 1;
    std::size_t w = 1;
    std::size_t c = 1;

    [[nodiscard]] std::size_t size() const { return n * h * w * c; }
    friend bool operator==(const Shape &, const Shape &) = default;
};

std::string to_string(const Shape &s);

// Dense rank-4 array stored row-major in (n, h, w, c) order.
// Float is the production type; double exists for finite-difference checks.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(shape) {
        if (shape.n == 0 || shape.h == 0 || shape.w == 0 || shape.c == 0) {
            throw ShapeError("tensor dimensions must be >= 1, got " + to_string(shape));
        }
        data_.assign(shape.size(), fill);
    }

    BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        if (shape.n == 0 || shape.h == 0 || shape.w == 0 || shape.c == 0) {
            throw ShapeError("tensor dimensions must be >= 1, got " + to_string(shape));
        }
        if (data_.size() != shape.size()) {
            throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + to_string(shape));
        }
    }

    [[nodiscard]] const Shape &shape() const { return shape_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    [[nodiscard]] std::span<T> data() { return data_; }
    [[nodiscard]] std::span<const T> data() const { return data_; }
    [[nodiscard]] const std::vector<T> &values() const { return data_; }

    [[nodiscard]] std::size_t offset(std::size_t n, std::size_t y, std::size_t x, std::size_t ch) const {
        return ((n * shape_.h + y) * shape_.w + x) * shape_.c + ch;
    }

    T &operator()(std::size_t n, std::size_t y, std::size_t x, std::size_t ch) { return data_[offset(n, y, x, ch)]; }
    const T &operator()(std::size_t n, std::size_t y, std::size_t x, std::size_t ch) const { return data_[offset(n, y, x, ch)]; }

    T &operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }

    [[nodiscard]] bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    [[nodiscard]] BasicTensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return BasicTensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const BasicTensor &, const BasicTensor &) = default;

private:
    Shape shape_{};
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

enum class Padding { same, valid };

struct PaddingGeometry {
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t out = 1;
    std::size_t pad_before = 0;
    std::size_t pad_after = 0;
};

// Output side and padding split along one axis. "same" gives ceil(in / stride)
// with the odd padding element placed after (bottom/right).
PaddingGeometry same_pad_geometry(std::size_t in_side, std::size_t kernel, std::size_t stride);
PaddingGeometry valid_pad_geometry(std::size_t in_side, std::size_t kernel, std::size_t stride);
PaddingGeometry pad_geometry(std::size_t in_side, std::size_t kernel, std::size_t stride, Padding mode);

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T> &a, const BasicTensor<T> &b);

// Channels [begin, end) of x.
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T> &x, std::size_t begin, std::size_t end);

}  // namespace fibnet
