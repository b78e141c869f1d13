#pragma once

// Brute-force Avg-2Max window oracle. Builds each 3x3 / stride-2 window from
// scratch, with "same" padding worked out directly from the input side.

#include "fibnet/tensor.hpp"

#include <limits>

namespace fibnet::testing {

template <typename T>
BasicTensor<T> avg2max_oracle(const BasicTensor<T> &x) {
    const Shape s = x.shape();
    const std::size_t oh = (s.h + 1) / 2;
    const std::size_t ow = (s.w + 1) / 2;
    const long pad_top = static_cast<long>(((oh - 1) * 2 + 3 > s.h ? (oh - 1) * 2 + 3 - s.h : 0) / 2);
    const long pad_left = static_cast<long>(((ow - 1) * 2 + 3 > s.w ? (ow - 1) * 2 + 3 - s.w : 0) / 2);
    BasicTensor<T> out(Shape{s.n, oh, ow, s.c});
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                for (std::size_t ch = 0; ch < s.c; ++ch) {
                    T sum = 0;
                    T best = -std::numeric_limits<T>::infinity();
                    std::size_t count = 0;
                    for (long dy = 0; dy < 3; ++dy) {
                        for (long dx = 0; dx < 3; ++dx) {
                            const long y = static_cast<long>(oy) * 2 - pad_top + dy;
                            const long xx = static_cast<long>(ox) * 2 - pad_left + dx;
                            if (y < 0 || xx < 0 || y >= static_cast<long>(s.h) || xx >= static_cast<long>(s.w)) {
                                continue;
                            }
                            const T v = x(n, static_cast<std::size_t>(y), static_cast<std::size_t>(xx), ch);
                            sum += v;
                            best = v > best ? v : best;
                            ++count;
                        }
                    }
                    out(n, oy, ox, ch) = sum / static_cast<T>(count) - T(2) * best;
                }
            }
        }
    }
    return out;
}

}  // namespace fibnet::testing
