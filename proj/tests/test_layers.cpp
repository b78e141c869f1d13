#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "layer_gradchecks.hpp"
#include "pool_oracle.hpp"

#include "fibnet/layers.hpp"

#include <cmath>
#include <numeric>

using namespace fibnet;
using namespace fibnet::testing;

namespace {

Tensor grid(std::size_t h, std::size_t w, std::vector<float> v) { return Tensor(Shape{1, h, w, 1}, std::move(v)); }

Tensor random_float(Shape s, Rng &rng, double lo = -1, double hi = 1) {
    Tensor t(s);
    for (auto &v : t.data()) {
        v = static_cast<float>(rng.uniform(lo, hi));
    }
    return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d / dwsc
// ---------------------------------------------------------------------------

TEST_CASE("conv2d with a centered identity kernel is the identity") {
    Rng rng(1);
    const ConvGeometry g{3, 1, 1, 1, Padding::same};
    auto p = ConvParams<float>::zeros(g);
    p.weights[4] = 1.0f;
    const Tensor x = random_float(Shape{2, 5, 6, 1}, rng);
    CHECK(conv2d_forward(x, p) == x);

    const Tensor gy = random_float(x.shape(), rng);
    CHECK(conv2d_backward(x, p, gy).grad_x == gy);
}

TEST_CASE("conv2d all-ones window enumeration") {
    const ConvGeometry g{3, 1, 1, 1, Padding::same};
    auto p = ConvParams<float>::zeros(g);
    std::fill(p.weights.begin(), p.weights.end(), 1.0f);
    const Tensor y = conv2d_forward(Tensor(Shape{1, 3, 3, 1}, 1.0f), p);
    CHECK(y(0, 1, 1, 0) == 9.0f);
    CHECK(y(0, 0, 0, 0) == 4.0f);
    CHECK(y(0, 0, 2, 0) == 4.0f);
    CHECK(y(0, 2, 0, 0) == 4.0f);
    CHECK(y(0, 2, 2, 0) == 4.0f);
    CHECK(y(0, 0, 1, 0) == 6.0f);
}

TEST_CASE("conv2d first Fibonacci block width") {
    const ConvGeometry g{3, 3, 21, 1, Padding::same};
    CHECK(g.trainable_count() == 588);
    const auto p = ConvParams<float>::zeros(g);
    CHECK(p.trainable_count() == 588);
    CHECK(conv2d_forward(Tensor(Shape{1, 224, 224, 3}), p).shape() == Shape{1, 224, 224, 21});
}

TEST_CASE("conv2d errors") {
    const auto p = ConvParams<float>::zeros({3, 2, 4, 1, Padding::same});
    CHECK_THROWS_AS((void)conv2d_forward(Tensor(Shape{1, 4, 4, 3}), p), ShapeError);
    CHECK_THROWS_AS((void)conv2d_backward(Tensor(Shape{1, 4, 4, 2}), p, Tensor(Shape{1, 3, 4, 4})), ShapeError);
}

TEST_CASE("conv2d zero cotangent gives zero gradients") {
    Rng rng(2);
    const ConvGeometry g{3, 2, 3, 1, Padding::same};
    auto p = ConvParams<float>::zeros(g);
    for (auto &w : p.weights) {
        w = static_cast<float>(rng.uniform(-1, 1));
    }
    const Tensor x = random_float(Shape{1, 4, 4, 2}, rng);
    const auto grads = conv2d_backward(x, p, Tensor(Shape{1, 4, 4, 3}));
    for (float v : grads.grad_x.data()) {
        CHECK(v == 0.0f);
    }
    for (float v : grads.grad_w) {
        CHECK(v == 0.0f);
    }
    for (float v : grads.grad_b) {
        CHECK(v == 0.0f);
    }
}

TEST_CASE("conv2d matches finite differences on (1,5,5,2) -> 3 channels") {
    Rng rng(3);
    const auto r = check_conv2d(rng);
    CHECK(r.shapes >= 5);
    CHECK(r.worst < 1e-5);
}

TEST_CASE("dwsc identity and parameter counts") {
    Rng rng(4);
    auto p = DwscParams<float>::zeros(3, 3);
    for (std::size_t ch = 0; ch < 3; ++ch) {
        p.depthwise_weights[4 * 3 + ch] = 1.0f;  // centre tap (1,1) for every channel
        p.pointwise_weights[ch * 3 + ch] = 1.0f;
    }
    const Tensor x = random_float(Shape{2, 4, 5, 3}, rng);
    CHECK(dwsc_forward(x, p) == x);

    const auto big = DwscParams<float>::zeros(144, 233);
    CHECK(big.depthwise_count() == 1440);
    CHECK(big.pointwise_count() == (144 + 1) * 233);
    CHECK(dwsc_forward(Tensor(Shape{1, 14, 14, 144}), big).shape() == Shape{1, 14, 14, 233});
    CHECK_THROWS_AS((void)dwsc_forward(Tensor(Shape{1, 4, 4, 2}), p), ShapeError);
}

TEST_CASE("dwsc matches finite differences") {
    Rng rng(5);
    const auto r = check_dwsc(rng);
    CHECK(r.worst < 1e-5);
}

// ---------------------------------------------------------------------------
// batch norm / relu
// ---------------------------------------------------------------------------

TEST_CASE("batchnorm constant input in train mode normalizes to zero") {
    auto p = BatchNormParams<float>::identity(2);
    const Tensor y = batchnorm_forward(Tensor(Shape{4, 3, 3, 2}, 5.0f), p, Mode::train, nullptr);
    for (float v : y.data()) {
        CHECK(std::abs(v) < 1e-6f);
    }
    // running statistics moved by (1 - momentum) toward the batch statistics
    CHECK(p.running_mean[0] == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(p.running_var[0] == doctest::Approx(0.99).epsilon(1e-6));
}

TEST_CASE("batchnorm with gamma 0 outputs beta") {
    Rng rng(6);
    auto p = BatchNormParams<float>::identity(3);
    p.gamma = {0, 0, 0};
    p.beta = {0.5f, -1.0f, 2.0f};
    const Tensor y = batchnorm_forward(random_float(Shape{2, 2, 2, 3}, rng), p, Mode::train, nullptr);
    for (std::size_t i = 0; i < y.size(); ++i) {
        CHECK(y[i] == p.beta[i % 3]);
    }
}

TEST_CASE("batchnorm infer mode uses running statistics and leaves them untouched") {
    auto p = BatchNormParams<double>::identity(1);
    p.running_mean = {2.0};
    p.running_var = {4.0};
    const auto before = p;
    const Tensor64 y = batchnorm_forward(Tensor64(Shape{1, 1, 2, 1}, {2.0, 6.0}), p, Mode::infer, nullptr);
    CHECK(y[0] == doctest::Approx(0.0));
    CHECK(y[1] == doctest::Approx(4.0 / std::sqrt(4.0 + 1e-5)));
    CHECK(p.running_mean == before.running_mean);
    CHECK(p.running_var == before.running_var);
    CHECK(p.trainable_count() == 2);
}

TEST_CASE("batchnorm matches finite differences in both modes") {
    Rng rng(7);
    CHECK(check_batchnorm(rng, Mode::train).worst < 1e-5);
    CHECK(check_batchnorm(rng, Mode::infer).worst < 1e-5);
}

TEST_CASE("relu backward is the indicator of strictly positive inputs") {
    const Tensor x(Shape{1, 1, 5, 1}, {-1.0f, -0.0f, 0.0f, 1e-30f, 2.0f});
    const Tensor g(Shape{1, 1, 5, 1}, {1, 1, 1, 1, 1});
    CHECK(relu_backward(x, g).values() == std::vector<float>{0, 0, 0, 1, 1});
    CHECK(relu_forward(x).values() == std::vector<float>{0, 0, 0, 1e-30f, 2.0f});
    Rng rng(8);
    CHECK(check_relu(rng).worst < 1e-5);
}

// ---------------------------------------------------------------------------
// pooling
// ---------------------------------------------------------------------------

TEST_CASE("maxpool examples") {
    const auto single = maxpool_forward(grid(2, 2, {1, 2, 3, 4}), {2, 2, Padding::same});
    CHECK(single.out.values() == std::vector<float>{4});

    const auto constant = maxpool_forward(Tensor(Shape{1, 5, 5, 2}, -3.0f), {3, 2, Padding::same});
    for (float v : constant.out.data()) {
        CHECK(v == -3.0f);  // padding never wins, even over negative values
    }

    std::vector<float> ramp(16);
    std::iota(ramp.begin(), ramp.end(), 1.0f);
    const auto r = maxpool_forward(grid(4, 4, ramp), {3, 2, Padding::same});
    CHECK(r.out.values() == std::vector<float>{11, 12, 15, 16});
    CHECK_THROWS_AS((void)maxpool_forward(grid(4, 4, ramp), {4, 2, Padding::same}), std::invalid_argument);
}

TEST_CASE("maxpool ties resolve to the first element in window order") {
    const auto r = maxpool_forward(grid(2, 2, {7, 7, 7, 7}), {2, 2, Padding::same});
    REQUIRE(r.argmax.size() == 1);
    CHECK(r.argmax[0] == 0);
}

TEST_CASE("property: maxpool backward deposits exactly the incoming mass at argmax cells") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const Shape s{1 + rng.below(2), 2 + rng.below(6), 2 + rng.below(6), 1 + rng.below(3)};
        const Tensor64 x = random_tensor(s, rng);
        const auto fwd = maxpool_forward(x, {3, 2, Padding::same});
        const Tensor64 g = random_tensor(fwd.out.shape(), rng);
        const Tensor64 gx = maxpool_backward<double>(s, fwd.argmax, g);
        double in_mass = 0;
        double out_mass = 0;
        for (double v : g.data()) {
            in_mass += v;
        }
        for (std::size_t i = 0; i < gx.size(); ++i) {
            out_mass += gx[i];
            if (std::find(fwd.argmax.begin(), fwd.argmax.end(), i) == fwd.argmax.end()) {
                CHECK(gx[i] == 0.0);
            }
        }
        CHECK(out_mass == doctest::Approx(in_mass).epsilon(1e-12));
    }
}

TEST_CASE("avgpool examples exclude padding from the denominator") {
    const Tensor c = avgpool_forward(Tensor(Shape{1, 5, 5, 1}, 2.5f), {3, 2, Padding::same});
    for (float v : c.data()) {
        CHECK(v == 2.5f);
    }
    const Tensor r = avgpool_forward(grid(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9}), {3, 2, Padding::same});
    CHECK(r.values() == std::vector<float>{3, 4, 6, 7});
    const Tensor zeros = avgpool_forward(Tensor(Shape{1, 4, 4, 3}), {2, 2, Padding::same});
    for (float v : zeros.data()) {
        CHECK(v == 0.0f);
    }
}

TEST_CASE("property: avgpool backward conserves each window's gradient") {
    Rng rng(10);
    const PoolGeometry g{3, 2, Padding::same};
    for (int trial = 0; trial < 20; ++trial) {
        const Shape s{1, 2 + rng.below(6), 2 + rng.below(6), 1};
        const Shape os{1, (s.h + 1) / 2, (s.w + 1) / 2, 1};
        // one-hot cotangent: the whole gradient of one window must reappear
        for (std::size_t k = 0; k < os.size(); ++k) {
            Tensor64 cot(os);
            cot[k] = 1.0;
            const Tensor64 gx = avgpool_backward<double>(s, g, cot);
            double total = 0;
            for (double v : gx.data()) {
                total += v;
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("avg2max examples") {
    const Tensor negated = avg2max_pool(Tensor(Shape{1, 6, 6, 2}, 1.5f));
    for (float v : negated.data()) {
        CHECK(v == -1.5f);
    }
    const Tensor r = avg2max_pool(grid(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
    CHECK(r.values() == std::vector<float>{-7, -8, -10, -11});
    CHECK(avg2max_pool(Tensor(Shape{1, 56, 56, 34})).shape() == Shape{1, 28, 28, 34});
}

TEST_CASE("property: avg2max is literally avgpool - 2 * maxpool and matches the window oracle") {
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const Shape s{1 + rng.below(2), 1 + rng.below(9), 1 + rng.below(9), 1 + rng.below(4)};
        const Tensor x = random_float(s, rng, -4, 4);
        const Tensor a2m = avg2max_pool(x);
        const Tensor avg = avgpool_forward(x, {3, 2, Padding::same});
        const Tensor mx = maxpool_forward(x, {3, 2, Padding::same}).out;
        CHECK(a2m.shape() == Shape{s.n, (s.h + 1) / 2, (s.w + 1) / 2, s.c});
        bool composed = true;
        for (std::size_t i = 0; i < a2m.size(); ++i) {
            composed = composed && a2m[i] == avg[i] - 2.0f * mx[i];
        }
        CHECK(composed);
        CHECK(a2m == avg2max_oracle(x));
    }
}

TEST_CASE("pooling gradients match finite differences") {
    Rng rng(13);
    CHECK(check_maxpool(rng).worst < 1e-5);
    CHECK(check_avgpool(rng).worst < 1e-5);
    CHECK(check_avg2max(rng).worst < 1e-5);
    CHECK(check_gap(rng).worst < 1e-5);
}

TEST_CASE("global average pooling") {
    Tensor x(Shape{1, 2, 2, 2});
    for (std::size_t y = 0; y < 2; ++y) {
        for (std::size_t xx = 0; xx < 2; ++xx) {
            x(0, y, xx, 0) = 3.0f;
            x(0, y, xx, 1) = -1.0f;
        }
    }
    CHECK(global_avg_pool(x).values() == std::vector<float>{3.0f, -1.0f});
    CHECK(global_avg_pool(Tensor(Shape{1, 7, 7, 377})).shape() == Shape{1, 1, 1, 377});
    Tensor spike(Shape{1, 4, 5, 1});
    spike(0, 3, 4, 0) = 10.0f;
    CHECK(global_avg_pool(spike)[0] == doctest::Approx(10.0 / 20.0));
}

// ---------------------------------------------------------------------------
// dense / softmax
// ---------------------------------------------------------------------------

TEST_CASE("dense identity and parameter count") {
    auto p = DenseParams<float>::zeros(3, 3);
    for (std::size_t i = 0; i < 3; ++i) {
        p.weights[i * 3 + i] = 1.0f;
    }
    const Tensor x(Shape{2, 1, 1, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(dense_forward(x, p) == x);
    CHECK(DenseParams<float>::zeros(377, 44).trainable_count() == 16632);
    CHECK_THROWS_AS((void)dense_forward(Tensor(Shape{1, 1, 1, 4}), p), ShapeError);
    Rng rng(14);
    CHECK(check_dense(rng).worst < 1e-5);
}

TEST_CASE("softmax cross-entropy") {
    const Tensor uniform(Shape{1, 1, 1, 4});
    const std::vector<std::size_t> label{2};
    const auto r = softmax_cce(uniform, label);
    CHECK(r.loss == doctest::Approx(std::log(4.0)).epsilon(1e-7));
    CHECK(r.loss == doctest::Approx(1.386294).epsilon(1e-6));

    const Tensor peaked(Shape{1, 1, 1, 3}, {1000.0f, 0.0f, -5.0f});
    const std::vector<std::size_t> first{0};
    const auto p = softmax_cce(peaked, first);
    CHECK(p.loss == doctest::Approx(0.0));
    CHECK(std::isfinite(p.loss));

    const std::vector<std::size_t> bad{4};
    CHECK_THROWS_AS((void)softmax_cce(uniform, bad), std::out_of_range);

    Rng rng(15);
    const Tensor z = random_float(Shape{5, 1, 1, 44}, rng, -10, 10);
    const Tensor probs = softmax(z);
    for (std::size_t n = 0; n < 5; ++n) {
        double total = 0;
        for (std::size_t j = 0; j < 44; ++j) {
            total += probs(n, 0, 0, j);
        }
        CHECK(std::abs(total - 1.0) < 1e-6);
    }
    CHECK(check_softmax_cce(rng).worst < 1e-5);
}
