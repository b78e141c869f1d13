#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fibnet/random.hpp"
#include "fibnet/tensor.hpp"

using namespace fibnet;

TEST_CASE("tensor construction enforces the shape invariant") {
    Tensor t(Shape{2, 3, 4, 5});
    CHECK(t.size() == 120);
    CHECK_THROWS_AS(Tensor(Shape{0, 1, 1, 1}), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{1, 2, 2, 1}, std::vector<float>(3)), ShapeError);
    t(1, 2, 3, 4) = 7.0f;
    CHECK(t[t.size() - 1] == 7.0f);
    CHECK(t.offset(0, 0, 1, 0) == 5);
}

TEST_CASE("concat_channels shapes") {
    CHECK(concat_channels(Tensor(Shape{1, 14, 14, 89}), Tensor(Shape{1, 14, 14, 24})).shape() == Shape{1, 14, 14, 113});
    CHECK(concat_channels(Tensor(Shape{1, 28, 28, 55}), Tensor(Shape{1, 28, 28, 34})).shape() == Shape{1, 28, 28, 89});
    const Tensor zeros(Shape{1, 2, 2, 1});
    const Tensor z2 = concat_channels(zeros, zeros);
    CHECK(z2.shape() == Shape{1, 2, 2, 2});
    for (float v : z2.data()) {
        CHECK(v == 0.0f);
    }
}

TEST_CASE("concat_channels places a first and names the differing axis") {
    Tensor a(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor b(Shape{1, 1, 2, 1}, {9, 8});
    const Tensor c = concat_channels(a, b);
    CHECK(c.values() == std::vector<float>{1, 2, 9, 3, 4, 8});

    try {
        (void)concat_channels(Tensor(Shape{1, 4, 4, 2}), Tensor(Shape{1, 4, 5, 2}));
        FAIL("expected ShapeError");
    } catch (const ShapeError &e) {
        CHECK(std::string(e.what()).find("width") != std::string::npos);
    }
    CHECK_THROWS_AS((void)concat_channels(Tensor(Shape{2, 4, 4, 2}), Tensor(Shape{1, 4, 4, 2})), ShapeError);
    CHECK_THROWS_AS((void)concat_channels(Tensor(Shape{1, 3, 4, 2}), Tensor(Shape{1, 4, 4, 2})), ShapeError);
}

TEST_CASE("property: slicing the concatenation recovers both operands bit-exactly") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Shape sa{1 + rng.below(3), 1 + rng.below(5), 1 + rng.below(5), 1 + rng.below(6)};
        Shape sb = sa;
        sb.c = 1 + rng.below(6);
        Tensor a(sa);
        Tensor b(sb);
        for (auto &v : a.data()) {
            v = static_cast<float>(rng.uniform(-5, 5));
        }
        for (auto &v : b.data()) {
            v = static_cast<float>(rng.uniform(-5, 5));
        }
        const Tensor c = concat_channels(a, b);
        CHECK(slice_channels(c, 0, sa.c) == a);
        CHECK(slice_channels(c, sa.c, sa.c + sb.c) == b);
    }
}

TEST_CASE("same_pad_geometry examples") {
    auto g = same_pad_geometry(224, 3, 1);
    CHECK(g.out == 224);
    CHECK(g.pad_before == 1);
    CHECK(g.pad_after == 1);

    g = same_pad_geometry(224, 3, 2);
    CHECK(g.out == 112);
    CHECK(g.pad_before == 0);
    CHECK(g.pad_after == 1);

    g = same_pad_geometry(3, 3, 2);
    CHECK(g.out == 2);
    CHECK(g.pad_before == 1);
    CHECK(g.pad_after == 1);
}

TEST_CASE("property: same padding yields ceil(in / stride)") {
    for (std::size_t in = 1; in <= 64; ++in) {
        for (std::size_t k : {1u, 3u}) {
            for (std::size_t s : {1u, 2u}) {
                const auto g = same_pad_geometry(in, k, s);
                CHECK(g.out == (in + s - 1) / s);
                const std::size_t needed = (g.out - 1) * s + k;
                const std::size_t total = needed > in ? needed - in : 0;
                CHECK(g.pad_before + g.pad_after == total);
                CHECK(g.pad_before <= g.pad_after);
                CHECK(g.pad_after - g.pad_before <= 1);
            }
        }
    }
}
