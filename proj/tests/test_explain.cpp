#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "configs.hpp"
#include "toy_gradcam.hpp"

#include "fibnet/random.hpp"

#include <cmath>
#include <sstream>

using namespace fibnet;
using namespace fibnet::testing;

namespace {

Tensor random_sample(std::size_t side, std::uint64_t seed) {
    Rng rng(seed);
    Tensor x(Shape{1, side, side, 3});
    for (auto &v : x.data()) {
        v = static_cast<float>(rng.uniform01());
    }
    return x;
}

}  // namespace

TEST_CASE("toy model: map concentrates on the bright quadrant") {
    Model<float> m = toy_gradcam_model();
    const HeatMap h = gradcam(m.graph, m.params, toy_gradcam_image(), kToyTarget, "block1");
    CHECK(h.height == kToySide);
    CHECK(h.width == kToySide);
    CHECK(h.normalization_max > 0.0);
    CHECK(quadrant_mass(h) >= 0.8);
    // deeper taps see the same region
    const HeatMap h2 = gradcam(m.graph, m.params, toy_gradcam_image(), kToyTarget, "block2");
    CHECK(quadrant_mass(h2) >= 0.8);
}

TEST_CASE("zero-weight model gives an all-zero map") {
    Model<float> m = build_model<float>(three_block_config(), 3);
    for (auto &e : m.params.entries()) {
        if (e.trainable) {
            std::fill(e.value.begin(), e.value.end(), 0.0f);
        }
    }
    const HeatMap h = gradcam(m.graph, m.params, random_sample(16, 1), 0, "block2");
    CHECK(h.normalization_max == 0.0);
    for (float v : h.values) {
        CHECK(v == 0.0f);
    }
}

TEST_CASE("map is non-negative, peaks at 1 and has the layer's shape") {
    Model<float> m = build_model<float>(three_block_config(), 5);
    for (const std::string layer : {"block1", "block2", "block3", "pcb1to3/conv"}) {
        if (!m.graph.has_layer(layer)) {
            continue;
        }
        const Tensor x = random_sample(16, 7);
        ForwardCache<float> cache;
        (void)forward(m.graph, m.params, x, Mode::infer, &cache);
        const Shape s = cache.activation(m.graph, layer).shape();
        for (std::size_t c = 0; c < 4; ++c) {
            const HeatMap h = gradcam(m.graph, m.params, x, c, layer);
            CHECK(h.height == s.h);
            CHECK(h.width == s.w);
            float peak = 0.0f;
            for (float v : h.values) {
                CHECK(v >= 0.0f);
                peak = std::max(peak, v);
            }
            CHECK((peak == 1.0f || h.normalization_max == 0.0));
        }
    }
}

TEST_CASE("gradcam leaves no gradients behind and does not touch moving stats") {
    Model<float> m = build_model<float>(three_block_config(), 5);
    const ParamStore<float> before = m.params;
    (void)gradcam(m.graph, m.params, random_sample(16, 2), 1, "block3");
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        CHECK(m.params[i].value == before[i].value);
        CHECK_FALSE(m.params[i].grad_ready);
    }
}

TEST_CASE("rescaling the target's dense column leaves the map unchanged") {
    Model<float> m = build_model<float>(three_block_config(), 11);
    const Tensor x = random_sample(16, 3);
    const HeatMap a = gradcam(m.graph, m.params, x, 2, "block2");
    auto &k = m.params[m.graph.dense_kernel].value;
    for (std::size_t r = 0; r < m.graph.gap_channels; ++r) {
        k[r * 4 + 2] *= 4.0f;
    }
    const HeatMap b = gradcam(m.graph, m.params, x, 2, "block2");
    REQUIRE(a.values.size() == b.values.size());
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        CHECK(b.values[i] == doctest::Approx(a.values[i]).epsilon(1e-5));
    }
}

TEST_CASE("single channel with unit gradient reduces to ReLU of the activation") {
    Rng rng(4);
    Tensor a(Shape{1, 5, 6, 1});
    for (auto &v : a.data()) {
        v = static_cast<float>(rng.uniform(-1.0, 1.0));
    }
    const HeatMap h = gradcam_from(a, Tensor(a.shape(), 1.0f));
    float peak = 0.0f;
    for (float v : a.data()) {
        peak = std::max(peak, v);
    }
    CHECK(h.normalization_max == doctest::Approx(peak));
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(h.values[i] == doctest::Approx(std::max(a[i], 0.0f) / peak));
    }
    CHECK_THROWS_AS((void)gradcam_from(a, Tensor(Shape{1, 5, 5, 1})), ShapeError);
}

TEST_CASE("default layer is the last standard-conv block") {
    Graph g7 = build_model<float>(ModelConfig::standard(7, 44), 0).graph;
    CHECK(default_gradcam_layer(g7) == "block5");
    Model<float> m6 = build_model<float>(synthetic_model_config(), 0);
    CHECK(default_gradcam_layer(m6.graph) == "block4");
    Model<float> m3 = build_model<float>(three_block_config(), 0);
    CHECK(default_gradcam_layer(m3.graph) == "block1");
    Tensor x(Shape{1, 16, 16, 3}, 0.5f);
    CHECK(gradcam(m3.graph, m3.params, x, 0).source_layer == "block1");
}

TEST_CASE("unknown layer names the valid ones") {
    Model<float> m = build_model<float>(three_block_config(), 1);
    try {
        (void)gradcam(m.graph, m.params, random_sample(16, 1), 0, "block5");
        FAIL("expected an error");
    } catch (const std::invalid_argument &e) {
        const std::string msg = e.what();
        CHECK(msg.find("block5") != std::string::npos);
        CHECK(msg.find("block1") != std::string::npos);
        CHECK(msg.find("block3") != std::string::npos);
    }
    CHECK_THROWS_AS((void)gradcam(m.graph, m.params, random_sample(16, 1), 4, "block1"), std::out_of_range);
}

TEST_CASE("overlay and sidecar") {
    Model<float> m = toy_gradcam_model();
    const Tensor x = toy_gradcam_image();
    const HeatMap h = gradcam(m.graph, m.params, x, kToyTarget, "block1");
    const Image raw = heatmap_image(h);
    CHECK(raw.width == kToySide);
    CHECK(raw.channels == 1);
    CHECK(raw.pixels[0] == 255);  // top-left corner is inside the hot quadrant
    CHECK(raw.pixels.back() == 0);
    const Image over = heatmap_overlay(h, x);
    CHECK(over.width == kToySide);
    CHECK(over.channels == 3);
    // cold corner is the sample blended with blue
    CHECK(over.pixels[over.pixels.size() - 3] < over.pixels.back());
    std::ostringstream os;
    write_heatmap_sidecar(os, h);
    CHECK(os.str().find("\"layer\": \"block1\"") != std::string::npos);
    CHECK(os.str().find("\"class\": 2") != std::string::npos);
}

TEST_CASE("entropy examples") {
    const std::vector<float> constant(100, 3.5f);
    CHECK(feature_entropy(constant) == 0.0);
    std::vector<float> uniform16;
    for (int b = 0; b < 16; ++b) {
        for (int r = 0; r < 5; ++r) {
            uniform16.push_back(static_cast<float>(b) + 0.5f);
        }
    }
    CHECK(feature_entropy(uniform16, 16) == doctest::Approx(4.0).epsilon(1e-12));
    std::vector<float> halves(8, 0.0f);
    halves.insert(halves.end(), 8, 1.0f);
    CHECK(feature_entropy(halves, 2) == 1.0);
    CHECK(feature_entropy(std::vector<float>{}) == 0.0);
    CHECK_THROWS_AS((void)feature_entropy(halves, 1), std::invalid_argument);
}

TEST_CASE("property: entropy is bounded and invariant under affine rescaling") {
    Rng rng(21);
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 10 + rng.below(500);
        const std::size_t bins = 2 + rng.below(300);
        std::vector<float> v(n);
        for (auto &x : v) {
            x = static_cast<float>(rng.uniform(-3.0, 3.0));
        }
        const double h = feature_entropy(v, bins);
        CHECK(h >= 0.0);
        CHECK(h <= std::log2(static_cast<double>(bins)) + 1e-12);
        CHECK(h <= std::log2(static_cast<double>(n)) + 1e-12);
        // powers of two scale exactly; negative flips the histogram
        for (float s : {2.0f, 0.25f, -4.0f}) {
            std::vector<float> w(v);
            for (auto &x : w) {
                x *= s;
            }
            CHECK(feature_entropy(w, bins) == doctest::Approx(h).epsilon(1e-12));
        }
        // on a 1/64 grid x * 3 + 7 is exact in float
        std::vector<float> grid(n);
        for (auto &x : grid) {
            x = static_cast<float>(static_cast<double>(rng.below(385)) / 64.0 - 3.0);
        }
        std::vector<float> shifted(grid);
        for (auto &x : shifted) {
            x = x * 3.0f + 7.0f;
        }
        CHECK(feature_entropy(shifted, bins) == feature_entropy(grid, bins));
    }
}

TEST_CASE("entropy_compare") {
    ModelConfig with = three_block_config();
    ModelConfig without = with;
    without.pcbs.clear();
    Model<float> a = build_model<float>(with, 8);
    Model<float> b = build_model<float>(without, 8);
    Tensor xs(Shape{3, 16, 16, 3});
    Rng rng(5);
    for (auto &v : xs.data()) {
        v = static_cast<float>(rng.uniform01());
    }
    const auto rows = entropy_compare(a, b, xs, 64);
    REQUIRE(rows.size() == 8);
    CHECK(rows[0].tap == "block1");
    CHECK(rows[0].model == "with_pcb");
    CHECK(rows[3].tap == "gap_input");
    CHECK(rows[7].model == "without_pcb");
    // block 1 sees identical weights in both models
    CHECK(rows[0].bits == rows[4].bits);
    for (const auto &r : rows) {
        CHECK(r.bits >= 0.0);
        CHECK(r.bits <= 6.0);
        CHECK(r.bins == 64);
    }
    std::ostringstream os;
    write_entropy_csv(os, rows);
    CHECK(os.str().rfind("tap,model,bits,bins\nblock1,with_pcb,", 0) == 0);

    ModelConfig other = without;
    other.num_classes = 5;
    Model<float> c = build_model<float>(other, 8);
    CHECK_THROWS_AS((void)entropy_compare(a, c, xs), ConfigError);
}

TEST_CASE("pool preview") {
    Image grey{224, 224, 3, std::vector<std::uint8_t>(224 * 224 * 3, 128)};
    const Image g = pool_preview(grey);
    CHECK(g.width == 112);
    CHECK(g.height == 112);
    CHECK(g.channels == 3);
    CHECK(std::all_of(g.pixels.begin(), g.pixels.end(), [&](std::uint8_t v) { return v == g.pixels[0]; }));

    // white 16x16 square at (24..39) on a 64x64 black image
    Image sq{64, 64, 1, std::vector<std::uint8_t>(64 * 64, 0)};
    for (std::size_t y = 24; y < 40; ++y) {
        for (std::size_t x = 24; x < 40; ++x) {
            sq.at(y, x, 0) = 255;
        }
    }
    const Image p = pool_preview(sq);
    CHECK(p.width == 32);
    // output pixel i covers input rows 2i..2i+2 (the single pad row goes after)
    const auto v = [&](std::size_t y, std::size_t x) { return static_cast<int>(p.at(y, x, 0)); };
    const int border = v(11, 16);  // rows 22..24 straddle the top edge
    const int inside = v(16, 16);
    const int outside = v(4, 4);
    CHECK(border > inside);
    CHECK(inside > outside);
    CHECK(outside == 0);
    // odd sizes round up
    Image odd{7, 5, 4, std::vector<std::uint8_t>(7 * 5 * 4, 9)};
    const Image o = pool_preview(odd);
    CHECK(o.width == 4);
    CHECK(o.height == 3);
    CHECK(o.channels == 3);
}

TEST_CASE("entropy_compare on identical models gives equal entropies") {
    ModelConfig cfg = three_block_config();
    cfg.pcbs.clear();
    Model<float> a = build_model<float>(cfg, 4);
    Model<float> b = build_model<float>(cfg, 4);
    Tensor xs(Shape{2, 16, 16, 3});
    Rng rng(6);
    for (auto &v : xs.data()) {
        v = static_cast<float>(rng.uniform01());
    }
    const auto rows = entropy_compare(a, b, xs);
    const std::size_t half = rows.size() / 2;
    for (std::size_t i = 0; i < half; ++i) {
        CHECK(rows[i].bits == rows[i + half].bits);
    }
}
