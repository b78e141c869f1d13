#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "count_oracle.hpp"
#include "model_gradcheck.hpp"

#include "fibnet/model.hpp"

#include <cmath>
#include <map>

using namespace fibnet;
using namespace fibnet::testing;

namespace {

std::size_t nonzero_count(std::span<const float> v) {
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](float x) { return x != 0.0f; }));
}

}  // namespace

TEST_CASE("fibonacci_schedule") {
    CHECK(fibonacci_schedule(7) == std::vector<std::size_t>{21, 34, 55, 89, 144, 233, 377});
    CHECK(fibonacci_schedule(2) == std::vector<std::size_t>{21, 34});
    CHECK(fibonacci_schedule(8).back() == 610);
    CHECK_THROWS_AS((void)fibonacci_schedule(0), ConfigError);
    CHECK_THROWS_AS((void)fibonacci_schedule(9), ConfigError);
}

TEST_CASE("config validation") {
    ModelConfig cfg = ModelConfig::standard(7, 44);
    CHECK_NOTHROW(cfg.validate());

    auto broken = cfg;
    broken.filter_schedule[4] = 150;
    CHECK_THROWS_AS(broken.validate(), ConfigError);

    broken = cfg;
    broken.pcbs = {PcbSpec{2, 5, std::nullopt}};
    CHECK_THROWS_AS(broken.validate(), ConfigError);

    // block 6 does not downsample, so a 5 -> 7 branch cannot line up spatially
    broken = ModelConfig::standard(8, 4);
    broken.pcbs.push_back(PcbSpec{5, 7, std::nullopt});
    CHECK_THROWS_AS(broken.validate(), ConfigError);

    broken = cfg;
    broken.num_blocks = 9;
    CHECK_THROWS_AS(broken.validate(), ConfigError);
}

TEST_CASE("block specs: dwsc exactly in the last two blocks, blocks 1-5 downsample") {
    for (std::size_t n : {6u, 7u, 8u}) {
        const auto blocks = ModelConfig::standard(n, 4).blocks();
        REQUIRE(blocks.size() == n);
        for (const auto &b : blocks) {
            CHECK((b.kind == BlockKind::dwsc) == (b.index + 2 > n));
            CHECK(b.downsample == (b.index <= 5));
            if (b.index >= 3) {
                CHECK(b.filters == blocks[b.index - 2].filters + blocks[b.index - 3].filters);
            }
        }
    }
}

TEST_CASE("count_params closed forms") {
    const ParamTable t = count_params(ModelConfig::standard(7, 44));
    REQUIRE(!t.rows.empty());
    CHECK(t.rows.front().layer == "block1/conv1");
    CHECK(t.rows.front().trainable == 588);
    const auto dw7 = std::find_if(t.rows.begin(), t.rows.end(), [](const LayerCount &r) { return r.layer == "block7/dwsc/depthwise"; });
    REQUIRE(dw7 != t.rows.end());
    CHECK(dw7->trainable == 2330);
    CHECK(t.rows.back().trainable == 16632);
    // Independent evaluation of the per-layer closed forms for the default build.
    CHECK(t.total == 698706);
    CHECK(t.total < 1600000);
}

TEST_CASE("property: closed-form counts equal parameter-store enumeration") {
    for (std::size_t blocks : {6u, 7u, 8u}) {
        for (std::size_t classes : {2u, 4u, 15u, 44u}) {
            for (std::size_t convs : {1u, 2u, 3u}) {
                ModelConfig cfg = ModelConfig::standard(blocks, classes);
                cfg.convs_per_block = convs;
                const ParamTable t = count_params(cfg);
                const Model<float> m = build_model<float>(cfg, 1);
                CHECK(m.params.trainable_count() == t.total);
                const auto by_layer = enumerate_by_layer(m.params);
                CHECK(by_layer.size() == t.rows.size());
                for (const auto &row : t.rows) {
                    const auto it = by_layer.find(row.layer);
                    REQUIRE_MESSAGE(it != by_layer.end(), row.layer);
                    CHECK_MESSAGE(it->second == row.trainable, row.layer);
                }
            }
        }
    }
}

TEST_CASE("convs_per_block delta equals the removed second-conv terms") {
    ModelConfig one = ModelConfig::standard(7, 44);
    one.convs_per_block = 1;
    ModelConfig two = one;
    two.convs_per_block = 2;
    std::size_t delta = 0;
    for (std::size_t f : {21u, 34u, 55u, 89u, 144u}) {
        delta += (9 * f + 1) * f + 2 * f;
    }
    CHECK(count_params(two).total - count_params(one).total == delta);
}

TEST_CASE("default wiring: merge channels 89 and 113, pre-GAP 7x7x377") {
    const ModelConfig cfg = ModelConfig::standard(7, 44);
    Model<float> m = build_model<float>(cfg, 3);
    CHECK(m.graph.block_input_channels(4) == 89);
    CHECK(m.graph.block_input_channels(4) == 55 + 34);
    CHECK(m.graph.block_input_channels(5) == 113);
    CHECK(m.graph.block_input_channels(5) == 89 + 24);
    CHECK(m.graph.gap_channels == 377);

    Tensor x(Shape{1, 224, 224, 3}, 0.5f);
    ForwardCache<float> cache;
    const Tensor logits = forward(m.graph, m.params, x, Mode::infer, &cache);
    CHECK(logits.shape() == Shape{1, 1, 1, 44});
    CHECK(cache.gap_input.shape() == Shape{1, 7, 7, 377});
    CHECK(logits.all_finite());
}

TEST_CASE("ablation without pcbs feeds 55 channels into block 4") {
    ModelConfig cfg = ModelConfig::standard(7, 44);
    cfg.pcbs.clear();
    const Model<float> m = build_model<float>(cfg, 3);
    CHECK(m.graph.block_input_channels(4) == 55);
    CHECK(m.graph.block_input_channels(5) == 89);
    CHECK(count_params(cfg).total == 628416);
}

TEST_CASE("property: spatial sides agree at every valid merge point") {
    for (std::size_t blocks : {6u, 7u, 8u}) {
        for (std::size_t source = 1; source + 2 <= blocks; ++source) {
            ModelConfig cfg = ModelConfig::standard(blocks, 3);
            cfg.input_size = 64;
            cfg.pcbs = {PcbSpec{source, source + 2, 4}};
            const bool intervening_downsamples = source + 1 <= cfg.downsample_blocks;
            if (!intervening_downsamples) {
                CHECK_THROWS_AS(cfg.validate(), ConfigError);
                continue;
            }
            CHECK((cfg.block_output_side(source) + 1) / 2 == cfg.block_output_side(source + 1));
            cfg.filter_schedule = fibonacci_schedule(blocks, 2, 3);
            Model<float> m = build_model<float>(cfg, 1);
            CHECK(forward<float>(m.graph, m.params, Tensor(Shape{1, 64, 64, 3}, 0.2f), Mode::infer, nullptr).shape() ==
                  Shape{1, 1, 1, 3});
        }
    }
}

TEST_CASE("zero-weight model yields uniform softmax") {
    Model<float> m = build_model<float>(ModelConfig::standard(6, 4), 9);
    for (auto &e : m.params.entries()) {
        if (e.trainable) {
            std::fill(e.value.begin(), e.value.end(), 0.0f);
        }
    }
    m.graph.config.input_size = 224;
    const Tensor logits = forward(m.graph, m.params, Tensor(Shape{1, 224, 224, 3}, 0.7f), Mode::infer, nullptr);
    for (float v : logits.data()) {
        CHECK(v == 0.0f);
    }
    const std::vector<std::size_t> label{1};
    CHECK(softmax_cce(logits, label).loss == doctest::Approx(std::log(4.0)));
}

TEST_CASE("equal seeds build identical stores; forward in infer mode is deterministic") {
    const ModelConfig cfg = three_block_config();
    Model<float> a = build_model<float>(cfg, 42);
    const Model<float> b = build_model<float>(cfg, 42);
    const Model<float> c = build_model<float>(cfg, 43);
    CHECK(a.params == b.params);
    CHECK_FALSE(a.params == c.params);
    CHECK(nonzero_count(a.params.at("block1/conv1/kernel").value) > 0);

    Rng rng(5);
    Tensor x(Shape{2, 16, 16, 3});
    for (auto &v : x.data()) {
        v = static_cast<float>(rng.uniform01());
    }
    const Tensor y1 = forward(a.graph, a.params, x, Mode::infer, nullptr);
    const Tensor y2 = forward(a.graph, a.params, x, Mode::infer, nullptr);
    CHECK(y1 == y2);
}

TEST_CASE("forward rejects a wrong input shape") {
    Model<float> m = build_model<float>(three_block_config(), 1);
    CHECK_THROWS_AS((void)forward(m.graph, m.params, Tensor(Shape{1, 15, 16, 3}), Mode::infer, nullptr), ShapeError);
    CHECK_THROWS_AS((void)forward(m.graph, m.params, Tensor(Shape{1, 16, 16, 1}), Mode::infer, nullptr), ShapeError);
}

TEST_CASE("backward consumes the cache once and reaches every trainable entry") {
    Model<float> m = build_model<float>(three_block_config(), 7);
    Tensor x(Shape{2, 16, 16, 3}, 0.3f);
    x(0, 3, 3, 0) = 1.0f;
    x(1, 8, 2, 2) = 0.9f;
    ForwardCache<float> cache;
    const Tensor logits = forward(m.graph, m.params, x, Mode::train, &cache);
    const std::vector<std::size_t> labels{0, 2};
    const auto loss = softmax_cce(logits, labels);
    m.params.zero_grad();
    (void)backward(m.graph, m.params, cache, loss.grad_logits);
    for (const auto &e : m.params.entries()) {
        if (e.trainable) {
            CHECK_MESSAGE(nonzero_count(e.grad) > 0, e.name);
        }
    }
    CHECK_THROWS_AS((void)backward(m.graph, m.params, cache, loss.grad_logits), std::logic_error);
}

TEST_CASE("whole-model gradients match finite differences (3-block, 64-bit)") {
    const auto r = check_model_gradients(three_block_config(), 2024, 2, 6);
    CHECK(r.sampled > 50);
    CHECK(r.worst_entry < 1e-4);
}

TEST_CASE("whole-model gradients in infer mode reach the pre-norm biases") {
    const auto r = check_model_gradients(three_block_config(), 11, 2, 6, Mode::infer);
    CHECK(r.worst_entry < 1e-4);
}

TEST_CASE("whole-model gradients with pool-then-conv pcb ordering") {
    ModelConfig cfg = three_block_config();
    cfg.pcb_order = PcbOrder::pool_then_conv;
    const auto r = check_model_gradients(cfg, 77, 2, 6);
    CHECK(r.worst_entry < 1e-4);
}

TEST_CASE("layer taps and captured gradients") {
    Model<float> m = build_model<float>(three_block_config(), 7);
    const auto names = m.graph.layer_names();
    CHECK(m.graph.has_layer("block1"));
    CHECK(m.graph.has_layer("block1/conv2"));
    CHECK(m.graph.has_layer("block3/dwsc"));
    CHECK(m.graph.has_layer("pcb1_3/conv"));
    CHECK_FALSE(m.graph.has_layer("bogus"));

    ForwardCache<float> cache;
    const Tensor logits = forward(m.graph, m.params, Tensor(Shape{1, 16, 16, 3}, 0.5f), Mode::infer, &cache);
    CHECK(cache.activation(m.graph, "block1").shape() == Shape{1, 16, 16, 2});
    CHECK(cache.activation(m.graph, "pcb1_3/conv").shape() == Shape{1, 8, 8, 2});
    Tensor g(logits.shape());
    g[0] = 1.0f;
    const auto captured = backward(m.graph, m.params, cache, g, "block2");
    REQUIRE(captured.has_value());
    CHECK(captured->shape() == Shape{1, 8, 8, 3});
}
