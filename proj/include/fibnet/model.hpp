#pragma once

#include "fibnet/layers.hpp"
#include "fibnet/param_store.hpp"
#include "fibnet/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace fibnet {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class BlockKind { standard_conv, dwsc };

// Order of the pre-pool convolution inside a parallel concatenation block.
enum class PcbOrder { conv_then_pool, pool_then_conv };

struct BlockSpec {
    std::size_t index = 1;  // 1-based
    std::size_t filters = 21;
    BlockKind kind = BlockKind::standard_conv;
    std::size_t convs_per_block = 2;
    bool downsample = true;  // ends with 2x2 stride-2 max pooling
};

// Skip branch tapping the output of `source_block`, passing it through
// Avg-2Max pooling (optionally with a 3x3 conv + BN + ReLU) and concatenating
// it onto the input of `merge_before_block`.
struct PcbSpec {
    std::size_t source_block = 2;
    std::size_t merge_before_block = 4;
    std::optional<std::size_t> pre_pool_filters;

    friend bool operator==(const PcbSpec &, const PcbSpec &) = default;
};

std::vector<PcbSpec> default_pcbs();

// First n entries of 21, 34, 55, ... (1 <= n <= 8).
std::vector<std::size_t> fibonacci_schedule(std::size_t n);
// n entries of the recurrence seeded with (first, second).
std::vector<std::size_t> fibonacci_schedule(std::size_t n, std::size_t first, std::size_t second);

struct ModelConfig {
    std::size_t num_blocks = 7;
    std::vector<std::size_t> filter_schedule = fibonacci_schedule(7);
    std::vector<PcbSpec> pcbs = default_pcbs();
    std::size_t num_classes = 4;
    std::size_t input_size = 224;
    std::size_t input_channels = 3;
    std::size_t convs_per_block = 2;
    std::size_t downsample_blocks = 5;  // blocks 1..downsample_blocks end with max pooling
    PcbOrder pcb_order = PcbOrder::conv_then_pool;
    BatchNormSettings batchnorm;

    // Standard Fibonacci-Net with the schedule matching num_blocks.
    static ModelConfig standard(std::size_t num_blocks, std::size_t num_classes);

    // Throws ConfigError on any violated invariant.
    void validate() const;
    [[nodiscard]] std::vector<BlockSpec> blocks() const;
    // Spatial side of each block's output (after its optional downsampling), 1-based.
    [[nodiscard]] std::size_t block_output_side(std::size_t block) const;

    friend bool operator==(const ModelConfig &a, const ModelConfig &b);
};

// ---------------------------------------------------------------------------
// Parameter counting from closed forms
// ---------------------------------------------------------------------------

struct LayerCount {
    std::string layer;
    std::string kind;  // conv | depthwise | pointwise | batchnorm | dense
    std::size_t trainable = 0;
};

struct ParamTable {
    std::vector<LayerCount> rows;
    std::size_t total = 0;
};

// Per-layer trainable counts: conv (9*f0 + 1)*f1, depthwise 10*f0,
// pointwise (f0 + 1)*f1, batch norm 2*c, dense (in + 1)*out.
ParamTable count_params(const ModelConfig &cfg);

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

enum class UnitKind { conv, dwsc };

// Conv (or DWSC) followed by batch norm and ReLU. Members are ParamStore indices.
struct Unit {
    UnitKind kind = UnitKind::conv;
    std::string name;
    std::size_t in_c = 0;
    std::size_t out_c = 0;
    std::size_t kernel = 0, bias = 0;  // conv
    std::size_t dw_kernel = 0, dw_bias = 0, pw_kernel = 0, pw_bias = 0;  // dwsc
    std::size_t gamma = 0, beta = 0, moving_mean = 0, moving_var = 0;

    [[nodiscard]] ConvGeometry conv_geometry() const { return {3, in_c, out_c, 1, Padding::same}; }
};

struct BlockNode {
    BlockSpec spec;
    std::size_t in_c = 0;
    std::vector<Unit> units;
};

struct PcbNode {
    PcbSpec spec;
    std::string name;
    std::size_t in_c = 0;
    std::size_t out_c = 0;
    std::optional<Unit> conv;
};

class Graph {
public:
    ModelConfig config;
    std::vector<BlockNode> blocks;
    std::vector<PcbNode> pcbs;
    std::size_t gap_channels = 0;
    std::size_t dense_kernel = 0;
    std::size_t dense_bias = 0;

    // Channel count entering a block (after any concatenation).
    [[nodiscard]] std::size_t block_input_channels(std::size_t block) const { return blocks.at(block - 1).in_c; }
    // Names usable as activation taps: every unit output plus "block<i>"
    // aliases for each block's last unit.
    [[nodiscard]] std::vector<std::string> layer_names() const;
    [[nodiscard]] bool has_layer(std::string_view name) const;
};

template <typename T>
struct Model {
    Graph graph;
    ParamStore<T> params;
};

// Builds the graph and initializes parameters from `seed`: He-uniform for
// convolution kernels, LeCun-uniform for the dense kernel, zero biases,
// gamma 1, beta 0, moving statistics (0, 1).
template <typename T>
Model<T> build_model(const ModelConfig &cfg, std::uint64_t seed);

template <typename T>
struct UnitCache {
    BasicTensor<T> input;
    BasicTensor<T> mid;  // depthwise output (dwsc only)
    BatchNormCache<T> bn;
    BasicTensor<T> out;  // post-ReLU
};

template <typename T>
struct BlockCache {
    std::vector<UnitCache<T>> units;
    std::vector<std::size_t> pool_argmax;
    Shape tap_shape;  // last unit output (pre-pool)
    bool pooled = false;
};

template <typename T>
struct PcbCache {
    Shape source_shape;
    Shape pool_input_shape;
    std::vector<std::size_t> a2m_argmax;
    std::optional<UnitCache<T>> conv;
};

template <typename T>
struct ForwardCache {
    Mode mode = Mode::train;
    std::vector<BlockCache<T>> blocks;
    std::vector<PcbCache<T>> pcbs;
    BasicTensor<T> gap_input;
    BasicTensor<T> gap_output;
    bool consumed = false;

    // Activation recorded at a layer tap (see Graph::layer_names).
    [[nodiscard]] const BasicTensor<T> &activation(const Graph &g, std::string_view layer) const;
};

// x must be (n, input_size, input_size, input_channels). Train mode updates
// batch-norm moving statistics.
template <typename T>
BasicTensor<T> forward(const Graph &g, ParamStore<T> &params, const BasicTensor<T> &x, Mode mode, std::type_identity_t<ForwardCache<T>> *cache = nullptr);

// Accumulates parameter gradients into params. The cache is consumed; a
// second call with the same cache throws. When `capture` names a layer tap
// the gradient with respect to that activation is returned.
template <typename T>
std::optional<BasicTensor<T>> backward(const Graph &g, ParamStore<T> &params, ForwardCache<T> &cache,
                                       const BasicTensor<T> &grad_logits, std::string_view capture = {});

}  // namespace fibnet
