#include "fibnet/model.hpp"
#include "fibnet/random.hpp"

#include <algorithm>
#include <cmath>

namespace fibnet {

std::vector<PcbSpec> default_pcbs() { return {PcbSpec{2, 4, std::nullopt}, PcbSpec{3, 5, 24}}; }

std::vector<std::size_t> fibonacci_schedule(std::size_t n, std::size_t first, std::size_t second) {
    std::vector<std::size_t> s;
    s.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (i == 0) {
            s.push_back(first);
        } else if (i == 1) {
            s.push_back(second);
        } else {
            s.push_back(s[i - 1] + s[i - 2]);
        }
    }
    return s;
}

std::vector<std::size_t> fibonacci_schedule(std::size_t n) {
    if (n < 1 || n > 8) {
        throw ConfigError("fibonacci_schedule: block count must be in [1, 8], got " + std::to_string(n));
    }
    return fibonacci_schedule(n, 21, 34);
}

ModelConfig ModelConfig::standard(std::size_t num_blocks, std::size_t num_classes) {
    ModelConfig cfg;
    cfg.num_blocks = num_blocks;
    cfg.filter_schedule = fibonacci_schedule(num_blocks);
    cfg.num_classes = num_classes;
    return cfg;
}

bool operator==(const ModelConfig &a, const ModelConfig &b) {
    return a.num_blocks == b.num_blocks && a.filter_schedule == b.filter_schedule && a.pcbs == b.pcbs &&
           a.num_classes == b.num_classes && a.input_size == b.input_size && a.input_channels == b.input_channels &&
           a.convs_per_block == b.convs_per_block && a.downsample_blocks == b.downsample_blocks && a.pcb_order == b.pcb_order &&
           a.batchnorm.momentum == b.batchnorm.momentum && a.batchnorm.epsilon == b.batchnorm.epsilon;
}

std::size_t ModelConfig::block_output_side(std::size_t block) const {
    std::size_t side = input_size;
    for (std::size_t b = 1; b <= block; ++b) {
        if (b <= downsample_blocks) {
            side = (side + 1) / 2;
        }
    }
    return side;
}

void ModelConfig::validate() const {
    if (num_blocks < 3 || num_blocks > 8) {
        throw ConfigError("num_blocks must be in [3, 8], got " + std::to_string(num_blocks));
    }
    if (filter_schedule.size() != num_blocks) {
        throw ConfigError("filter_schedule has " + std::to_string(filter_schedule.size()) + " entries for " +
                          std::to_string(num_blocks) + " blocks");
    }
    for (std::size_t i = 0; i < filter_schedule.size(); ++i) {
        if (filter_schedule[i] == 0) {
            throw ConfigError("filter_schedule entries must be >= 1");
        }
        if (i >= 2 && filter_schedule[i] != filter_schedule[i - 1] + filter_schedule[i - 2]) {
            throw ConfigError("filter_schedule breaks the Fibonacci recurrence at block " + std::to_string(i + 1) + ": " +
                              std::to_string(filter_schedule[i]) + " != " + std::to_string(filter_schedule[i - 1]) + " + " +
                              std::to_string(filter_schedule[i - 2]));
        }
    }
    if (num_classes < 2) {
        throw ConfigError("num_classes must be >= 2");
    }
    if (input_size < 1 || input_channels < 1) {
        throw ConfigError("input_size and input_channels must be >= 1");
    }
    if (convs_per_block < 1) {
        throw ConfigError("convs_per_block must be >= 1");
    }
    if (!(batchnorm.momentum > 0.0 && batchnorm.momentum < 1.0) || !(batchnorm.epsilon > 0.0)) {
        throw ConfigError("batch-norm momentum must be in (0,1) and epsilon > 0");
    }
    std::vector<bool> merged(num_blocks + 1, false);
    for (const PcbSpec &p : pcbs) {
        if (p.source_block < 1 || p.merge_before_block != p.source_block + 2) {
            throw ConfigError("pcb " + std::to_string(p.source_block) + "->" + std::to_string(p.merge_before_block) +
                              " must merge exactly two blocks downstream");
        }
        if (p.merge_before_block > num_blocks) {
            throw ConfigError("pcb " + std::to_string(p.source_block) + "->" + std::to_string(p.merge_before_block) +
                              " targets a block beyond num_blocks=" + std::to_string(num_blocks));
        }
        if (merged[p.merge_before_block]) {
            throw ConfigError("two pcbs merge before block " + std::to_string(p.merge_before_block));
        }
        merged[p.merge_before_block] = true;
        if (p.pre_pool_filters && *p.pre_pool_filters == 0) {
            throw ConfigError("pcb pre_pool_filters must be >= 1");
        }
        const std::size_t branch_side = (block_output_side(p.source_block) + 1) / 2;
        const std::size_t main_side = block_output_side(p.source_block + 1);
        if (branch_side != main_side) {
            throw ConfigError("pcb " + std::to_string(p.source_block) + "->" + std::to_string(p.merge_before_block) +
                              ": branch side " + std::to_string(branch_side) + " does not match main side " +
                              std::to_string(main_side) + " (block " + std::to_string(p.source_block + 1) +
                              " must downsample)");
        }
    }
}

std::vector<BlockSpec> ModelConfig::blocks() const {
    std::vector<BlockSpec> out;
    for (std::size_t b = 1; b <= num_blocks; ++b) {
        BlockSpec s;
        s.index = b;
        s.filters = filter_schedule.at(b - 1);
        s.kind = b + 2 > num_blocks ? BlockKind::dwsc : BlockKind::standard_conv;
        s.convs_per_block = s.kind == BlockKind::dwsc ? 1 : convs_per_block;
        s.downsample = b <= downsample_blocks;
        out.push_back(s);
    }
    return out;
}

namespace {

std::string pcb_name(const PcbSpec &p) {
    return "pcb" + std::to_string(p.source_block) + "_" + std::to_string(p.merge_before_block);
}

const PcbSpec *pcb_merging_at(const ModelConfig &cfg, std::size_t block) {
    for (const auto &p : cfg.pcbs) {
        if (p.merge_before_block == block) {
            return &p;
        }
    }
    return nullptr;
}

std::size_t pcb_out_channels(const ModelConfig &cfg, const PcbSpec &p) {
    return p.pre_pool_filters ? *p.pre_pool_filters : cfg.filter_schedule.at(p.source_block - 1);
}

std::size_t block_in_channels(const ModelConfig &cfg, std::size_t block) {
    std::size_t c = block == 1 ? cfg.input_channels : cfg.filter_schedule.at(block - 2);
    if (const PcbSpec *p = pcb_merging_at(cfg, block)) {
        c += pcb_out_channels(cfg, *p);
    }
    return c;
}

}  // namespace

ParamTable count_params(const ModelConfig &cfg) {
    cfg.validate();
    ParamTable t;
    auto add = [&](std::string layer, std::string kind, std::size_t n) {
        t.rows.push_back({std::move(layer), std::move(kind), n});
        t.total += n;
    };
    auto add_conv_unit = [&](const std::string &name, std::size_t f0, std::size_t f1) {
        add(name, "conv", (3 * 3 * f0 + 1) * f1);
        add(name + "/bn", "batchnorm", 2 * f1);
    };
    for (const BlockSpec &b : cfg.blocks()) {
        const std::string prefix = "block" + std::to_string(b.index);
        const std::size_t in_c = block_in_channels(cfg, b.index);
        if (b.kind == BlockKind::dwsc) {
            add(prefix + "/dwsc/depthwise", "depthwise", 10 * in_c);
            add(prefix + "/dwsc/pointwise", "pointwise", (in_c + 1) * b.filters);
            add(prefix + "/dwsc/bn", "batchnorm", 2 * b.filters);
        } else {
            for (std::size_t k = 1; k <= b.convs_per_block; ++k) {
                add_conv_unit(prefix + "/conv" + std::to_string(k), k == 1 ? in_c : b.filters, b.filters);
            }
        }
        for (const PcbSpec &p : cfg.pcbs) {
            if (p.source_block == b.index && p.pre_pool_filters) {
                add_conv_unit(pcb_name(p) + "/conv", b.filters, *p.pre_pool_filters);
            }
        }
    }
    add("dense", "dense", (cfg.filter_schedule.back() + 1) * cfg.num_classes);
    return t;
}

std::vector<std::string> Graph::layer_names() const {
    std::vector<std::string> names;
    for (const auto &b : blocks) {
        names.push_back("block" + std::to_string(b.spec.index));
        for (const auto &u : b.units) {
            names.push_back(u.name);
        }
    }
    for (const auto &p : pcbs) {
        if (p.conv) {
            names.push_back(p.conv->name);
        }
    }
    return names;
}

bool Graph::has_layer(std::string_view name) const {
    const auto names = layer_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

namespace {

template <typename T>
Unit make_conv_unit(ParamStore<T> &ps, const std::string &name, std::size_t in_c, std::size_t out_c) {
    Unit u;
    u.kind = UnitKind::conv;
    u.name = name;
    u.in_c = in_c;
    u.out_c = out_c;
    u.kernel = ps.add(name + "/kernel", {3, 3, in_c, out_c}, true);
    u.bias = ps.add(name + "/bias", {out_c}, true);
    u.gamma = ps.add(name + "/bn/gamma", {out_c}, true, T(1));
    u.beta = ps.add(name + "/bn/beta", {out_c}, true);
    u.moving_mean = ps.add(name + "/bn/moving_mean", {out_c}, false);
    u.moving_var = ps.add(name + "/bn/moving_variance", {out_c}, false, T(1));
    return u;
}

template <typename T>
Unit make_dwsc_unit(ParamStore<T> &ps, const std::string &name, std::size_t in_c, std::size_t out_c) {
    Unit u;
    u.kind = UnitKind::dwsc;
    u.name = name;
    u.in_c = in_c;
    u.out_c = out_c;
    u.dw_kernel = ps.add(name + "/depthwise_kernel", {3, 3, in_c, 1}, true);
    u.dw_bias = ps.add(name + "/depthwise_bias", {in_c}, true);
    u.pw_kernel = ps.add(name + "/pointwise_kernel", {1, 1, in_c, out_c}, true);
    u.pw_bias = ps.add(name + "/pointwise_bias", {out_c}, true);
    u.gamma = ps.add(name + "/bn/gamma", {out_c}, true, T(1));
    u.beta = ps.add(name + "/bn/beta", {out_c}, true);
    u.moving_mean = ps.add(name + "/bn/moving_mean", {out_c}, false);
    u.moving_var = ps.add(name + "/bn/moving_variance", {out_c}, false, T(1));
    return u;
}

template <typename T>
void fill_uniform(std::vector<T> &v, double limit, Rng &rng) {
    for (auto &x : v) {
        x = static_cast<T>(rng.uniform(-limit, limit));
    }
}

}  // namespace

template <typename T>
Model<T> build_model(const ModelConfig &cfg, std::uint64_t seed) {
    cfg.validate();
    Model<T> m;
    Graph &g = m.graph;
    ParamStore<T> &ps = m.params;
    g.config = cfg;
    for (const BlockSpec &spec : cfg.blocks()) {
        BlockNode node;
        node.spec = spec;
        node.in_c = block_in_channels(cfg, spec.index);
        const std::string prefix = "block" + std::to_string(spec.index);
        if (spec.kind == BlockKind::dwsc) {
            node.units.push_back(make_dwsc_unit(ps, prefix + "/dwsc", node.in_c, spec.filters));
        } else {
            for (std::size_t k = 1; k <= spec.convs_per_block; ++k) {
                node.units.push_back(
                    make_conv_unit(ps, prefix + "/conv" + std::to_string(k), k == 1 ? node.in_c : spec.filters, spec.filters));
            }
        }
        g.blocks.push_back(std::move(node));
        for (const PcbSpec &p : cfg.pcbs) {
            if (p.source_block != spec.index) {
                continue;
            }
            PcbNode pn;
            pn.spec = p;
            pn.name = pcb_name(p);
            pn.in_c = spec.filters;
            pn.out_c = pcb_out_channels(cfg, p);
            if (p.pre_pool_filters) {
                pn.conv = make_conv_unit(ps, pn.name + "/conv", spec.filters, *p.pre_pool_filters);
            }
            g.pcbs.push_back(std::move(pn));
        }
    }
    g.gap_channels = cfg.filter_schedule.back();
    g.dense_kernel = ps.add("dense/kernel", {g.gap_channels, cfg.num_classes}, true);
    g.dense_bias = ps.add("dense/bias", {cfg.num_classes}, true);

    Rng rng(seed);
    for (auto &e : ps.entries()) {
        const std::string &n = e.name;
        auto ends_with = [&](std::string_view suffix) { return n.size() >= suffix.size() && n.ends_with(suffix); };
        if ((ends_with("/kernel") && n != "dense/kernel") || ends_with("pointwise_kernel")) {
            // (kh, kw, in_c, out_c): fan-in = kh * kw * in_c
            const double fan_in = static_cast<double>(e.dims[0] * e.dims[1] * e.dims[2]);
            fill_uniform(e.value, std::sqrt(6.0 / fan_in), rng);
        } else if (ends_with("depthwise_kernel")) {
            fill_uniform(e.value, std::sqrt(6.0 / 9.0), rng);
        } else if (n == "dense/kernel") {
            fill_uniform(e.value, std::sqrt(3.0 / static_cast<double>(e.dims[0])), rng);
        }
    }
    return m;
}

template <typename T>
const BasicTensor<T> &ForwardCache<T>::activation(const Graph &g, std::string_view layer) const {
    for (std::size_t b = 0; b < g.blocks.size(); ++b) {
        const auto &node = g.blocks[b];
        if (b >= blocks.size()) {
            break;
        }
        if (layer == "block" + std::to_string(node.spec.index)) {
            return blocks[b].units.back().out;
        }
        for (std::size_t u = 0; u < node.units.size(); ++u) {
            if (node.units[u].name == layer) {
                return blocks[b].units[u].out;
            }
        }
    }
    for (std::size_t p = 0; p < g.pcbs.size() && p < pcbs.size(); ++p) {
        if (g.pcbs[p].conv && g.pcbs[p].conv->name == layer && pcbs[p].conv) {
            return pcbs[p].conv->out;
        }
    }
    throw std::out_of_range("no cached activation for layer '" + std::string(layer) + "'");
}

namespace {

template <typename T>
BasicTensor<T> run_unit(const Unit &u, ParamStore<T> &ps, const BasicTensor<T> &x, Mode mode, const BatchNormSettings &bn,
                        UnitCache<T> *c) {
    BasicTensor<T> z;
    if (u.kind == UnitKind::conv) {
        z = conv2d_forward<T>(x, ps.value(u.kernel), ps.value(u.bias), u.conv_geometry());
    } else {
        BasicTensor<T> mid = depthwise_forward<T>(x, ps.value(u.dw_kernel), ps.value(u.dw_bias));
        z = conv2d_forward<T>(mid, ps.value(u.pw_kernel), ps.value(u.pw_bias), ConvGeometry{1, u.in_c, u.out_c, 1, Padding::same});
        if (c != nullptr) {
            c->mid = std::move(mid);
        }
    }
    BasicTensor<T> y = batchnorm_forward<T>(z, ps.value(u.gamma), ps.value(u.beta), ps.mutable_value(u.moving_mean),
                                            ps.mutable_value(u.moving_var), mode, bn, c != nullptr ? &c->bn : nullptr);
    BasicTensor<T> out = relu_forward(y);
    if (c != nullptr) {
        c->input = x;
        c->out = out;
    }
    return out;
}

template <typename T>
BasicTensor<T> unit_backward(const Unit &u, ParamStore<T> &ps, const UnitCache<T> &c, const BasicTensor<T> &grad_out) {
    // out > 0 exactly where the pre-activation is > 0
    const BasicTensor<T> g = relu_backward(c.out, grad_out);
    BatchNormGrads<T> bn = batchnorm_backward<T>(c.bn, ps.value(u.gamma), g);
    ps.accumulate_grad(u.gamma, bn.grad_gamma);
    ps.accumulate_grad(u.beta, bn.grad_beta);
    if (u.kind == UnitKind::conv) {
        ConvGrads<T> cg = conv2d_backward<T>(c.input, ps.value(u.kernel), u.conv_geometry(), bn.grad_x);
        ps.accumulate_grad(u.kernel, cg.grad_w);
        ps.accumulate_grad(u.bias, cg.grad_b);
        return std::move(cg.grad_x);
    }
    ConvGrads<T> pw = conv2d_backward<T>(c.mid, ps.value(u.pw_kernel), ConvGeometry{1, u.in_c, u.out_c, 1, Padding::same}, bn.grad_x);
    ps.accumulate_grad(u.pw_kernel, pw.grad_w);
    ps.accumulate_grad(u.pw_bias, pw.grad_b);
    ConvGrads<T> dw = depthwise_backward<T>(c.input, ps.value(u.dw_kernel), pw.grad_x);
    ps.accumulate_grad(u.dw_kernel, dw.grad_w);
    ps.accumulate_grad(u.dw_bias, dw.grad_b);
    return std::move(dw.grad_x);
}

template <typename T>
void add_into(std::optional<BasicTensor<T>> &acc, const BasicTensor<T> &g) {
    if (!acc) {
        acc = g;
        return;
    }
    if (acc->shape() != g.shape()) {
        throw ShapeError("gradient accumulation shape mismatch " + to_string(acc->shape()) + " vs " + to_string(g.shape()));
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
        (*acc)[i] += g[i];
    }
}

constexpr PoolGeometry kBlockPool{2, 2, Padding::same};

}  // namespace

template <typename T>
BasicTensor<T> forward(const Graph &g, ParamStore<T> &params, const BasicTensor<T> &x, Mode mode, std::type_identity_t<ForwardCache<T>> *cache) {
    const ModelConfig &cfg = g.config;
    const Shape &s = x.shape();
    if (s.h != cfg.input_size || s.w != cfg.input_size || s.c != cfg.input_channels) {
        throw ShapeError("model input " + to_string(s) + " expected (n," + std::to_string(cfg.input_size) + "," +
                         std::to_string(cfg.input_size) + "," + std::to_string(cfg.input_channels) + ")");
    }
    if (cache != nullptr) {
        *cache = ForwardCache<T>{};
        cache->mode = mode;
        cache->blocks.resize(g.blocks.size());
        cache->pcbs.resize(g.pcbs.size());
    }
    // Branch outputs waiting for their merge point, indexed by merge block.
    std::vector<std::optional<BasicTensor<T>>> pending(g.blocks.size() + 2);
    BasicTensor<T> h = x;
    for (std::size_t b = 0; b < g.blocks.size(); ++b) {
        const BlockNode &node = g.blocks[b];
        const std::size_t index = node.spec.index;
        BlockCache<T> *bc = cache != nullptr ? &cache->blocks[b] : nullptr;
        if (pending[index]) {
            h = concat_channels(h, *pending[index]);
            pending[index].reset();
        }
        if (bc != nullptr) {
            bc->units.resize(node.units.size());
        }
        for (std::size_t u = 0; u < node.units.size(); ++u) {
            h = run_unit(node.units[u], params, h, mode, cfg.batchnorm, bc != nullptr ? &bc->units[u] : nullptr);
        }
        if (bc != nullptr) {
            bc->tap_shape = h.shape();
        }
        if (node.spec.downsample) {
            MaxPoolResult<T> mp = maxpool_forward(h, kBlockPool);
            h = std::move(mp.out);
            if (bc != nullptr) {
                bc->pool_argmax = std::move(mp.argmax);
                bc->pooled = true;
            }
        }
        for (std::size_t p = 0; p < g.pcbs.size(); ++p) {
            const PcbNode &pn = g.pcbs[p];
            if (pn.spec.source_block != index) {
                continue;
            }
            PcbCache<T> *pc = cache != nullptr ? &cache->pcbs[p] : nullptr;
            if (pc != nullptr) {
                pc->source_shape = h.shape();
                if (pn.conv) {
                    pc->conv.emplace();
                }
            }
            BasicTensor<T> branch = h;
            const bool conv_first = cfg.pcb_order == PcbOrder::conv_then_pool;
            if (pn.conv && conv_first) {
                branch = run_unit(*pn.conv, params, branch, mode, cfg.batchnorm, pc != nullptr ? &*pc->conv : nullptr);
            }
            if (pc != nullptr) {
                pc->pool_input_shape = branch.shape();
            }
            Avg2MaxResult<T> a2m = avg2max_forward(branch);
            branch = std::move(a2m.out);
            if (pc != nullptr) {
                pc->a2m_argmax = std::move(a2m.argmax);
            }
            if (pn.conv && !conv_first) {
                branch = run_unit(*pn.conv, params, branch, mode, cfg.batchnorm, pc != nullptr ? &*pc->conv : nullptr);
            }
            pending[pn.spec.merge_before_block] = std::move(branch);
        }
    }
    BasicTensor<T> pooled = global_avg_pool(h);
    BasicTensor<T> logits = dense_forward<T>(pooled, params.value(g.dense_kernel), params.value(g.dense_bias), g.gap_channels,
                                             cfg.num_classes);
    if (cache != nullptr) {
        cache->gap_input = std::move(h);
        cache->gap_output = std::move(pooled);
    }
    return logits;
}

template <typename T>
std::optional<BasicTensor<T>> backward(const Graph &g, ParamStore<T> &params, ForwardCache<T> &cache,
                                       const BasicTensor<T> &grad_logits, std::string_view capture) {
    if (cache.consumed) {
        throw std::logic_error("backward: forward cache already consumed");
    }
    if (cache.blocks.size() != g.blocks.size()) {
        throw std::logic_error("backward: cache does not belong to this graph");
    }
    if (!capture.empty() && !g.has_layer(capture)) {
        throw std::out_of_range("backward: unknown capture layer '" + std::string(capture) + "'");
    }
    cache.consumed = true;
    const ModelConfig &cfg = g.config;
    std::optional<BasicTensor<T>> captured;

    DenseGrads<T> dg = dense_backward<T>(cache.gap_output, params.value(g.dense_kernel), g.gap_channels, cfg.num_classes, grad_logits);
    params.accumulate_grad(g.dense_kernel, dg.grad_w);
    params.accumulate_grad(g.dense_bias, dg.grad_b);

    // Gradient with respect to each block's output (after pooling), 1-based.
    std::vector<std::optional<BasicTensor<T>>> grad_out(g.blocks.size() + 1);
    grad_out[g.blocks.size()] = global_avg_pool_backward(cache.gap_input.shape(), dg.grad_x);

    for (std::size_t b = g.blocks.size(); b-- > 0;) {
        const BlockNode &node = g.blocks[b];
        BlockCache<T> &bc = cache.blocks[b];
        const std::size_t index = node.spec.index;
        BasicTensor<T> gh = std::move(*grad_out[index]);
        if (bc.pooled) {
            gh = maxpool_backward(bc.tap_shape, bc.pool_argmax, gh);
        }
        for (std::size_t u = node.units.size(); u-- > 0;) {
            if (!capture.empty() && (capture == node.units[u].name ||
                                     (u + 1 == node.units.size() && capture == "block" + std::to_string(index)))) {
                captured = gh;
            }
            gh = unit_backward(node.units[u], params, bc.units[u], gh);
        }
        const PcbSpec *merging = nullptr;
        std::size_t pcb_slot = 0;
        for (std::size_t p = 0; p < g.pcbs.size(); ++p) {
            if (g.pcbs[p].spec.merge_before_block == index) {
                merging = &g.pcbs[p].spec;
                pcb_slot = p;
            }
        }
        if (merging != nullptr) {
            const PcbNode &pn = g.pcbs[pcb_slot];
            PcbCache<T> &pc = cache.pcbs[pcb_slot];
            const std::size_t main_c = gh.shape().c - pn.out_c;
            BasicTensor<T> g_main = slice_channels(gh, 0, main_c);
            BasicTensor<T> g_branch = slice_channels(gh, main_c, gh.shape().c);
            const bool conv_first = cfg.pcb_order == PcbOrder::conv_then_pool;
            if (pn.conv && !conv_first) {
                if (capture == pn.conv->name) {
                    captured = g_branch;
                }
                g_branch = unit_backward(*pn.conv, params, *pc.conv, g_branch);
            }
            g_branch = avg2max_backward(pc.pool_input_shape, pc.a2m_argmax, g_branch);
            if (pn.conv && conv_first) {
                if (capture == pn.conv->name) {
                    captured = g_branch;
                }
                g_branch = unit_backward(*pn.conv, params, *pc.conv, g_branch);
            }
            add_into(grad_out[pn.spec.source_block], g_branch);
            if (index > 1) {
                add_into(grad_out[index - 1], g_main);
            }
        } else if (index > 1) {
            add_into(grad_out[index - 1], gh);
        }
    }
    return captured;
}

#define FIBNET_INSTANTIATE_MODEL(T)                                                                                        \
    template Model<T> build_model(const ModelConfig &, std::uint64_t);                                                     \
    template struct ForwardCache<T>;                                                                                       \
    template BasicTensor<T> forward(const Graph &, ParamStore<T> &, const BasicTensor<T> &, Mode, std::type_identity_t<ForwardCache<T>> *);      \
    template std::optional<BasicTensor<T>> backward(const Graph &, ParamStore<T> &, ForwardCache<T> &,                     \
                                                    const BasicTensor<T> &, std::string_view);

FIBNET_INSTANTIATE_MODEL(float)
FIBNET_INSTANTIATE_MODEL(double)

}  // namespace fibnet
