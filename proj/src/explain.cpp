#include "fibnet/explain.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace fibnet {

HeatMap gradcam_from(const Tensor &activation, const Tensor &grad) {
    const Shape s = activation.shape();
    if (grad.shape() != s || s.n != 1) {
        throw ShapeError("gradcam: activation " + to_string(s) + " and gradient " + to_string(grad.shape()) +
                         " must match with batch 1");
    }
    const std::size_t plane = s.h * s.w;
    std::vector<double> weights(s.c, 0.0);
    for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t k = 0; k < s.c; ++k) {
            weights[k] += grad[p * s.c + k];
        }
    }
    for (auto &w : weights) {
        w /= static_cast<double>(plane);
    }
    HeatMap m;
    m.height = s.h;
    m.width = s.w;
    m.values.assign(plane, 0.0f);
    double peak = 0.0;
    std::vector<double> raw(plane);
    for (std::size_t p = 0; p < plane; ++p) {
        double v = 0.0;
        for (std::size_t k = 0; k < s.c; ++k) {
            v += weights[k] * activation[p * s.c + k];
        }
        raw[p] = std::max(v, 0.0);
        peak = std::max(peak, raw[p]);
    }
    m.normalization_max = peak;
    if (peak > 0.0) {
        for (std::size_t p = 0; p < plane; ++p) {
            m.values[p] = static_cast<float>(raw[p] / peak);
        }
    }
    return m;
}

std::string default_gradcam_layer(const Graph &g) {
    std::size_t last = 1;
    for (const auto &b : g.blocks) {
        if (b.spec.kind == BlockKind::standard_conv) {
            last = b.spec.index;
        }
    }
    return "block" + std::to_string(last);
}

HeatMap gradcam(const Graph &g, ParamStore<float> &params, const Tensor &sample, std::size_t target_class, std::string_view layer_arg) {
    const std::string layer = layer_arg.empty() ? default_gradcam_layer(g) : std::string(layer_arg);
    if (!g.has_layer(layer)) {
        std::string names;
        for (const auto &n : g.layer_names()) {
            names += (names.empty() ? "" : ", ") + n;
        }
        throw std::invalid_argument("unknown layer '" + layer + "'; valid layers: " + names);
    }
    if (sample.shape().n != 1) {
        throw ShapeError("gradcam: expected a single sample, got " + to_string(sample.shape()));
    }
    if (target_class >= g.config.num_classes) {
        throw std::out_of_range("gradcam: class " + std::to_string(target_class) + " outside " +
                                std::to_string(g.config.num_classes) + " classes");
    }
    ForwardCache<float> cache;
    const Tensor logits = forward(g, params, sample, Mode::infer, &cache);
    const Tensor activation = cache.activation(g, layer);
    Tensor seed(logits.shape());
    seed[target_class] = 1.0f;
    params.zero_grad();
    const std::optional<Tensor> grad = backward(g, params, cache, seed, layer);
    params.zero_grad();
    HeatMap m = gradcam_from(activation, *grad);
    m.source_layer = layer;
    m.target_class = target_class;
    return m;
}

Image heatmap_image(const HeatMap &map) {
    Image img{map.width, map.height, 1, std::vector<std::uint8_t>(map.values.size())};
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(map.values[i], 0.0f, 1.0f) * 255.0f));
    }
    return img;
}

namespace {

// Piecewise-linear blue -> cyan -> yellow -> red ramp.
std::array<double, 3> ramp(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const double r = std::clamp(1.5 - std::abs(4.0 * t - 3.0), 0.0, 1.0);
    const double g = std::clamp(1.5 - std::abs(4.0 * t - 2.0), 0.0, 1.0);
    const double b = std::clamp(1.5 - std::abs(4.0 * t - 1.0), 0.0, 1.0);
    return {r, g, b};
}

}  // namespace

Image heatmap_overlay(const HeatMap &map, const Tensor &sample, double alpha) {
    const Shape s = sample.shape();
    if (s.n != 1 || s.c != 3) {
        throw ShapeError("heatmap_overlay: expected a (1, h, w, 3) sample, got " + to_string(s));
    }
    const Tensor grid(Shape{1, map.height, map.width, 1}, map.values);
    const Tensor up = resize_bilinear(grid, s.h, s.w);
    Image out{s.w, s.h, 3, std::vector<std::uint8_t>(s.h * s.w * 3)};
    for (std::size_t p = 0; p < s.h * s.w; ++p) {
        const auto colour = ramp(up[p]);
        for (std::size_t c = 0; c < 3; ++c) {
            const double v = (1.0 - alpha) * sample[p * 3 + c] + alpha * colour[c];
            out.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        }
    }
    return out;
}

void write_heatmap_sidecar(std::ostream &os, const HeatMap &map) {
    const nlohmann::json j{{"layer", map.source_layer},
                           {"class", map.target_class},
                           {"normalization_max", map.normalization_max},
                           {"height", map.height},
                           {"width", map.width}};
    os << j.dump(2) << '\n';
}

Image pool_preview(const Image &img) {
    const std::size_t c = img.channels == 2 || img.channels == 4 ? img.channels - 1 : img.channels;
    Tensor x(Shape{1, img.height, img.width, c});
    for (std::size_t p = 0; p < img.height * img.width; ++p) {
        for (std::size_t k = 0; k < c; ++k) {
            x[p * c + k] = static_cast<float>(img.pixels[p * img.channels + k]) / 255.0f;
        }
    }
    const Tensor y = avg2max_pool(x);
    const auto [lo, hi] = std::minmax_element(y.data().begin(), y.data().end());
    const float range = *hi - *lo;
    const Shape s = y.shape();
    Image out{s.w, s.h, c, std::vector<std::uint8_t>(y.size(), 0)};
    if (range > 0.0f) {
        for (std::size_t i = 0; i < y.size(); ++i) {
            out.pixels[i] = static_cast<std::uint8_t>(std::lround((*hi - y[i]) / range * 255.0f));
        }
    }
    return out;
}

double feature_entropy(std::span<const float> values, std::size_t bins) {
    if (bins < 2) {
        throw std::invalid_argument("feature_entropy: need at least 2 bins");
    }
    if (values.empty()) {
        return 0.0;
    }
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) {
        return 0.0;
    }
    std::vector<std::size_t> hist(bins, 0);
    const double range = hi - lo;
    const auto nb = static_cast<double>(bins);
    for (float v : values) {
        // divide last: an exact affine map of the inputs gives the same quotient
        const auto b = static_cast<std::size_t>((static_cast<double>(v) - lo) * nb / range);
        ++hist[std::min(b, bins - 1)];
    }
    double h = 0.0;
    const double n = static_cast<double>(values.size());
    for (std::size_t c : hist) {
        if (c > 0) {
            const double p = static_cast<double>(c) / n;
            h -= p * std::log2(p);
        }
    }
    return h;
}

namespace {

void require_comparable(const ModelConfig &a, const ModelConfig &b) {
    ModelConfig x = a;
    ModelConfig y = b;
    x.pcbs.clear();
    y.pcbs.clear();
    if (!(x == y)) {
        throw ConfigError("entropy_compare: models differ in more than their parallel concatenation blocks");
    }
}

}  // namespace

std::vector<EntropyRow> entropy_compare(Model<float> &with_pcb, Model<float> &without_pcb, const Tensor &samples, std::size_t bins) {
    require_comparable(with_pcb.graph.config, without_pcb.graph.config);
    std::vector<EntropyRow> rows;
    for (auto [model, label] : {std::pair<Model<float> *, const char *>{&with_pcb, "with_pcb"}, {&without_pcb, "without_pcb"}}) {
        ForwardCache<float> cache;
        (void)forward(model->graph, model->params, samples, Mode::infer, &cache);
        for (const auto &block : model->graph.blocks) {
            const std::string tap = "block" + std::to_string(block.spec.index);
            rows.push_back({tap, label, feature_entropy(cache.activation(model->graph, tap), bins), bins});
        }
        rows.push_back({"gap_input", label, feature_entropy(cache.gap_input, bins), bins});
    }
    return rows;
}

void write_entropy_csv(std::ostream &os, const std::vector<EntropyRow> &rows) {
    os << "tap,model,bits,bins\n";
    for (const auto &r : rows) {
        char bits[32];
        std::snprintf(bits, sizeof(bits), "%.6f", r.bits);
        os << r.tap << ',' << r.model << ',' << bits << ',' << r.bins << '\n';
    }
}

}  // namespace fibnet
