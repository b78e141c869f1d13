#pragma once

#include "fibnet/data.hpp"
#include "fibnet/model.hpp"

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace fibnet {

inline constexpr std::size_t kDefaultEntropyBins = 256;

struct HeatMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;  // row-major, in [0, 1]
    std::string source_layer;
    std::size_t target_class = 0;
    double normalization_max = 0.0;  // max of the map before scaling; 0 for an all-zero map

    [[nodiscard]] float at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

// ReLU(sum_k w_k A_k) with w_k the spatial mean of grad[..., k], scaled so
// the maximum is 1. Both tensors are (1, h, w, K).
HeatMap gradcam_from(const Tensor &activation, const Tensor &grad);

// Output of the last standard-conv block ("block5" in the 7-block network).
std::string default_gradcam_layer(const Graph &g);

// Grad-CAM for the target logit at a named layer tap (see
// Graph::layer_names); empty means default_gradcam_layer. Runs in infer
// mode. Unknown layers throw std::invalid_argument listing the valid names.
HeatMap gradcam(const Graph &g, ParamStore<float> &params, const Tensor &sample, std::size_t target_class,
                std::string_view layer = {});

// Raw map as an 8-bit grayscale image at layer resolution.
Image heatmap_image(const HeatMap &map);

// Map upsampled bilinearly to the sample size, coloured and alpha-blended
// over the sample.
Image heatmap_overlay(const HeatMap &map, const Tensor &sample, double alpha = 0.4);

void write_heatmap_sidecar(std::ostream &os, const HeatMap &map);

// Avg-2Max pooling of an image at its native size, per channel (alpha
// dropped), negated and min-max rescaled to 0..255 over the whole output, so
// edges come out bright. A constant input gives a constant (all-zero) output.
Image pool_preview(const Image &img);

// Shannon entropy in bits of a B-bin equal-width histogram over [min, max].
// Constant inputs give 0.
double feature_entropy(std::span<const float> values, std::size_t bins = kDefaultEntropyBins);
inline double feature_entropy(const Tensor &x, std::size_t bins = kDefaultEntropyBins) { return feature_entropy(x.data(), bins); }

struct EntropyRow {
    std::string tap;
    std::string model;
    double bits = 0.0;
    std::size_t bins = 0;
};

// Entropy at every block output and at the GAP input of both models, over
// the same samples. The two configs may differ only in their pcbs. This is a
// measurement; no ordering between the models is implied.
std::vector<EntropyRow> entropy_compare(Model<float> &with_pcb, Model<float> &without_pcb, const Tensor &samples,
                                        std::size_t bins = kDefaultEntropyBins);

void write_entropy_csv(std::ostream &os, const std::vector<EntropyRow> &rows);

}  // namespace fibnet
