#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "emoloc/episode.hpp"
#include "emoloc/graph.hpp"

namespace emoloc::dcin {

enum class Activation { kRelu, kSigmoid, kIdentity };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

struct DcinConfig {
    int dim = 16;             // feature dimension d
    int classes = 6;          // emotion classes N
    int layers = 3;           // stacked layers L
    double margin = 0.5;      // context-sensitive margin
    Activation activation = Activation::kRelu;
    int kernel_width = 3;     // temporal kernel k (odd)

    void validate() const;    // throws ConfigError
};

// Per-layer parameters: temporal conv (w1,b1), dependency-reasoning
// projection (w2), context gate (w3,b3).
struct LayerParams {
    Tensor conv_w;    // d x k x d
    Tensor conv_b;    // d
    Tensor reason_w;  // d x d
    Tensor gate_w;    // d x 2d
    Tensor gate_b;    // d
};

struct ClassifierParams {
    Tensor video_w;     // N x d
    Tensor video_b;     // N
    Tensor subtitle_w;  // N x d
    Tensor subtitle_b;  // N
};

struct Model {
    DcinConfig config;
    std::vector<LayerParams> layers;
    ClassifierParams classifier;

    // Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights, zero biases.
    static Model init(const DcinConfig& cfg, uint64_t seed);

    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
    std::vector<std::pair<std::string, Tensor*>> named_parameters();
};

// Graph-bound parameter handles, aligned with Model::parameters().
struct LayerVars {
    ad::Value conv_w, conv_b, reason_w, gate_w, gate_b;
};
struct ClassifierVars {
    ad::Value video_w, video_b, subtitle_w, subtitle_b;
};
struct ModelVars {
    DcinConfig config;
    std::vector<LayerVars> layers;
    ClassifierVars classifier;
    std::vector<ad::Value> flat;
};

ModelVars bind_model(const Model& model, ad::Graph& g);
// Binds pre-made leaves (Model::parameters() order); used by gradcheck.
ModelVars bind_model(const DcinConfig& cfg, const std::vector<ad::Value>& leaves);

// ---- layer operations ---------------------------------------------------

// Halves the temporal dimension: activation(conv1d_stride2(c_prev) + bias).
ad::Value temporal_context_conv(ad::Value c_prev, const LayerVars& layer, Activation act);

// Residual non-local reasoning over context nodes (dot-product attention).
struct DependencyReasoning {
    ad::Value enhanced;   // T_l x d
    ad::Value attention;  // T_l x T_l, rows sum to 1
};
DependencyReasoning context_dependency_reasoning(ad::Value context, ad::Value reason_w);

struct GatedIntegration {
    ad::Value v_next;     // T x d
    ad::Value gates;      // T x d, strictly in (0,1)
    ad::Value aggregated; // T x d mixed context rows m_i
    ad::Value attention;  // T x T_l
};
GatedIntegration gated_context_integration(ad::Value v_prev, ad::Value subtitle,
                                           ad::Value c_tilde, const LayerVars& layer);

enum class Head { kVideo, kSubtitle };
ad::Value classify(ad::Value features, Head head, const ClassifierVars& cls);

// Hinge sum_i max(0, margin - ||pL_i - p0_i||).
ad::Value context_sensitive_loss(ad::Value p0, ad::Value pL, double margin);

// ---- full forward ---------------------------------------------------------

// Graph handles from one forward pass. The input is right-padded with zero
// rows to a multiple of 2^L; padded positions never enter any softmax and
// are stripped from every exposed tensor.
struct Forward {
    int t = 0;  // real (unpadded) length
    ad::Value v0;                           // T x d
    ad::Value vL;                           // T x d
    ad::Value subtitle;                     // T x d
    std::vector<ad::Value> contexts;        // layer l: ceil(T/2^l) x d
    std::vector<ad::Value> gates;           // T x d per layer
    std::vector<ad::Value> aggregated;      // T x d per layer
    std::vector<ad::Value> attn_reason;     // valid_l x valid_l per layer
    std::vector<ad::Value> attn_integrate;  // T x valid_l per layer
};

Forward forward(ad::Graph& g, const ModelVars& vars, const Episode& episode);

// Plain-value snapshot of a forward pass.
struct Output {
    Tensor v0, vL;
    std::vector<Tensor> contexts;
    std::vector<Tensor> gate_trace;
};
Output run(const Model& model, const Episode& episode);

// Mean over segments (and episodes) of ||P(E|v_i^L) - P(E|v_i^0)||.
double mean_context_distance(const Model& model, const std::vector<Episode>& episodes);

int padded_length(int t, int layers);

}  // namespace emoloc::dcin
