#include "emoloc/dcin.hpp"

#include <cmath>

#include "emoloc/error.hpp"
#include "emoloc/rng.hpp"

namespace emoloc::dcin {

using ad::Value;

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::kRelu;
    if (name == "sigmoid") return Activation::kSigmoid;
    if (name == "identity") return Activation::kIdentity;
    throw ConfigError("unknown activation '" + name + "' (expected relu|sigmoid|identity)");
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::kRelu: return "relu";
        case Activation::kSigmoid: return "sigmoid";
        case Activation::kIdentity: return "identity";
    }
    return "relu";
}

void DcinConfig::validate() const {
    if (dim < 1) throw ConfigError("dim must be >= 1");
    if (classes < 2) throw ConfigError("classes must be >= 2");
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (margin <= 0.0) throw ConfigError("margin must be > 0");
    if (kernel_width < 1 || kernel_width % 2 == 0) {
        throw ConfigError("kernel width must be odd and positive, got " +
                          std::to_string(kernel_width));
    }
}

// ---- parameters ----------------------------------------------------------

namespace {

Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng, double gain = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    const double bound = gain / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.values) v = rng.uniform(-bound, bound);
    return t;
}

// The classifier heads start an order of magnitude smaller than the
// context layers so that the initial class distributions are near-uniform
// at the feature magnitudes the model is trained on; retrieval then starts
// from neutral couplings instead of amplifying arbitrary initial ones.
constexpr double kClassifierInitGain = 0.1;

}  // namespace

Model Model::init(const DcinConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    Model m;
    m.config = cfg;
    const int d = cfg.dim, n = cfg.classes, k = cfg.kernel_width;
    for (int l = 0; l < cfg.layers; ++l) {
        LayerParams p;
        p.conv_w = uniform_init({d, k, d}, k * d, rng);
        p.conv_b = Tensor::zeros({d});
        p.reason_w = uniform_init({d, d}, d, rng);
        p.gate_w = uniform_init({d, 2 * d}, 2 * d, rng);
        p.gate_b = Tensor::zeros({d});
        m.layers.push_back(std::move(p));
    }
    m.classifier.video_w = uniform_init({n, d}, d, rng, kClassifierInitGain);
    m.classifier.video_b = Tensor::zeros({n});
    m.classifier.subtitle_w = uniform_init({n, d}, d, rng, kClassifierInitGain);
    m.classifier.subtitle_b = Tensor::zeros({n});
    return m;
}

std::vector<Tensor*> Model::parameters() {
    std::vector<Tensor*> out;
    for (LayerParams& p : layers) {
        out.push_back(&p.conv_w);
        out.push_back(&p.conv_b);
        out.push_back(&p.reason_w);
        out.push_back(&p.gate_w);
        out.push_back(&p.gate_b);
    }
    out.push_back(&classifier.video_w);
    out.push_back(&classifier.video_b);
    out.push_back(&classifier.subtitle_w);
    out.push_back(&classifier.subtitle_b);
    return out;
}

std::vector<const Tensor*> Model::parameters() const {
    auto mutable_params = const_cast<Model*>(this)->parameters();
    return std::vector<const Tensor*>(mutable_params.begin(), mutable_params.end());
}

std::vector<std::pair<std::string, Tensor*>> Model::named_parameters() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (size_t l = 0; l < layers.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        out.emplace_back(prefix + "conv_w", &layers[l].conv_w);
        out.emplace_back(prefix + "conv_b", &layers[l].conv_b);
        out.emplace_back(prefix + "reason_w", &layers[l].reason_w);
        out.emplace_back(prefix + "gate_w", &layers[l].gate_w);
        out.emplace_back(prefix + "gate_b", &layers[l].gate_b);
    }
    out.emplace_back("classifier.video_w", &classifier.video_w);
    out.emplace_back("classifier.video_b", &classifier.video_b);
    out.emplace_back("classifier.subtitle_w", &classifier.subtitle_w);
    out.emplace_back("classifier.subtitle_b", &classifier.subtitle_b);
    return out;
}

ModelVars bind_model(const Model& model, ad::Graph& g) {
    std::vector<ad::Value> leaves;
    for (const Tensor* p : model.parameters()) leaves.push_back(g.leaf(*p));
    return bind_model(model.config, leaves);
}

ModelVars bind_model(const DcinConfig& cfg, const std::vector<ad::Value>& leaves) {
    const size_t expected = static_cast<size_t>(cfg.layers) * 5 + 4;
    if (leaves.size() != expected) {
        throw ContractError("bind: expected " + std::to_string(expected) + " parameter nodes, got " +
                            std::to_string(leaves.size()));
    }
    ModelVars vars;
    vars.config = cfg;
    vars.flat = leaves;
    size_t i = 0;
    for (int l = 0; l < cfg.layers; ++l) {
        LayerVars lv;
        lv.conv_w = leaves[i++];
        lv.conv_b = leaves[i++];
        lv.reason_w = leaves[i++];
        lv.gate_w = leaves[i++];
        lv.gate_b = leaves[i++];
        vars.layers.push_back(lv);
    }
    vars.classifier.video_w = leaves[i++];
    vars.classifier.video_b = leaves[i++];
    vars.classifier.subtitle_w = leaves[i++];
    vars.classifier.subtitle_b = leaves[i++];
    return vars;
}

// ---- layer operations ------------------------------------------------------

namespace {

Value apply_activation(Value x, Activation act) {
    switch (act) {
        case Activation::kRelu: return ad::relu(x);
        case Activation::kSigmoid: return ad::sigmoid(x);
        case Activation::kIdentity: return x;
    }
    return x;
}

}  // namespace

Value temporal_context_conv(Value c_prev, const LayerVars& layer, Activation act) {
    return apply_activation(ad::conv1d_stride2(c_prev, layer.conv_w, layer.conv_b), act);
}

DependencyReasoning context_dependency_reasoning(Value context, Value reason_w) {
    // alpha_ij = softmax_j(c_i . c_j); out_i = c_i + sum_j alpha_ij (W2 c_j)
    DependencyReasoning out;
    out.attention = ad::softmax_rows(ad::matmul_nt(context, context));
    Value projected = ad::matmul_nt(context, reason_w);
    out.enhanced = ad::add(context, ad::matmul(out.attention, projected));
    return out;
}

GatedIntegration gated_context_integration(Value v_prev, Value subtitle, Value c_tilde,
                                           const LayerVars& layer) {
    check_same_shape("gated_context_integration", v_prev.val(), subtitle.val());
    if (c_tilde.val().cols() != v_prev.val().cols()) {
        throw DimensionError("gated_context_integration: context " + c_tilde.val().shape_str() +
                             " does not match segments " + v_prev.val().shape_str());
    }
    GatedIntegration out;
    Value joint = ad::add(v_prev, subtitle);
    out.attention = ad::softmax_rows(ad::matmul_nt(joint, c_tilde));
    out.aggregated = ad::matmul(out.attention, c_tilde);
    out.gates =
        ad::sigmoid(ad::affine(ad::concat_last_dim(v_prev, out.aggregated), layer.gate_w,
                               layer.gate_b));
    Value keep = ad::mul(ad::add_scalar(ad::scale(out.gates, -1.0), 1.0), v_prev);
    out.v_next = ad::add(keep, ad::mul(out.gates, out.aggregated));
    return out;
}

Value classify(Value features, Head head, const ClassifierVars& cls) {
    const bool video = head == Head::kVideo;
    return ad::softmax_rows(ad::affine(features, video ? cls.video_w : cls.subtitle_w,
                                       video ? cls.video_b : cls.subtitle_b));
}

Value context_sensitive_loss(Value p0, Value pL, double margin) {
    check_same_shape("context_sensitive_loss", p0.val(), pL.val());
    Value dist = ad::l2_norm_rows(ad::sub(pL, p0));
    return ad::sum_all(ad::relu(ad::add_scalar(ad::scale(dist, -1.0), margin)));
}

// ---- full forward -----------------------------------------------------------

int padded_length(int t, int layers) {
    const int block = 1 << layers;
    return ((t + block - 1) / block) * block;
}

Forward forward(ad::Graph& g, const ModelVars& vars, const Episode& episode) {
    const int t = episode.length();
    if (t == 0) throw PreconditionError("dcin_forward: empty episode " + episode.id);
    const int d = vars.config.dim;
    if (episode.dim() != d) {
        throw DimensionError("dcin_forward: episode dim " + std::to_string(episode.dim()) +
                             " does not match model dim " + std::to_string(d));
    }
    const int layers = vars.config.layers;
    const int t_pad = padded_length(t, layers);

    Tensor v_pad = Tensor::zeros({t_pad, d});
    Tensor s_pad = Tensor::zeros({t_pad, d});
    for (int i = 0; i < t; ++i) {
        for (int j = 0; j < d; ++j) {
            v_pad.at(i, j) = episode.video.at(i, j);
            s_pad.at(i, j) = episode.subtitle.at(i, j);
        }
    }

    Forward fwd;
    fwd.t = t;
    Value v_leaf = g.leaf(std::move(v_pad));
    Value s_leaf = g.leaf(std::move(s_pad));
    fwd.v0 = t_pad == t ? v_leaf : ad::slice_rows(v_leaf, 0, t);
    fwd.subtitle = t_pad == t ? s_leaf : ad::slice_rows(s_leaf, 0, t);

    Value context = v_leaf;  // coarse stream, full padded length
    Value v_cur = v_leaf;    // fine stream, full padded length
    int valid = t;           // positions of the coarse stream derived from real data
    for (int l = 0; l < layers; ++l) {
        context = temporal_context_conv(context, vars.layers[static_cast<size_t>(l)],
                                        vars.config.activation);
        valid = (valid + 1) / 2;
        // Softmax normalisation must not see padded context positions, so
        // attention runs on the valid prefix only.
        Value context_valid =
            context.val().shape[0] == valid ? context : ad::slice_rows(context, 0, valid);
        DependencyReasoning dr = context_dependency_reasoning(
            context_valid, vars.layers[static_cast<size_t>(l)].reason_w);
        GatedIntegration gi = gated_context_integration(
            v_cur, s_leaf, dr.enhanced, vars.layers[static_cast<size_t>(l)]);
        v_cur = gi.v_next;

        fwd.contexts.push_back(context_valid);
        fwd.attn_reason.push_back(dr.attention);
        fwd.attn_integrate.push_back(t_pad == t ? gi.attention
                                                : ad::slice_rows(gi.attention, 0, t));
        fwd.gates.push_back(t_pad == t ? gi.gates : ad::slice_rows(gi.gates, 0, t));
        fwd.aggregated.push_back(t_pad == t ? gi.aggregated
                                            : ad::slice_rows(gi.aggregated, 0, t));
    }
    fwd.vL = t_pad == t ? v_cur : ad::slice_rows(v_cur, 0, t);
    return fwd;
}

Output run(const Model& model, const Episode& episode) {
    ad::Graph g;
    ModelVars vars = bind_model(model, g);
    Forward fwd = forward(g, vars, episode);
    Output out;
    out.v0 = fwd.v0.val();
    out.vL = fwd.vL.val();
    for (const Value& c : fwd.contexts) out.contexts.push_back(c.val());
    for (const Value& gate : fwd.gates) out.gate_trace.push_back(gate.val());
    return out;
}

double mean_context_distance(const Model& model, const std::vector<Episode>& episodes) {
    double sum = 0.0;
    int64_t count = 0;
    for (const Episode& ep : episodes) {
        ad::Graph g;
        ModelVars vars = bind_model(model, g);
        Forward fwd = forward(g, vars, ep);
        Value p0 = classify(fwd.v0, Head::kVideo, vars.classifier);
        Value pL = classify(fwd.vL, Head::kVideo, vars.classifier);
        Value dist = ad::l2_norm_rows(ad::sub(pL, p0));
        for (double v : dist.val().values) {
            sum += v;
            ++count;
        }
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

}  // namespace emoloc::dcin
