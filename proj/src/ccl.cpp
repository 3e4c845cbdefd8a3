#include "emoloc/ccl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "emoloc/error.hpp"
#include "emoloc/rng.hpp"

namespace emoloc::ccl {

using ad::Value;

RetrievalMode mode_from_string(const std::string& name) {
    if (name == "mask") return RetrievalMode::kMask;
    if (name == "soft") return RetrievalMode::kSoft;
    throw ConfigError("unknown retrieval mode '" + name + "' (expected mask|soft)");
}

std::string to_string(RetrievalMode mode) {
    return mode == RetrievalMode::kMask ? "mask" : "soft";
}

void CclConfig::validate() const {
    if (relax_range < 0) throw ConfigError("relax range must be >= 0");
    if (index_weight < 0.0) throw ConfigError("index weight must be >= 0");
    if (temperature <= 0.0) throw ConfigError("temperature must be > 0");
    if (lambda_cs < 0.0 || lambda_cmc < 0.0 || lambda_vc < 0.0 || lambda_sc < 0.0) {
        throw ConfigError("loss weights must be >= 0");
    }
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

// ---- freeze context ------------------------------------------------------

int FreezeContext::index(int fresh) {
    if (!replay) {
        indices_.push_back(fresh);
        return fresh;
    }
    if (i_cursor_ >= indices_.size()) throw ContractError("freeze replay: index store exhausted");
    return indices_[i_cursor_++];
}

double FreezeContext::scalar(double fresh) {
    if (!replay) {
        scalars_.push_back(fresh);
        return fresh;
    }
    if (s_cursor_ >= scalars_.size()) throw ContractError("freeze replay: scalar store exhausted");
    return scalars_[s_cursor_++];
}

Tensor FreezeContext::tensor(const Tensor& fresh) {
    if (!replay) {
        tensors_.push_back(fresh);
        return fresh;
    }
    if (t_cursor_ >= tensors_.size()) throw ContractError("freeze replay: tensor store exhausted");
    return tensors_[t_cursor_++];
}

void FreezeContext::begin_replay() {
    replay = true;
    i_cursor_ = s_cursor_ = t_cursor_ = 0;
}

// ---- retrieval -------------------------------------------------------------

namespace {

int argmax_smallest(const std::vector<double>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i) {
        if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
    }
    return best;
}

Value index_row_leaf(ad::Graph& g, int begin, int count) {
    Tensor t = Tensor::zeros({1, count});
    for (int i = 0; i < count; ++i) t.values[static_cast<size_t>(i)] = begin + i;
    return g.leaf(std::move(t));
}

// Straight-through surrogate: value pinned to the hard index, gradient
// taken from the differentiable expectation.
Value pin_to_hard_index(Value expectation, int hard_index, FreezeContext* freeze) {
    double correction = static_cast<double>(hard_index) - expectation.scalar();
    if (freeze) correction = freeze->scalar(correction);
    return ad::add_scalar(expectation, correction);
}

}  // namespace

RetrievalResult retrieve_most_relevant(Value probs, Value features, int emotion,
                                       RetrievalMode mode, double temperature,
                                       FreezeContext* freeze) {
    ad::Graph& g = *probs.graph;
    const int t = probs.val().shape[0];
    const int classes = probs.val().cols();
    if (emotion < 0 || emotion >= classes) {
        throw PreconditionError("retrieve_most_relevant: emotion " + std::to_string(emotion) +
                                " out of range for " + std::to_string(classes) + " classes");
    }
    if (features.val().shape[0] != t) {
        throw DimensionError("retrieve_most_relevant: probs " + probs.val().shape_str() +
                             " vs features " + features.val().shape_str());
    }

    Tensor onehot = Tensor::zeros({classes, 1});
    onehot.values[static_cast<size_t>(emotion)] = 1.0;
    Value scores = ad::transpose(ad::matmul(probs, g.leaf(std::move(onehot))));  // 1 x T

    RetrievalResult res;
    res.emotion = emotion;
    res.window_begin = 0;
    int hard = argmax_smallest(scores.val().values);
    if (freeze) hard = freeze->index(hard);
    res.hard_index = hard;

    Value iota = index_row_leaf(g, 0, t);
    if (mode == RetrievalMode::kMask) {
        res.weights = Tensor::zeros({t});
        res.weights.values[static_cast<size_t>(hard)] = 1.0;
        res.feature = ad::slice_rows(features, hard, hard + 1);
        // Class-e probabilities are non-negative, so the score distribution
        // is the renormalised column itself.
        Value expectation =
            ad::div(ad::sum_all(ad::mul(scores, iota)), ad::sum_all(scores));
        res.soft_index = pin_to_hard_index(expectation, hard, freeze);
    } else {
        Value weights = ad::softmax_rows(ad::scale(scores, 1.0 / temperature));
        res.weights = Tensor({t}, weights.val().values);
        res.feature = ad::matmul(weights, features);
        res.soft_index = ad::sum_all(ad::mul(weights, iota));
    }
    return res;
}

RetrievalResult alignment_relaxation(Value anchor_feature, int anchor_index, Value other_stream,
                                     int relax_range, double index_weight, RetrievalMode mode,
                                     double temperature, FreezeContext* freeze) {
    ad::Graph& g = *anchor_feature.graph;
    const int t = other_stream.val().shape[0];
    if (anchor_index < 0 || anchor_index >= t) {
        throw PreconditionError("alignment_relaxation: anchor index " +
                                std::to_string(anchor_index) + " out of range for length " +
                                std::to_string(t));
    }
    const int lo = std::max(0, anchor_index - relax_range);
    const int hi = std::min(t - 1, anchor_index + relax_range);
    const int window = hi - lo + 1;

    std::vector<Value> scored;
    scored.reserve(static_cast<size_t>(window));
    for (int q = lo; q <= hi; ++q) {
        Value candidate = ad::slice_rows(other_stream, q, q + 1);
        Value sim = ad::cosine(anchor_feature, candidate);
        const double penalty = index_weight * std::abs(anchor_index - q);
        scored.push_back(ad::add_scalar(sim, -penalty));
    }
    Value scores = ad::stack_scalars(g, scored);  // 1 x window

    RetrievalResult res;
    res.window_begin = lo;
    int hard = lo + argmax_smallest(scores.val().values);
    if (relax_range == 0) hard = anchor_index;
    if (freeze) hard = freeze->index(hard);
    res.hard_index = hard;

    Value iota = index_row_leaf(g, lo, window);
    if (mode == RetrievalMode::kMask) {
        res.weights = Tensor::zeros({window});
        res.weights.values[static_cast<size_t>(hard - lo)] = 1.0;
        res.feature = ad::slice_rows(other_stream, hard, hard + 1);
        // Alignment scores may be negative; softmax turns them into the
        // window's score distribution.
        Value expectation = ad::sum_all(ad::mul(ad::softmax_rows(scores), iota));
        res.soft_index = pin_to_hard_index(expectation, hard, freeze);
    } else {
        Value weights = ad::softmax_rows(ad::scale(scores, 1.0 / temperature));
        res.weights = Tensor({window}, weights.val().values);
        res.feature = ad::matmul(weights, ad::slice_rows(other_stream, lo, hi + 1));
        res.soft_index = ad::sum_all(ad::mul(weights, iota));
    }
    return res;
}

// ---- losses ---------------------------------------------------------------

Value consensus_loss(Value target, Value pred, FreezeContext* freeze) {
    ad::Graph& g = *pred.graph;
    check_same_shape("consensus_loss", target.val(), pred.val());
    Tensor detached = target.val();
    if (freeze) detached = freeze->tensor(detached);
    Value pseudo = g.leaf(std::move(detached));
    return ad::scale(ad::sum_all(ad::mul(pseudo, ad::log(ad::add_scalar(pred, 1e-12)))), -1.0);
}

IndexLosses index_consensus_losses(const RetrievalResult& res_ve, const RetrievalResult& res_vs,
                                   const RetrievalResult& res_se, const RetrievalResult& res_sv,
                                   int sequence_length) {
    const double inv_t = 1.0 / static_cast<double>(sequence_length);
    IndexLosses out;
    Value dv = ad::scale(ad::sub(res_ve.soft_index, res_vs.soft_index), inv_t);
    out.video = ad::mul(dv, dv);
    Value ds = ad::scale(ad::sub(res_se.soft_index, res_sv.soft_index), inv_t);
    out.subtitle = ad::mul(ds, ds);
    return out;
}

LossParts LossBuild::parts() const {
    LossParts p;
    p.cs = cs.scalar();
    p.cmc = cmc.scalar();
    p.vc = vc.scalar();
    p.sc = sc.scalar();
    p.total = total.scalar();
    return p;
}

LossBuild build_episode_loss(ad::Graph& g, const dcin::ModelVars& vars, const Episode& episode,
                             const CclConfig& cfg, FreezeContext* freeze) {
    cfg.validate();
    if (episode.labels.empty()) {
        throw PreconditionError("episode_loss: empty label set in episode " + episode.id);
    }
    std::vector<int> labels = episode.labels;
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());

    dcin::Forward fwd = dcin::forward(g, vars, episode);
    Value p0 = dcin::classify(fwd.v0, dcin::Head::kVideo, vars.classifier);
    Value pL = dcin::classify(fwd.vL, dcin::Head::kVideo, vars.classifier);
    Value ps = dcin::classify(fwd.subtitle, dcin::Head::kSubtitle, vars.classifier);

    LossBuild out;
    out.cs = dcin::context_sensitive_loss(p0, pL, vars.config.margin);

    Value cmc_sum, vc_sum, sc_sum;
    bool first = true;
    for (int e : labels) {
        RetrievalResult r_ve =
            retrieve_most_relevant(pL, fwd.vL, e, cfg.mode, cfg.temperature, freeze);
        RetrievalResult r_sv =
            alignment_relaxation(r_ve.feature, r_ve.hard_index, fwd.subtitle, cfg.relax_range,
                                 cfg.index_weight, cfg.mode, cfg.temperature, freeze);
        RetrievalResult r_se =
            retrieve_most_relevant(ps, fwd.subtitle, e, cfg.mode, cfg.temperature, freeze);
        RetrievalResult r_vs =
            alignment_relaxation(r_se.feature, r_se.hard_index, fwd.vL, cfg.relax_range,
                                 cfg.index_weight, cfg.mode, cfg.temperature, freeze);

        Value target_v = dcin::classify(r_ve.feature, dcin::Head::kVideo, vars.classifier);
        Value pred_s = dcin::classify(r_sv.feature, dcin::Head::kSubtitle, vars.classifier);
        Value target_s = dcin::classify(r_se.feature, dcin::Head::kSubtitle, vars.classifier);
        Value pred_v = dcin::classify(r_vs.feature, dcin::Head::kVideo, vars.classifier);

        Value cmc_e = ad::add(consensus_loss(target_v, pred_s, freeze),
                              consensus_loss(target_s, pred_v, freeze));
        IndexLosses idx = index_consensus_losses(r_ve, r_vs, r_se, r_sv, episode.length());

        if (first) {
            cmc_sum = cmc_e;
            vc_sum = idx.video;
            sc_sum = idx.subtitle;
            first = false;
        } else {
            cmc_sum = ad::add(cmc_sum, cmc_e);
            vc_sum = ad::add(vc_sum, idx.video);
            sc_sum = ad::add(sc_sum, idx.subtitle);
        }
    }
    const double inv_labels = 1.0 / static_cast<double>(labels.size());
    out.cmc = ad::scale(cmc_sum, inv_labels);
    out.vc = ad::scale(vc_sum, inv_labels);
    out.sc = ad::scale(sc_sum, inv_labels);

    out.total = ad::add(
        ad::add(ad::add(ad::scale(out.cs, cfg.lambda_cs), ad::scale(out.cmc, cfg.lambda_cmc)),
                ad::scale(out.vc, cfg.lambda_vc)),
        ad::scale(out.sc, cfg.lambda_sc));
    return out;
}

LossParts episode_loss(const dcin::Model& model, const Episode& episode, const CclConfig& cfg) {
    ad::Graph g;
    dcin::ModelVars vars = dcin::bind_model(model, g);
    return build_episode_loss(g, vars, episode, cfg).parts();
}

LossParts episode_loss_grad(const dcin::Model& model, const Episode& episode,
                            const CclConfig& cfg, std::vector<Tensor>& grad_out) {
    ad::Graph g;
    dcin::ModelVars vars = dcin::bind_model(model, g);
    LossBuild build = build_episode_loss(g, vars, episode, cfg);
    LossParts parts = build.parts();
    std::vector<Tensor> grads = g.backward(build.total);
    if (grad_out.size() != vars.flat.size()) {
        throw ContractError("episode_loss_grad: gradient buffer size mismatch");
    }
    for (size_t i = 0; i < vars.flat.size(); ++i) {
        const Tensor& gi = grads[static_cast<size_t>(vars.flat[i].id)];
        for (size_t j = 0; j < gi.values.size(); ++j) grad_out[i].values[j] += gi.values[j];
    }
    return parts;
}

// ---- training ---------------------------------------------------------------

namespace {

void check_finite(const LossParts& parts, const std::string& episode_id) {
    struct Entry {
        const char* name;
        double value;
    };
    const Entry entries[] = {{"cs", parts.cs},   {"cmc", parts.cmc},    {"vc", parts.vc},
                             {"sc", parts.sc},   {"total", parts.total}};
    for (const Entry& e : entries) {
        if (!std::isfinite(e.value)) {
            throw NumericError("non-finite loss part '" + std::string(e.name) + "' (" +
                               std::to_string(e.value) + ") in episode " + episode_id);
        }
    }
}

struct Adam {
    double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t step_count = 0;
    std::vector<Tensor> m, v;

    Adam(const std::vector<Tensor*>& params, double lr_) : lr(lr_) {
        for (const Tensor* p : params) {
            m.push_back(Tensor::zeros(p->shape));
            v.push_back(Tensor::zeros(p->shape));
        }
    }

    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
        ++step_count;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor& p = *params[i];
            for (size_t j = 0; j < p.values.size(); ++j) {
                const double gj = grads[i].values[j];
                m[i].values[j] = beta1 * m[i].values[j] + (1.0 - beta1) * gj;
                v[i].values[j] = beta2 * v[i].values[j] + (1.0 - beta2) * gj * gj;
                const double mhat = m[i].values[j] / bc1;
                const double vhat = v[i].values[j] / bc2;
                p.values[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
};

}  // namespace

TrainLog train(dcin::Model& model, const std::vector<Episode>& episodes, const CclConfig& cfg,
               int epochs, uint64_t seed) {
    cfg.validate();
    if (episodes.empty()) throw PreconditionError("train: dataset is empty");
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");

    std::vector<Tensor*> params = model.parameters();
    Adam adam(params, cfg.learning_rate);
    Rng rng(seed);

    std::vector<size_t> order(episodes.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainLog log;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        rng.shuffle(order);
        EpochStats stats;
        stats.epoch = epoch;
        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
            std::vector<Tensor> grads;
            for (const Tensor* p : params) grads.push_back(Tensor::zeros(p->shape));
            for (size_t i = begin; i < end; ++i) {
                const Episode& ep = episodes[order[i]];
                LossParts parts = episode_loss_grad(model, ep, cfg, grads);
                check_finite(parts, ep.id);
                stats.cs += parts.cs;
                stats.cmc += parts.cmc;
                stats.vc += parts.vc;
                stats.sc += parts.sc;
                stats.total += parts.total;
            }
            const double inv = 1.0 / static_cast<double>(end - begin);
            for (Tensor& gt : grads) {
                for (double& v : gt.values) v *= inv;
            }
            adam.step(params, grads);
        }
        const double inv_n = 1.0 / static_cast<double>(episodes.size());
        stats.cs *= inv_n;
        stats.cmc *= inv_n;
        stats.vc *= inv_n;
        stats.sc *= inv_n;
        stats.total *= inv_n;
        log.epochs.push_back(stats);
    }
    return log;
}

void write_train_log(const TrainLog& log, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open training log for writing: " + path);
    os << "epoch,cs,cmc,vc,sc,total\n";
    char line[256];
    for (const EpochStats& e : log.epochs) {
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.cs,
                      e.cmc, e.vc, e.sc, e.total);
        os << line;
    }
    if (!os) throw IoError("short write to training log: " + path);
}

}  // namespace emoloc::ccl
