#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emoloc/dcin.hpp"
#include "emoloc/episode.hpp"
#include "emoloc/graph.hpp"

namespace emoloc::ccl {

enum class RetrievalMode { kMask, kSoft };

RetrievalMode mode_from_string(const std::string& name);
std::string to_string(RetrievalMode mode);

struct CclConfig {
    double index_weight = 0.1;   // beta: index-distance weight in the alignment score
    int relax_range = 2;         // R candidates per side; 0 = hard alignment
    RetrievalMode mode = RetrievalMode::kMask;
    double temperature = 0.1;    // soft-mode softmax temperature
    double lambda_cs = 0.001;
    double lambda_cmc = 1.0;
    double lambda_vc = 1.0;
    double lambda_sc = 0.7;
    double learning_rate = 1e-4;
    int batch_size = 32;

    void validate() const;  // throws ConfigError
};

// Record/replay store for values that the loss treats as constants
// (detached pseudo-label rows, hard argmax selections). Finite-difference
// verification replays the recorded constants so the probed function has
// the same stop-gradient semantics as the reverse-mode program.
struct FreezeContext {
    bool replay = false;

    int index(int fresh);
    double scalar(double fresh);
    Tensor tensor(const Tensor& fresh);
    // Switches to (or rewinds) replay; call after each build of the loss.
    void begin_replay();

private:
    std::vector<int> indices_;
    std::vector<double> scalars_;
    std::vector<Tensor> tensors_;
    size_t i_cursor_ = 0, s_cursor_ = 0, t_cursor_ = 0;
};

// Outcome of one emotion->stream retrieval. `weights` spans the candidate
// window (the full sequence for retrieve_most_relevant): exactly one-hot in
// mask mode, a softmax in soft mode. `soft_index` is the differentiable
// index surrogate; in mask mode its value equals the hard index while its
// gradient follows the expectation over the window's score distribution.
struct RetrievalResult {
    int emotion = -1;
    int hard_index = 0;
    int window_begin = 0;
    Tensor weights;         // numeric, length = window size
    ad::Value feature;      // 1 x d
    ad::Value soft_index;   // scalar
};

// Picks the sequence position whose class-e probability is maximal
// (ties -> smallest index). probs: T x N rows summing to 1; features: T x d.
RetrievalResult retrieve_most_relevant(ad::Value probs, ad::Value features, int emotion,
                                       RetrievalMode mode, double temperature,
                                       FreezeContext* freeze = nullptr);

// Scores candidates within `relax_range` of the anchor by
// cosine(anchor, candidate) - index_weight * |anchor - candidate| and
// selects per mode. relax_range = 0 returns the anchor position.
RetrievalResult alignment_relaxation(ad::Value anchor_feature, int anchor_index,
                                     ad::Value other_stream, int relax_range, double index_weight,
                                     RetrievalMode mode, double temperature,
                                     FreezeContext* freeze = nullptr);

// Cross-entropy of `pred` against a gradient-detached copy of `target`
// (both 1 x N distributions); log is stabilised with +1e-12.
ad::Value consensus_loss(ad::Value target, ad::Value pred, FreezeContext* freeze = nullptr);

struct IndexLosses {
    ad::Value video;     // (softidx(v_e) - softidx(v_s))^2, indices / T
    ad::Value subtitle;  // (softidx(s_e) - softidx(s_v))^2, indices / T
};
IndexLosses index_consensus_losses(const RetrievalResult& res_ve, const RetrievalResult& res_vs,
                                   const RetrievalResult& res_se, const RetrievalResult& res_sv,
                                   int sequence_length);

struct LossParts {
    double cs = 0.0, cmc = 0.0, vc = 0.0, sc = 0.0, total = 0.0;
};

struct LossBuild {
    ad::Value total, cs, cmc, vc, sc;
    LossParts parts() const;
};

// Full training objective for one episode:
// lambda1*L_cs + lambda2*L_cmc + lambda3*L_vc + lambda4*L_sc, with the CCL
// terms averaged over the episode's ground-truth labels.
LossBuild build_episode_loss(ad::Graph& g, const dcin::ModelVars& vars, const Episode& episode,
                             const CclConfig& cfg, FreezeContext* freeze = nullptr);

LossParts episode_loss(const dcin::Model& model, const Episode& episode, const CclConfig& cfg);

// As above but also accumulates d(total)/d(param) into grad_out, which must
// be zero-initialised tensors matching Model::parameters().
LossParts episode_loss_grad(const dcin::Model& model, const Episode& episode,
                            const CclConfig& cfg, std::vector<Tensor>& grad_out);

struct EpochStats {
    int epoch = 0;
    double cs = 0.0, cmc = 0.0, vc = 0.0, sc = 0.0, total = 0.0;
};

struct TrainLog {
    std::vector<EpochStats> epochs;
};

// Adam (beta1 0.9, beta2 0.999, eps 1e-8) over shuffled batches; one step
// per batch on the mean batch gradient. Deterministic given the seed.
// Throws NumericError naming the episode and loss part on non-finite loss.
TrainLog train(dcin::Model& model, const std::vector<Episode>& episodes, const CclConfig& cfg,
               int epochs, uint64_t seed);

void write_train_log(const TrainLog& log, const std::string& path);

}  // namespace emoloc::ccl
