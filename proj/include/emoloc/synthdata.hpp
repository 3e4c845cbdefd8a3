#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emoloc/episode.hpp"
#include "emoloc/inference.hpp"

namespace emoloc::synth {

// Controls for the synthetic episode generator: per-class prototype vectors
// are planted over unit Gaussian noise in both modalities, with an optional
// integer shift of the subtitle copy of each event.
struct SynthConfig {
    int classes = 6;
    int dim = 16;
    int t_min = 32;
    int t_max = 32;
    int train_episodes = 500;
    int test_episodes = 100;
    int events_min = 1;
    int events_max = 4;
    int event_len_min = 3;
    int event_len_max = 6;
    double snr = 2.0;            // signal-to-noise ratio sigma_signal/sigma_noise
    double feature_scale = 5.0;  // absolute noise magnitude; signal = snr * feature_scale
    int subtitle_shift = 0;      // events shift by uniform [-delta, +delta] in S
    double proto_corr = 0.9;     // cross-modal prototype correlation
    uint64_t seed = 42;

    void validate() const;
    std::string summary() const;  // key=value text for dataset headers
};

struct GeneratedData {
    Dataset train;  // labels only
    Dataset test;   // labels + ground-truth intervals
};

// Deterministic in the seed; both splits share the same class prototypes.
GeneratedData generate(const SynthConfig& cfg);

// Line-oriented text container; save/load round-trips exactly.
void save(const Dataset& dataset, const std::string& path);
Dataset load(const std::string& path);

// One uniformly random valid interval (confidence 1) per ground-truth
// (episode, label) pair.
std::vector<inference::Detection> random_baseline(const Dataset& test, uint64_t seed);

}  // namespace emoloc::synth
