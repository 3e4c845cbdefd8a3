#pragma once

#include <string>
#include <vector>

#include "emoloc/dcin.hpp"
#include "emoloc/episode.hpp"

namespace emoloc::inference {

// Per-segment, per-emotion matching scores:
// m[i][e] = (P(e|v_i^L) + P(e|s_i)) / 2, entries in [0,1].
struct ScoreMatrix {
    std::string episode_id;
    Tensor scores;  // T x N
};

struct Detection {
    std::string episode_id;
    int emotion = -1;
    int start = 0;  // inclusive
    int end = 0;    // inclusive
    double confidence = 0.0;
};

ScoreMatrix matching_scores(const dcin::Model& model, const Episode& episode);

// An emotion is detected when its best score exceeds gamma1; the interval
// grows from that peak while adjacent scores exceed gamma2. At most one
// detection per emotion. Requires 0 <= gamma2 <= gamma1 <= 1.
std::vector<Detection> detect(const ScoreMatrix& m, double gamma1, double gamma2);

std::vector<Detection> detect_all(const dcin::Model& model, const std::vector<Episode>& episodes,
                                  double gamma1, double gamma2);

// One line per detection: episode-id,emotion,start,end,confidence.
void write_detections(const std::vector<Detection>& detections, const std::string& path);
std::vector<Detection> read_detections(const std::string& path);

}  // namespace emoloc::inference
