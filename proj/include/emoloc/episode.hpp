#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "emoloc/tensor.hpp"

namespace emoloc {

// Inclusive segment-index interval.
struct Interval {
    int start = 0;
    int end = 0;
};

inline bool operator==(const Interval& a, const Interval& b) {
    return a.start == b.start && a.end == b.end;
}

// One untrimmed clip: paired video/subtitle feature sequences, the clip's
// emotion labels, and (test split only) ground-truth intervals per label.
struct Episode {
    std::string id;
    Tensor video;     // T x d
    Tensor subtitle;  // T x d, row i co-occurs with video row i
    std::vector<int> labels;
    std::map<int, std::vector<Interval>> gt;

    int length() const { return video.shape.empty() ? 0 : video.shape[0]; }
    int dim() const { return video.shape.size() < 2 ? 0 : video.shape[1]; }

    // Throws on violated invariants (mismatched streams, empty labels,
    // out-of-range intervals).
    void validate() const;
};

bool operator==(const Episode& a, const Episode& b);

// One split of a dataset plus the header metadata of its file.
struct Dataset {
    int classes = 0;
    int dim = 0;
    uint64_t seed = 0;
    std::string generator;  // informational key=value summary
    std::vector<Episode> episodes;
};

bool operator==(const Dataset& a, const Dataset& b);

}  // namespace emoloc
