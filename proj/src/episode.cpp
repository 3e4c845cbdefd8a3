#include "emoloc/episode.hpp"

#include "emoloc/error.hpp"

namespace emoloc {

void Episode::validate() const {
    if (video.ndim() != 2 || subtitle.ndim() != 2) {
        throw PreconditionError("episode " + id + ": streams must be 2-d");
    }
    if (!video.same_shape(subtitle)) {
        throw PreconditionError("episode " + id + ": video " + video.shape_str() +
                                " and subtitle " + subtitle.shape_str() + " shapes differ");
    }
    if (labels.empty()) {
        throw PreconditionError("episode " + id + ": label set is empty");
    }
    const int t = length();
    for (const auto& [label, intervals] : gt) {
        (void)label;
        for (const Interval& iv : intervals) {
            if (iv.start < 0 || iv.start > iv.end || iv.end >= t) {
                throw PreconditionError("episode " + id + ": interval [" +
                                        std::to_string(iv.start) + ", " + std::to_string(iv.end) +
                                        "] out of range for length " + std::to_string(t));
            }
        }
    }
}

bool operator==(const Episode& a, const Episode& b) {
    return a.id == b.id && a.video == b.video && a.subtitle == b.subtitle &&
           a.labels == b.labels && a.gt == b.gt;
}

bool operator==(const Dataset& a, const Dataset& b) {
    return a.classes == b.classes && a.dim == b.dim && a.seed == b.seed &&
           a.generator == b.generator && a.episodes == b.episodes;
}

}  // namespace emoloc
