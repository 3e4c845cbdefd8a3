#pragma once

#include <functional>
#include <vector>

#include "emoloc/graph.hpp"
#include "emoloc/tensor.hpp"

namespace emoloc::ad {

// Builds a fresh record over leaves snapshotting the current parameter
// values (one leaf per entry of `params`, same order) and returns the
// scalar loss node.
using LossBuilder = std::function<Value(Graph&, const std::vector<Value>&)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    int worst_param = -1;
    int worst_coord = -1;
};

// Central-difference verification of reverse-mode gradients:
// rel err = |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|), maximised over every
// coordinate of every parameter. Parameters are perturbed in place and
// restored. The builder must be deterministic in the parameter values.
GradCheckReport finite_diff_check(const std::vector<Tensor*>& params, const LossBuilder& build,
                                  double eps = 1e-5);

}  // namespace emoloc::ad
