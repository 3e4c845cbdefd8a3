#include "emoloc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace emoloc::ad {

namespace {

double evaluate(const std::vector<Tensor*>& params, const LossBuilder& build) {
    Graph g;
    std::vector<Value> leaves;
    leaves.reserve(params.size());
    for (const Tensor* p : params) leaves.push_back(g.leaf(*p));
    return build(g, leaves).scalar();
}

}  // namespace

GradCheckReport finite_diff_check(const std::vector<Tensor*>& params, const LossBuilder& build,
                                  double eps) {
    // Analytic pass.
    std::vector<Tensor> analytic;
    {
        Graph g;
        std::vector<Value> leaves;
        leaves.reserve(params.size());
        for (const Tensor* p : params) leaves.push_back(g.leaf(*p));
        Value loss = build(g, leaves);
        std::vector<Tensor> grads = g.backward(loss);
        analytic.reserve(params.size());
        for (const Value& v : leaves) analytic.push_back(grads[static_cast<size_t>(v.id)]);
    }

    GradCheckReport report;
    for (size_t p = 0; p < params.size(); ++p) {
        Tensor& t = *params[p];
        for (size_t c = 0; c < t.values.size(); ++c) {
            const double saved = t.values[c];
            t.values[c] = saved + eps;
            const double f_plus = evaluate(params, build);
            t.values[c] = saved - eps;
            const double f_minus = evaluate(params, build);
            t.values[c] = saved;

            const double g_fd = (f_plus - f_minus) / (2.0 * eps);
            const double g_ad = analytic[p].values[c];
            const double denom = std::max(1e-8, std::abs(g_ad) + std::abs(g_fd));
            const double rel = std::abs(g_ad - g_fd) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_analytic = g_ad;
                report.worst_numeric = g_fd;
                report.worst_param = static_cast<int>(p);
                report.worst_coord = static_cast<int>(c);
            }
        }
    }
    return report;
}

}  // namespace emoloc::ad
