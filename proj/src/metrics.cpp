#include "emoloc/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "emoloc/error.hpp"

namespace emoloc::metrics {

using inference::Detection;

double temporal_iou(Interval a, Interval b) {
    if (a.start > a.end || b.start > b.end) {
        throw PreconditionError("temporal_iou: invalid interval");
    }
    const int inter =
        std::max(0, std::min(a.end, b.end) - std::max(a.start, b.start) + 1);
    const int len_a = a.end - a.start + 1;
    const int len_b = b.end - b.start + 1;
    const int uni = len_a + len_b - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

// Deterministic confidence ranking.
bool rank_before(const Detection& a, const Detection& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.episode_id != b.episode_id) return a.episode_id < b.episode_id;
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
}

}  // namespace

EvalReport recall_and_miou(const std::vector<Detection>& detections,
                           const std::vector<Episode>& ground_truth,
                           const std::vector<double>& thresholds) {
    EvalReport report;
    report.detections = static_cast<int>(detections.size());

    double iou_sum = 0.0;
    int instances = 0;
    std::map<double, int> hits;
    for (double th : thresholds) hits[th] = 0;

    for (const Episode& ep : ground_truth) {
        for (const auto& [emotion, intervals] : ep.gt) {
            if (intervals.empty()) continue;
            ++instances;
            const Detection* best = nullptr;
            for (const Detection& d : detections) {
                if (d.episode_id != ep.id || d.emotion != emotion) continue;
                if (best == nullptr || rank_before(d, *best)) best = &d;
            }
            double iou = 0.0;
            if (best != nullptr) {
                for (const Interval& iv : intervals) {
                    iou = std::max(iou, temporal_iou({best->start, best->end}, iv));
                }
            }
            iou_sum += iou;
            for (double th : thresholds) {
                if (iou >= th) ++hits[th];
            }
        }
    }

    report.gt_instances = instances;
    report.mean_iou = instances == 0 ? 0.0 : 100.0 * iou_sum / instances;
    for (double th : thresholds) {
        report.recall_at[th] = instances == 0 ? 0.0 : 100.0 * hits[th] / instances;
    }
    return report;
}

EvalReport mean_ap(const std::vector<Detection>& detections,
                   const std::vector<Episode>& ground_truth,
                   const std::vector<double>& thresholds) {
    EvalReport report;
    report.detections = static_cast<int>(detections.size());

    std::set<int> classes;
    for (const Episode& ep : ground_truth) {
        for (const auto& [emotion, intervals] : ep.gt) {
            if (!intervals.empty()) classes.insert(emotion);
        }
    }

    double ap_total = 0.0;
    for (int emotion : classes) {
        // Ground-truth instances of this class: (episode, interval) pairs.
        struct GtInstance {
            const Episode* episode;
            Interval interval;
        };
        std::vector<GtInstance> gts;
        for (const Episode& ep : ground_truth) {
            auto it = ep.gt.find(emotion);
            if (it == ep.gt.end()) continue;
            for (const Interval& iv : it->second) gts.push_back({&ep, iv});
        }

        std::vector<Detection> ranked;
        for (const Detection& d : detections) {
            if (d.emotion == emotion) ranked.push_back(d);
        }
        std::sort(ranked.begin(), ranked.end(), rank_before);

        double ap_mean = 0.0;
        for (double th : thresholds) {
            std::vector<char> matched(gts.size(), 0);
            int tp = 0;
            double precision_sum = 0.0;
            for (size_t rank = 0; rank < ranked.size(); ++rank) {
                const Detection& d = ranked[rank];
                int best = -1;
                double best_iou = 0.0;
                for (size_t gi = 0; gi < gts.size(); ++gi) {
                    if (matched[gi] || gts[gi].episode->id != d.episode_id) continue;
                    const double iou = temporal_iou({d.start, d.end}, gts[gi].interval);
                    if (iou >= th && iou > best_iou) {
                        best_iou = iou;
                        best = static_cast<int>(gi);
                    }
                }
                if (best >= 0) {
                    matched[static_cast<size_t>(best)] = 1;
                    ++tp;
                    precision_sum += static_cast<double>(tp) / static_cast<double>(rank + 1);
                }
            }
            ap_mean += gts.empty() ? 0.0 : precision_sum / static_cast<double>(gts.size());
        }
        ap_mean /= static_cast<double>(thresholds.size());

        report.per_class.push_back(
            {emotion, 100.0 * ap_mean, static_cast<int>(gts.size())});
        report.gt_instances += static_cast<int>(gts.size());
        ap_total += ap_mean;
    }
    report.mean_ap = classes.empty() ? 0.0 : 100.0 * ap_total / static_cast<double>(classes.size());
    return report;
}

EvalReport evaluate(const std::vector<Detection>& detections,
                    const std::vector<Episode>& ground_truth,
                    const std::vector<double>& recall_thresholds,
                    const std::vector<double>& ap_thresholds) {
    EvalReport recall = recall_and_miou(detections, ground_truth, recall_thresholds);
    EvalReport ap = mean_ap(detections, ground_truth, ap_thresholds);
    EvalReport out = recall;
    out.mean_ap = ap.mean_ap;
    out.per_class = ap.per_class;
    return out;
}

void write_report(const EvalReport& report, std::ostream& os) {
    char line[128];
    for (const auto& [th, pct] : report.recall_at) {
        std::snprintf(line, sizeof(line), "recall@%.2g=%.4f\n", th, pct);
        os << line;
    }
    std::snprintf(line, sizeof(line), "miou=%.4f\n", report.mean_iou);
    os << line;
    std::snprintf(line, sizeof(line), "map=%.4f\n", report.mean_ap);
    os << line;
    os << "gt_instances=" << report.gt_instances << "\n";
    os << "detections=" << report.detections << "\n";
}

void write_per_class_csv(const EvalReport& report, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open per-class table for writing: " + path);
    os << "emotion,ap,gt_count\n";
    char line[128];
    for (const ClassAp& c : report.per_class) {
        std::snprintf(line, sizeof(line), "%d,%.4f,%d\n", c.emotion, c.ap, c.gt_count);
        os << line;
    }
}

}  // namespace emoloc::metrics
