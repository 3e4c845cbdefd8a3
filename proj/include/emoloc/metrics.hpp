#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "emoloc/episode.hpp"
#include "emoloc/inference.hpp"

namespace emoloc::metrics {

// IoU of two inclusive segment intervals, counted in segments.
double temporal_iou(Interval a, Interval b);

struct ClassAp {
    int emotion = -1;
    double ap = 0.0;  // percentage, averaged over IoU thresholds
    int gt_count = 0;
};

struct EvalReport {
    std::map<double, double> recall_at;  // IoU threshold -> percentage
    double mean_iou = 0.0;               // percentage
    double mean_ap = 0.0;                // percentage
    std::vector<ClassAp> per_class;
    int gt_instances = 0;
    int detections = 0;
};

// Recall-at-1 protocol: each ground-truth (episode, emotion) instance is
// scored by its top-confidence detection; the instance IoU is the max over
// that instance's ground-truth intervals, 0 when nothing was detected.
EvalReport recall_and_miou(const std::vector<inference::Detection>& detections,
                           const std::vector<Episode>& ground_truth,
                           const std::vector<double>& thresholds = {0.5, 0.7});

// Ranked-detection average precision with greedy IoU matching, averaged
// over thresholds, macro-averaged over classes with ground truth.
EvalReport mean_ap(const std::vector<inference::Detection>& detections,
                   const std::vector<Episode>& ground_truth,
                   const std::vector<double>& thresholds = {0.1, 0.3, 0.5, 0.7});

EvalReport evaluate(const std::vector<inference::Detection>& detections,
                    const std::vector<Episode>& ground_truth,
                    const std::vector<double>& recall_thresholds = {0.5, 0.7},
                    const std::vector<double>& ap_thresholds = {0.1, 0.3, 0.5, 0.7});

// key=value lines.
void write_report(const EvalReport& report, std::ostream& os);
void write_per_class_csv(const EvalReport& report, const std::string& path);

}  // namespace emoloc::metrics
