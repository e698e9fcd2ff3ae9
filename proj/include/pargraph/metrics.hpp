#pragma once

#include <set>
#include <string>
#include <vector>

#include "pargraph/scene.hpp"
#include "pargraph/training.hpp"

namespace pargraph {

struct Prf {
    double p = 0, r = 0, f1 = 0;
};

// Set-overlap precision/recall/F1 with the empty-set conventions: both empty
// -> (1,1,1); exactly one empty -> (0,0,0). n_labels >= 0 enables a vocabulary
// range check.
Prf multilabel_prf(const std::set<int>& pred, const std::set<int>& gt, int n_labels = -1);

struct GroupMatch {
    int pred_index = -1;
    int gt_index = -1;
    double iou = 0;
};

// One-to-one matching between predicted and ground-truth groups (member-index
// sets, >= 2 members each) maximizing total member IoU over pairs with
// IoU > theta (at theta = 1 the test is IoU >= 1, otherwise nothing could
// match). Exact assignment via subset DP on the smaller side; falls back to
// greedy-by-IoU when both sides exceed 12 groups (exact anyway for
// theta >= 0.5, where candidate pairs are mutually exclusive).
std::vector<GroupMatch> match_groups(const std::vector<std::vector<int>>& pred,
                                     const std::vector<std::vector<int>>& gt, double theta);

// Micro label counts for the social protocol; accumulates across frames.
struct SocialCounts {
    double overlap = 0;    // sum |pred-labels ∩ gt-labels| over matched pairs
    double pred_total = 0; // sum |pred-labels| over every predicted group
    double gt_total = 0;   // sum |gt-labels| over every ground-truth group

    void add_frame(const std::vector<std::vector<int>>& pred_groups,
                   const std::vector<std::set<int>>& pred_labels,
                   const std::vector<std::vector<int>>& gt_groups,
                   const std::vector<std::set<int>>& gt_labels, double theta = 0.5);
    Prf prf() const;
};

struct GroupDetection {
    // theta = 0.5, 0.6, ..., 1.0; recall-style (over GT groups) is primary,
    // precision-style (over predicted groups) reported alongside.
    std::vector<double> accuracy_recall;
    std::vector<double> accuracy_precision;
    double iou_at_half = 0;
    double iou_auc = 0;
    double iou_auc_precision = 0;
    double mat_iou = 0;
};

GroupDetection group_detection_scores(const std::vector<Partition>& pred,
                                      const std::vector<Partition>& gt);

double overall_f1(double f_i, double f_p, double f_g);

struct MetricsReport {
    Prf individual, social, global_act;
    double overall = 0;
    GroupDetection detection;
    long frames = 0, subjects = 0, gt_groups = 0, pred_groups = 0;
};

// Protocol I over subjects, II over groups (micro labels after IoU > 0.5
// matching), III over frames, plus the group-detection scores; predictions
// aligned index-wise with frames.
MetricsReport evaluate_frames(const std::vector<FrameAnnotation>& frames,
                              const std::vector<ParPrediction>& preds);

std::string report_to_json(const MetricsReport& r);
std::string report_to_table(const MetricsReport& r);

}  // namespace pargraph
