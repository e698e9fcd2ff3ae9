#include "pargraph/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace pargraph {

namespace {

double ratio_or_convention(double num, double den, double other_den) {
    if (den > 0) return num / den;
    return other_den == 0 ? 1.0 : 0.0;
}

double f1_of(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

double member_iou(const std::vector<int>& a, const std::vector<int>& b) {
    // inputs sorted ascending
    std::size_t i = 0, j = 0, inter = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) { ++inter; ++i; ++j; }
        else if (a[i] < b[j]) ++i;
        else ++j;
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return uni ? double(inter) / double(uni) : 0.0;
}

bool passes(double iou, double theta) { return theta >= 1.0 ? iou >= 1.0 : iou > theta; }

std::vector<std::vector<int>> sorted_groups(const std::vector<std::vector<int>>& groups) {
    std::vector<std::vector<int>> out = groups;
    for (auto& g : out) std::sort(g.begin(), g.end());
    return out;
}

}  // namespace

Prf multilabel_prf(const std::set<int>& pred, const std::set<int>& gt, int n_labels) {
    if (n_labels >= 0) {
        for (int a : pred)
            if (a < 0 || a >= n_labels) throw std::invalid_argument("multilabel_prf: label outside vocabulary");
        for (int a : gt)
            if (a < 0 || a >= n_labels) throw std::invalid_argument("multilabel_prf: label outside vocabulary");
    }
    if (pred.empty() && gt.empty()) return {1, 1, 1};
    if (pred.empty() || gt.empty()) return {0, 0, 0};
    std::size_t inter = 0;
    for (int a : pred) inter += gt.count(a);
    Prf out;
    out.p = double(inter) / double(pred.size());
    out.r = double(inter) / double(gt.size());
    out.f1 = f1_of(out.p, out.r);
    return out;
}

std::vector<GroupMatch> match_groups(const std::vector<std::vector<int>>& pred_in,
                                     const std::vector<std::vector<int>>& gt_in, double theta) {
    if (theta <= 0 || theta > 1) throw std::invalid_argument("match_groups: theta must be in (0,1]");
    const std::vector<std::vector<int>> pred = sorted_groups(pred_in);
    const std::vector<std::vector<int>> gt = sorted_groups(gt_in);
    const int np = int(pred.size()), ng = int(gt.size());

    std::vector<std::vector<double>> iou(std::size_t(np), std::vector<double>(std::size_t(ng), 0));
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < ng; ++j) iou[std::size_t(i)][std::size_t(j)] = member_iou(pred[std::size_t(i)], gt[std::size_t(j)]);

    std::vector<GroupMatch> out;
    if (np == 0 || ng == 0) return out;

    if (std::min(np, ng) <= 12) {
        // Exact maximum-total-IoU assignment: DP over subsets of the smaller
        // side. Swap so that gt is the smaller side.
        const bool swapped = ng > np;
        const int big = swapped ? ng : np;
        const int small = swapped ? np : ng;
        auto pair_iou = [&](int b, int s) { return swapped ? iou[std::size_t(s)][std::size_t(b)] : iou[std::size_t(b)][std::size_t(s)]; };

        const std::size_t n_masks = std::size_t(1) << small;
        std::vector<double> best(n_masks, -1.0);
        std::vector<std::vector<std::pair<int, int>>> take(n_masks);
        best[0] = 0.0;
        for (int b = 0; b < big; ++b) {
            std::vector<double> next = best;
            std::vector<std::vector<std::pair<int, int>>> next_take = take;
            for (std::size_t mask = 0; mask < n_masks; ++mask) {
                if (best[mask] < 0) continue;
                for (int s = 0; s < small; ++s) {
                    if (mask & (std::size_t(1) << s)) continue;
                    const double w = pair_iou(b, s);
                    if (!passes(w, theta)) continue;
                    const std::size_t m2 = mask | (std::size_t(1) << s);
                    if (best[mask] + w > next[m2] + 1e-15) {
                        next[m2] = best[mask] + w;
                        next_take[m2] = take[mask];
                        next_take[m2].emplace_back(b, s);
                    }
                }
            }
            best = std::move(next);
            take = std::move(next_take);
        }
        std::size_t arg = 0;
        for (std::size_t mask = 1; mask < n_masks; ++mask)
            if (best[mask] > best[arg] + 1e-15) arg = mask;
        for (const auto& [b, s] : take[arg]) {
            GroupMatch m;
            m.pred_index = swapped ? s : b;
            m.gt_index = swapped ? b : s;
            m.iou = iou[std::size_t(m.pred_index)][std::size_t(m.gt_index)];
            out.push_back(m);
        }
    } else {
        // Greedy by IoU, ties by smaller indices.
        std::vector<GroupMatch> cand;
        for (int i = 0; i < np; ++i)
            for (int j = 0; j < ng; ++j)
                if (passes(iou[std::size_t(i)][std::size_t(j)], theta)) cand.push_back({i, j, iou[std::size_t(i)][std::size_t(j)]});
        std::sort(cand.begin(), cand.end(), [](const GroupMatch& a, const GroupMatch& b) {
            if (a.iou != b.iou) return a.iou > b.iou;
            if (a.pred_index != b.pred_index) return a.pred_index < b.pred_index;
            return a.gt_index < b.gt_index;
        });
        std::vector<char> used_p(std::size_t(np), 0), used_g(std::size_t(ng), 0);
        for (const GroupMatch& m : cand) {
            if (used_p[std::size_t(m.pred_index)] || used_g[std::size_t(m.gt_index)]) continue;
            used_p[std::size_t(m.pred_index)] = used_g[std::size_t(m.gt_index)] = 1;
            out.push_back(m);
        }
    }
    std::sort(out.begin(), out.end(),
              [](const GroupMatch& a, const GroupMatch& b) { return a.pred_index < b.pred_index; });
    return out;
}

void SocialCounts::add_frame(const std::vector<std::vector<int>>& pred_groups,
                             const std::vector<std::set<int>>& pred_labels,
                             const std::vector<std::vector<int>>& gt_groups,
                             const std::vector<std::set<int>>& gt_labels, double theta) {
    if (pred_groups.size() != pred_labels.size() || gt_groups.size() != gt_labels.size())
        throw std::invalid_argument("social counts: group/label length mismatch");
    for (const std::set<int>& s : pred_labels) pred_total += double(s.size());
    for (const std::set<int>& s : gt_labels) gt_total += double(s.size());
    for (const GroupMatch& m : match_groups(pred_groups, gt_groups, theta)) {
        const std::set<int>& a = pred_labels[std::size_t(m.pred_index)];
        const std::set<int>& b = gt_labels[std::size_t(m.gt_index)];
        for (int x : a) overlap += double(b.count(x));
    }
}

Prf SocialCounts::prf() const {
    Prf out;
    out.p = ratio_or_convention(overlap, pred_total, gt_total);
    out.r = ratio_or_convention(overlap, gt_total, pred_total);
    out.f1 = f1_of(out.p, out.r);
    return out;
}

GroupDetection group_detection_scores(const std::vector<Partition>& pred,
                                      const std::vector<Partition>& gt) {
    if (pred.size() != gt.size())
        throw std::invalid_argument("group_detection_scores: frame count mismatch");

    const std::vector<double> thetas = {0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<double> matched(thetas.size(), 0);
    double total_pred = 0, total_gt = 0;
    double and_sum = 0, or_sum = 0;

    for (std::size_t f = 0; f < pred.size(); ++f) {
        if (pred[f].n_covered() != gt[f].n_covered())
            throw std::invalid_argument("group_detection_scores: subject sets differ in a frame");
        total_pred += double(pred[f].groups.size());
        total_gt += double(gt[f].groups.size());
        for (std::size_t t = 0; t < thetas.size(); ++t)
            matched[t] += double(match_groups(pred[f].groups, gt[f].groups, thetas[t]).size());

        const Tensor2 rp = partition_to_relation(pred[f]);
        const Tensor2 rg = partition_to_relation(gt[f]);
        for (int i = 0; i < rp.rows; ++i)
            for (int j = 0; j < rp.cols; ++j) {
                if (i == j) continue;
                const bool a = rp(i, j) != 0, b = rg(i, j) != 0;
                and_sum += (a && b) ? 1 : 0;
                or_sum += (a || b) ? 1 : 0;
            }
    }

    GroupDetection out;
    for (std::size_t t = 0; t < thetas.size(); ++t) {
        out.accuracy_recall.push_back(ratio_or_convention(matched[t], total_gt, total_pred));
        out.accuracy_precision.push_back(ratio_or_convention(matched[t], total_pred, total_gt));
    }
    out.iou_at_half = out.accuracy_recall[0];
    auto trapezoid = [&](const std::vector<double>& acc) {
        double area = 0;
        for (std::size_t t = 0; t + 1 < acc.size(); ++t) area += 0.5 * (acc[t] + acc[t + 1]) * 0.1;
        return area / 0.5;
    };
    out.iou_auc = trapezoid(out.accuracy_recall);
    out.iou_auc_precision = trapezoid(out.accuracy_precision);
    out.mat_iou = or_sum > 0 ? and_sum / or_sum : 1.0;
    return out;
}

double overall_f1(double f_i, double f_p, double f_g) { return (f_i + f_p + f_g) / 3.0; }

MetricsReport evaluate_frames(const std::vector<FrameAnnotation>& frames,
                              const std::vector<ParPrediction>& preds) {
    if (frames.size() != preds.size())
        throw std::invalid_argument("evaluate_frames: frame/prediction count mismatch");

    MetricsReport rep;
    rep.frames = long(frames.size());

    double pi = 0, ri = 0, fi = 0;
    long n_subjects = 0;
    SocialCounts social;
    double pg = 0, rg = 0, fg = 0;
    std::vector<Partition> pred_parts, gt_parts;

    for (std::size_t f = 0; f < frames.size(); ++f) {
        const FrameAnnotation& frame = frames[f];
        const ParPrediction& pred = preds[f];
        if (int(pred.actions.size()) != frame.n_subjects())
            throw std::invalid_argument("evaluate_frames: prediction does not cover the frame's subjects");

        for (int u = 0; u < frame.n_subjects(); ++u) {
            const Prf prf = multilabel_prf(pred.actions[std::size_t(u)], frame.subjects[std::size_t(u)].actions);
            pi += prf.p;
            ri += prf.r;
            fi += prf.f1;
            ++n_subjects;
        }

        std::vector<std::vector<int>> gt_groups;
        std::vector<std::set<int>> gt_labels;
        for (const GroupAnnotation& g : frame.groups) {
            if (g.members.size() < 2) continue;
            std::vector<int> idxs;
            for (int id : g.members) idxs.push_back(frame.subject_index(id));
            std::sort(idxs.begin(), idxs.end());
            gt_groups.push_back(std::move(idxs));
            gt_labels.push_back(g.activities);
        }
        social.add_frame(pred.partition.groups, pred.social, gt_groups, gt_labels);
        rep.gt_groups += long(gt_groups.size());
        rep.pred_groups += long(pred.partition.groups.size());

        const Prf prf_g = multilabel_prf(pred.global_activities, frame.global_activities);
        pg += prf_g.p;
        rg += prf_g.r;
        fg += prf_g.f1;

        pred_parts.push_back(pred.partition);
        gt_parts.push_back(ground_truth_partition(frame));
    }

    if (n_subjects > 0)
        rep.individual = {pi / double(n_subjects), ri / double(n_subjects), fi / double(n_subjects)};
    rep.subjects = n_subjects;
    rep.social = social.prf();
    if (!frames.empty())
        rep.global_act = {pg / double(rep.frames), rg / double(rep.frames), fg / double(rep.frames)};
    rep.overall = overall_f1(rep.individual.f1, rep.social.f1, rep.global_act.f1);
    rep.detection = group_detection_scores(pred_parts, gt_parts);
    return rep;
}

std::string report_to_json(const MetricsReport& r) {
    using nlohmann::json;
    auto prf = [](const Prf& x) { return json{{"p", x.p}, {"r", x.r}, {"f1", x.f1}}; };
    json j{{"individual", prf(r.individual)},
           {"social", prf(r.social)},
           {"global", prf(r.global_act)},
           {"overall_f1", r.overall},
           {"detection",
            {{"accuracy_recall", r.detection.accuracy_recall},
             {"accuracy_precision", r.detection.accuracy_precision},
             {"iou_at_0.5", r.detection.iou_at_half},
             {"iou_auc", r.detection.iou_auc},
             {"iou_auc_precision", r.detection.iou_auc_precision},
             {"mat_iou", r.detection.mat_iou},
             {"theta_note", "strict IoU > theta; theta=1.0 evaluated as IoU >= 1"}}},
           {"counts",
            {{"frames", r.frames},
             {"subjects", r.subjects},
             {"gt_groups", r.gt_groups},
             {"pred_groups", r.pred_groups}}}};
    return j.dump(2);
}

std::string report_to_table(const MetricsReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1);
    auto pct = [](double v) { return 100.0 * v; };
    os << "           P      R      F1\n";
    auto row = [&](const char* name, const Prf& x) {
        os << std::left << std::setw(11) << name << std::right << std::setw(5) << pct(x.p) << "  "
           << std::setw(5) << pct(x.r) << "  " << std::setw(5) << pct(x.f1) << "\n";
    };
    row("individual", r.individual);
    row("social", r.social);
    row("global", r.global_act);
    os << std::left << std::setw(11) << "overall" << std::right << std::setw(19) << pct(r.overall)
       << "\n";
    os << "\n";
    os << "IOU@0.5    " << std::right << std::setw(5) << pct(r.detection.iou_at_half) << "\n"
       << "IOU@AUC    " << std::setw(5) << pct(r.detection.iou_auc) << "\n"
       << "Mat.IOU    " << std::setw(5) << pct(r.detection.mat_iou) << "\n";
    os << "\n";
    os << "frames " << r.frames << "  subjects " << r.subjects << "  gt_groups " << r.gt_groups
       << "  pred_groups " << r.pred_groups << "\n";
    return os.str();
}

}  // namespace pargraph
