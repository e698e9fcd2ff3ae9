#pragma once

#include <set>
#include <vector>

#include "pargraph/tensor.hpp"

namespace pargraph {

struct BBox {
    double x = 0, y = 0, w = 0, h = 0;
    double area() const { return w * h; }
    // Midpoint of the bottom edge, the anchor used for subject distances.
    double anchor_x() const { return x + 0.5 * w; }
    double anchor_y() const { return y + h; }
};

struct SubjectAnnotation {
    int id = 0;
    BBox bbox;
    std::vector<double> feature;
    std::set<int> actions;
};

struct GroupAnnotation {
    std::set<int> members;      // subject ids
    std::set<int> activities;   // social activity ids
};

struct FrameAnnotation {
    long frame_id = 0;
    int image_width = 0;
    int image_height = 0;
    std::vector<SubjectAnnotation> subjects;
    std::vector<GroupAnnotation> groups;  // one-member groups are allowed; they count as singletons
    std::set<int> global_activities;

    int n_subjects() const { return int(subjects.size()); }
    int subject_index(int id) const;  // position in subjects, -1 if absent
    void validate() const;
    // Feature matrix, one row per subject in stored order.
    Tensor2 feature_matrix() const;
};

// Disjoint cover of all subjects (by index into FrameAnnotation::subjects):
// groups of size >= 2 plus singleton indices.
struct Partition {
    std::vector<std::vector<int>> groups;
    std::vector<int> singletons;

    int n_covered() const;
    void validate(int n_subjects) const;
};

// Teacher-forcing partition: annotated groups of size >= 2 become groups,
// everyone else a singleton.
Partition ground_truth_partition(const FrameAnnotation& frame);

// Binary co-membership matrix: 1 iff two subjects share an annotated group
// of size >= 2; diagonal fixed to 1.
Tensor2 ground_truth_relation(const FrameAnnotation& frame);

// Mask selecting the off-diagonal entries (1 = keep), used to exclude the
// diagonal from relation losses and scores.
Tensor2 offdiag_mask(int n);

}  // namespace pargraph
