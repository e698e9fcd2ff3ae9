#include "pargraph/scene.hpp"

#include <algorithm>
#include <string>

namespace pargraph {

int FrameAnnotation::subject_index(int id) const {
    for (std::size_t i = 0; i < subjects.size(); ++i)
        if (subjects[i].id == id) return int(i);
    return -1;
}

void FrameAnnotation::validate() const {
    const std::string where = "frame " + std::to_string(frame_id) + ": ";
    if (subjects.empty()) throw DataError(where + "no subjects");
    std::set<int> ids;
    const std::size_t dim = subjects.front().feature.size();
    for (const SubjectAnnotation& s : subjects) {
        if (!ids.insert(s.id).second)
            throw DataError(where + "duplicate subject id " + std::to_string(s.id));
        if (s.bbox.w <= 0 || s.bbox.h <= 0)
            throw DataError(where + "degenerate bbox for subject " + std::to_string(s.id));
        if (s.feature.size() != dim)
            throw DataError(where + "inconsistent feature dim for subject " + std::to_string(s.id));
        for (int a : s.actions)
            if (a < 0) throw DataError(where + "negative action id");
    }
    std::set<int> grouped;
    for (const GroupAnnotation& grp : groups) {
        if (grp.members.empty()) throw DataError(where + "empty group");
        for (int m : grp.members) {
            if (!ids.count(m))
                throw DataError(where + "group cites absent subject id " + std::to_string(m));
            if (!grouped.insert(m).second)
                throw DataError(where + "subject " + std::to_string(m) + " appears in two groups");
        }
        for (int a : grp.activities)
            if (a < 0) throw DataError(where + "negative social activity id");
    }
    for (int a : global_activities)
        if (a < 0) throw DataError(where + "negative global activity id");
}

Tensor2 FrameAnnotation::feature_matrix() const {
    const int n = n_subjects();
    const int d = int(subjects.front().feature.size());
    Tensor2 f(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) f(i, j) = subjects[i].feature[j];
    return f;
}

int Partition::n_covered() const {
    int n = int(singletons.size());
    for (const auto& grp : groups) n += int(grp.size());
    return n;
}

void Partition::validate(int n_subjects) const {
    std::vector<char> seen(n_subjects, 0);
    auto mark = [&](int idx) {
        if (idx < 0 || idx >= n_subjects)
            throw std::invalid_argument("Partition: index out of range");
        if (seen[idx]) throw std::invalid_argument("Partition: overlapping membership");
        seen[idx] = 1;
    };
    for (const auto& grp : groups) {
        if (grp.size() < 2) throw std::invalid_argument("Partition: group smaller than 2");
        for (int idx : grp) mark(idx);
    }
    for (int idx : singletons) mark(idx);
    for (int i = 0; i < n_subjects; ++i)
        if (!seen[i]) throw std::invalid_argument("Partition: subject " + std::to_string(i) + " uncovered");
}

Partition ground_truth_partition(const FrameAnnotation& frame) {
    Partition p;
    std::vector<char> covered(frame.n_subjects(), 0);
    for (const GroupAnnotation& grp : frame.groups) {
        if (grp.members.size() < 2) continue;
        std::vector<int> idxs;
        for (int id : grp.members) {
            const int idx = frame.subject_index(id);
            idxs.push_back(idx);
            covered[idx] = 1;
        }
        std::sort(idxs.begin(), idxs.end());
        p.groups.push_back(std::move(idxs));
    }
    for (int i = 0; i < frame.n_subjects(); ++i)
        if (!covered[i]) p.singletons.push_back(i);
    p.validate(frame.n_subjects());
    return p;
}

Tensor2 ground_truth_relation(const FrameAnnotation& frame) {
    const int n = frame.n_subjects();
    Tensor2 r(n, n, 0.0);
    for (int i = 0; i < n; ++i) r(i, i) = 1.0;
    Partition p = ground_truth_partition(frame);
    for (const auto& grp : p.groups)
        for (int a : grp)
            for (int b : grp)
                r(a, b) = 1.0;
    return r;
}

Tensor2 offdiag_mask(int n) {
    Tensor2 m(n, n, 1.0);
    for (int i = 0; i < n; ++i) m(i, i) = 0.0;
    return m;
}

}  // namespace pargraph
